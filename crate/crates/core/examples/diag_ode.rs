//! Scratch diagnostic: stability of the fixed-budget random-system cells
//! across independent seed draws.

use acds_core::activelearn::{mix_seed, Criterion};
use acds_core::studies::{run_study, Study, StudyContext, StudyOverrides};

fn cell(ctx: &StudyContext, criterion: Criterion, s2: f64, si: u64, tag: u64) -> (f64, f64) {
    let mut gammas = Vec::new();
    let mut l2s = Vec::new();
    for rep in 0..20u64 {
        let run_seed = mix_seed(tag, &[si, criterion as u64, rep]);
        let record = run_study(
            ctx,
            Study::OdeRandom,
            criterion,
            s2,
            run_seed,
            &StudyOverrides::default(),
        )
        .expect("run");
        let m = record.metrics.expect("metrics");
        gammas.push(m.gamma as f64);
        l2s.push(m.l2_beta);
    }
    (
        gammas.iter().sum::<f64>() / gammas.len() as f64,
        l2s.iter().sum::<f64>() / l2s.len() as f64,
    )
}

fn main() {
    let ctx = StudyContext::default();
    let refs = [0.44, 0.62, 1.26];
    for tag in [0xF1u64, 3, 7, 11] {
        for (si, &s2) in [0.16, 0.36, 0.64].iter().enumerate() {
            let (ag, al2) = cell(&ctx, Criterion::Acds, s2, si as u64, tag);
            let (_, ml2) = cell(&ctx, Criterion::MaximinOnly, s2, si as u64, tag);
            let gamma_ok = (ag - refs[si]).abs() <= 0.6;
            let l2_ok = al2 <= ml2;
            println!(
                "tag {tag:#x} s2={s2}: ACDS gamma {ag:.3} (ref {} +-0.6 {}) l2 {al2:.3} vs maximin {ml2:.3} ({})",
                refs[si],
                if gamma_ok { "OK" } else { "MISS" },
                if l2_ok { "OK" } else { "MISS" },
            );
        }
    }
}
