//! Scratch diagnostic: stability of the three-way design comparison on the
//! planar diffusion study across independent seed draws.

use acds_core::activelearn::{mix_seed, Criterion};
use acds_core::studies::{run_study, Study, StudyContext, StudyOverrides};

fn cell(
    ctx: &StudyContext,
    criterion: Criterion,
    reps: u64,
    seed_tag: u64,
) -> (Vec<f64>, f64, f64) {
    let mut l2s = Vec::new();
    for rep in 0..reps {
        let run_seed = mix_seed(seed_tag, &[0, criterion as u64, rep]);
        let record = run_study(
            ctx,
            Study::Diffusion2d,
            criterion,
            0.04,
            run_seed,
            &StudyOverrides::default(),
        )
        .expect("run");
        let m = record.metrics.expect("metrics");
        l2s.push(m.l2_beta);
    }
    let mean = l2s.iter().sum::<f64>() / l2s.len() as f64;
    let mut sorted = l2s.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    (l2s, mean, median)
}

fn main() {
    let ctx = StudyContext::default();
    let tags: &[u64] = &[0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8];
    for &tag in tags {
        let (a_l2, a_mean, a_med) = cell(&ctx, Criterion::Acds, 20, tag);
        let (d_l2, d_mean, d_med) = cell(&ctx, Criterion::DOptimalOnly, 20, tag);
        let (m_l2, m_mean, m_med) = cell(&ctx, Criterion::MaximinOnly, 20, tag);
        let worst = |v: &[f64]| v.iter().cloned().fold(0.0_f64, f64::max);
        println!(
            "tag {tag:#x}: ACDS mean {a_mean:.3} med {a_med:.3} max {:.2} | Dopt mean {d_mean:.3} med {d_med:.3} max {:.2} | maximin mean {m_mean:.3} med {m_med:.3} max {:.2} | order {} sep {:.2}",
            worst(&a_l2),
            worst(&d_l2),
            worst(&m_l2),
            if a_mean <= d_mean && d_mean <= m_mean { "OK " } else { "BAD" },
            a_mean / m_mean,
        );
    }
}
