//! Derivative-free minimization of hyperparameter objectives: a standard
//! Nelder–Mead simplex search with box clamping.

/// Options controlling the simplex search.
#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    /// Maximum objective evaluations.
    pub max_evals: usize,
    /// Relative spread of simplex objective values at which to stop.
    pub ftol: f64,
    /// Simplex diameter at which to stop.
    pub xtol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 200,
            ftol: 1e-9,
            xtol: 1e-7,
        }
    }
}

/// Result of a simplex search.
#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub n_evals: usize,
}

fn clamp(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Minimizes `f` starting from `x0` with initial per-coordinate steps
/// `step`, keeping all iterates inside the box `[lo, hi]`. Non-finite
/// objective values are treated as +infinity, so the search backs away from
/// regions where the objective cannot be evaluated.
pub fn minimize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    step: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &NelderMeadOptions,
) -> MinimizeResult {
    let dim = x0.len();
    assert!(dim > 0 && step.len() == dim && lo.len() == dim && hi.len() == dim);
    let mut n_evals = 0usize;
    let mut eval = |x: &[f64], n_evals: &mut usize| -> f64 {
        *n_evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    // Initial simplex: x0 plus one perturbed vertex per coordinate. If
    // clamping would collapse a vertex onto x0 (start at a bound), step the
    // other way.
    let mut start = x0.to_vec();
    clamp(&mut start, lo, hi);
    let mut simplex: Vec<Vec<f64>> = vec![start.clone()];
    for i in 0..dim {
        let mut v = start.clone();
        v[i] += step[i];
        clamp(&mut v, lo, hi);
        if v[i] == start[i] {
            v[i] = (start[i] - step[i]).clamp(lo[i], hi[i]);
        }
        simplex.push(v);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|v| eval(v, &mut n_evals)).collect();

    while n_evals < opts.max_evals {
        // Order vertices best to worst.
        let mut idx: Vec<usize> = (0..simplex.len()).collect();
        idx.sort_by(|&a, &b| fvals[a].partial_cmp(&fvals[b]).unwrap());
        let reorder_s: Vec<Vec<f64>> = idx.iter().map(|&i| simplex[i].clone()).collect();
        let reorder_f: Vec<f64> = idx.iter().map(|&i| fvals[i]).collect();
        simplex = reorder_s;
        fvals = reorder_f;

        let f_best = fvals[0];
        let f_worst = fvals[dim];
        let spread_small = (f_worst - f_best).abs() <= opts.ftol * (1.0 + f_best.abs());
        let diameter = simplex[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0_f64, f64::max)
            })
            .fold(0.0_f64, f64::max);
        if spread_small && diameter <= opts.xtol {
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; dim];
        for v in &simplex[..dim] {
            for i in 0..dim {
                centroid[i] += v[i] / dim as f64;
            }
        }

        let worst = simplex[dim].clone();
        let mut reflected: Vec<f64> = (0..dim)
            .map(|i| centroid[i] + (centroid[i] - worst[i]))
            .collect();
        clamp(&mut reflected, lo, hi);
        let f_reflected = eval(&reflected, &mut n_evals);

        if f_reflected < fvals[0] {
            // Try expanding past the reflection.
            let mut expanded: Vec<f64> = (0..dim)
                .map(|i| centroid[i] + 2.0 * (centroid[i] - worst[i]))
                .collect();
            clamp(&mut expanded, lo, hi);
            let f_expanded = eval(&expanded, &mut n_evals);
            if f_expanded < f_reflected {
                simplex[dim] = expanded;
                fvals[dim] = f_expanded;
            } else {
                simplex[dim] = reflected;
                fvals[dim] = f_reflected;
            }
        } else if f_reflected < fvals[dim - 1] {
            simplex[dim] = reflected;
            fvals[dim] = f_reflected;
        } else {
            // Contract toward the better of worst/reflected.
            let (anchor, f_anchor) = if f_reflected < fvals[dim] {
                (&reflected, f_reflected)
            } else {
                (&worst, fvals[dim])
            };
            let mut contracted: Vec<f64> = (0..dim)
                .map(|i| centroid[i] + 0.5 * (anchor[i] - centroid[i]))
                .collect();
            clamp(&mut contracted, lo, hi);
            let f_contracted = eval(&contracted, &mut n_evals);
            if f_contracted < f_anchor {
                simplex[dim] = contracted;
                fvals[dim] = f_contracted;
            } else {
                // Shrink everything toward the best vertex.
                for v in 1..=dim {
                    for i in 0..dim {
                        simplex[v][i] = simplex[0][i] + 0.5 * (simplex[v][i] - simplex[0][i]);
                    }
                    clamp(&mut simplex[v], lo, hi);
                    fvals[v] = eval(&simplex[v], &mut n_evals);
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=dim {
        if fvals[i] < fvals[best] {
            best = i;
        }
    }
    MinimizeResult {
        x: simplex[best].clone(),
        f: fvals[best],
        n_evals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic() {
        let f = |x: &[f64]| (x[0] - 1.5).powi(2) + 2.0 * (x[1] + 0.5).powi(2);
        let r = minimize(
            f,
            &[0.0, 0.0],
            &[0.5, 0.5],
            &[-10.0, -10.0],
            &[10.0, 10.0],
            &NelderMeadOptions {
                max_evals: 500,
                ..Default::default()
            },
        );
        assert!((r.x[0] - 1.5).abs() < 1e-4, "x = {:?}", r.x);
        assert!((r.x[1] + 0.5).abs() < 1e-4, "x = {:?}", r.x);
        assert!(r.f < 1e-7);
    }

    #[test]
    fn respects_bounds() {
        // Unconstrained minimum at 5, box caps at 2.
        let f = |x: &[f64]| (x[0] - 5.0).powi(2);
        let r = minimize(
            f,
            &[0.0],
            &[0.5],
            &[-2.0],
            &[2.0],
            &NelderMeadOptions::default(),
        );
        assert!(r.x[0] <= 2.0 + 1e-12);
        assert!((r.x[0] - 2.0).abs() < 1e-3, "x = {:?}", r.x);
    }

    #[test]
    fn survives_infinite_regions() {
        // Objective is infinite left of zero; minimum at 1.
        let f = |x: &[f64]| {
            if x[0] < 0.0 {
                f64::NAN
            } else {
                (x[0] - 1.0).powi(2)
            }
        };
        let r = minimize(
            f,
            &[0.5],
            &[0.4],
            &[-5.0],
            &[5.0],
            &NelderMeadOptions::default(),
        );
        assert!((r.x[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn start_at_bound_builds_valid_simplex() {
        let f = |x: &[f64]| x[0] * x[0];
        let r = minimize(
            f,
            &[2.0],
            &[0.5],
            &[-2.0],
            &[2.0],
            &NelderMeadOptions::default(),
        );
        assert!(r.x[0].abs() < 1e-3);
    }
}
