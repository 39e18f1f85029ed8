//! Second-order finite-difference stencils on uniform grids: central in
//! the interior, one-sided at the ends. Shared by the field solvers.

/// First derivative of `u` sampled at spacing `step`. Needs ≥ 3 nodes.
pub(crate) fn first_derivative(u: &[f64], step: f64) -> Vec<f64> {
    let n = u.len();
    debug_assert!(n >= 3);
    let mut d = vec![0.0; n];
    d[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * step);
    for i in 1..n - 1 {
        d[i] = (u[i + 1] - u[i - 1]) / (2.0 * step);
    }
    d[n - 1] = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * step);
    d
}

/// Second derivative of `u` sampled at spacing `step`. Needs ≥ 4 nodes.
pub(crate) fn second_derivative(u: &[f64], step: f64) -> Vec<f64> {
    let n = u.len();
    debug_assert!(n >= 4);
    let s2 = step * step;
    let mut d = vec![0.0; n];
    d[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / s2;
    for i in 1..n - 1 {
        d[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / s2;
    }
    d[n - 1] = (2.0 * u[n - 1] - 5.0 * u[n - 2] + 4.0 * u[n - 3] - u[n - 4]) / s2;
    d
}

/// Time derivative at the middle of three consecutive levels.
pub(crate) fn central_time_derivative(before: &[f64], after: &[f64], dt: f64) -> Vec<f64> {
    before
        .iter()
        .zip(after)
        .map(|(b, a)| (a - b) / (2.0 * dt))
        .collect()
}

/// Time derivative at the first of three consecutive levels (one-sided,
/// second order).
pub(crate) fn forward_time_derivative(
    first: &[f64],
    second: &[f64],
    third: &[f64],
    dt: f64,
) -> Vec<f64> {
    first
        .iter()
        .zip(second)
        .zip(third)
        .map(|((a, b), c)| (-3.0 * a + 4.0 * b - c) / (2.0 * dt))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_converge_on_a_smooth_field_including_the_ends() {
        let n = 201;
        let step = std::f64::consts::PI / (n - 1) as f64;
        let u: Vec<f64> = (0..n).map(|i| (i as f64 * step).sin()).collect();
        let d1 = first_derivative(&u, step);
        let d2 = second_derivative(&u, step);
        for i in 0..n {
            let x = i as f64 * step;
            assert!((d1[i] - x.cos()).abs() < 5.0 * step * step, "d1 at {x}");
            assert!((d2[i] + x.sin()).abs() < 20.0 * step, "d2 at {x}");
        }
        // Interior second derivative is second-order accurate.
        for i in 1..n - 1 {
            let x = i as f64 * step;
            assert!((d2[i] + x.sin()).abs() < 2.0 * step * step, "d2 interior {x}");
        }
    }

    #[test]
    fn stencils_are_exact_on_quadratics() {
        let u: Vec<f64> = (0..5).map(|i| {
            let x = i as f64 * 0.5;
            1.0 + 2.0 * x + 3.0 * x * x
        })
        .collect();
        let d1 = first_derivative(&u, 0.5);
        let d2 = second_derivative(&u, 0.5);
        for i in 0..5 {
            let x = i as f64 * 0.5;
            assert!((d1[i] - (2.0 + 6.0 * x)).abs() < 1e-12);
            assert!((d2[i] - 6.0).abs() < 1e-12);
        }
        let t1 = forward_time_derivative(&u[0..1], &u[1..2], &u[2..3], 0.5);
        assert!((t1[0] - 2.0).abs() < 1e-12);
        let t2 = central_time_derivative(&u[0..1], &u[2..3], 0.5);
        assert!((t2[0] - (2.0 + 6.0 * 0.5)).abs() < 1e-12);
    }
}
