//! Measurement-noise injection for simulated observations.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::types::Observation;

/// Which field of an observation receives measurement noise.
///
/// Time-derivative noise models instruments that measure rates (the ODE
/// and field studies); state noise models instruments that measure the
/// state itself, so the error propagates into every basis term built from
/// it (the adoption-curve study).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseTarget {
    TimeDerivative,
    State,
}

/// Adds i.i.d. zero-mean Gaussian noise with variance `sigma2` to the
/// targeted field of each observation. `sigma2 = 0` returns the
/// observations unchanged without consuming randomness.
pub fn add_noise<R: Rng + ?Sized>(
    observations: &[Observation],
    sigma2: f64,
    target: NoiseTarget,
    rng: &mut R,
) -> Result<Vec<Observation>> {
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise variance must be finite and nonnegative, got {sigma2}"
        )));
    }
    if sigma2 == 0.0 {
        return Ok(observations.to_vec());
    }
    let normal = Normal::new(0.0, sigma2.sqrt())
        .map_err(|e| Error::InvalidArgument(format!("noise distribution: {e}")))?;
    observations
        .iter()
        .map(|obs| {
            let mut state = obs.state.clone();
            let mut time_derivative = obs.time_derivative.clone();
            let field = match target {
                NoiseTarget::TimeDerivative => &mut time_derivative,
                NoiseTarget::State => &mut state,
            };
            for v in field.iter_mut() {
                *v += normal.sample(rng);
            }
            Observation::new(
                obs.point.clone(),
                state,
                time_derivative,
                obs.spatial_derivatives.clone(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::DesignPoint;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat_observations(n: usize) -> Vec<Observation> {
        (0..n)
            .map(|i| {
                Observation::new(
                    DesignPoint::scalar(i as f64).unwrap(),
                    vec![1.0],
                    vec![2.0],
                    vec![],
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn zero_variance_is_identity() {
        let obs = flat_observations(5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noisy = add_noise(&obs, 0.0, NoiseTarget::TimeDerivative, &mut rng).unwrap();
        assert_eq!(obs, noisy);
        // No randomness consumed: the stream continues from the start.
        let mut fresh = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(rng.random::<u64>(), fresh.random::<u64>());
    }

    #[test]
    fn noise_lands_on_the_requested_field() {
        let obs = flat_observations(3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let on_deriv = add_noise(&obs, 0.09, NoiseTarget::TimeDerivative, &mut rng).unwrap();
        for (a, b) in obs.iter().zip(&on_deriv) {
            assert_eq!(a.state, b.state);
            assert_ne!(a.time_derivative, b.time_derivative);
        }
        let on_state = add_noise(&obs, 0.09, NoiseTarget::State, &mut rng).unwrap();
        for (a, b) in obs.iter().zip(&on_state) {
            assert_ne!(a.state, b.state);
            assert_eq!(a.time_derivative, b.time_derivative);
        }
    }

    #[test]
    fn sample_variance_matches_sigma2() {
        let obs = flat_observations(100_000);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sigma2 = 0.36;
        let noisy = add_noise(&obs, sigma2, NoiseTarget::TimeDerivative, &mut rng).unwrap();
        let residuals: Vec<f64> = noisy
            .iter()
            .map(|o| o.time_derivative[0] - 2.0)
            .collect();
        let n = residuals.len() as f64;
        let mean = residuals.iter().sum::<f64>() / n;
        let var = residuals.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0);
        assert!((var - sigma2).abs() / sigma2 < 0.02, "sample variance {var}");
    }

    #[test]
    fn fixed_seed_reproduces_the_noise() {
        let obs = flat_observations(10);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            add_noise(&obs, 0.25, NoiseTarget::State, &mut rng).unwrap()
        };
        assert_eq!(draw(7), draw(7));
        assert_ne!(draw(7), draw(8));
    }

    #[test]
    fn negative_variance_is_rejected() {
        let obs = flat_observations(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(add_noise(&obs, -1.0, NoiseTarget::State, &mut rng).is_err());
    }
}
