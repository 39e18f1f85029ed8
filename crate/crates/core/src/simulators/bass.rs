//! The Bass adoption model dF/dt = (1 − F)(p + qF) and its oracle.
//!
//! The model has a closed-form solution, so observations are generated
//! exactly. Unlike the other studies, measurement noise lands on the
//! *state* F by default: the learner's regressors are powers of the noisy
//! state while the rate response stays clean, which is what makes this
//! study an errors-in-variables stress test.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::activelearn::DataOracle;
use crate::basis::{build_monomial_library, TermLibrary};
use crate::error::{Error, Result};
use crate::simulators::noise::{add_noise, NoiseTarget};
use crate::types::{DesignPoint, EstimatedEquation, Observation};

/// Closed-form adoption fraction and its rate at time `t`:
/// F(t) = (1 − e^{−(p+q)t}) / (1 + (q/p)e^{−(p+q)t}), dF/dt = (1−F)(p+qF).
pub fn bass_solution(p: f64, q: f64, t: f64) -> Result<(f64, f64)> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "innovation coefficient p must be positive, got {p}"
        )));
    }
    if !(q >= 0.0 && q.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "imitation coefficient q must be nonnegative, got {q}"
        )));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "time must be nonnegative, got {t}"
        )));
    }
    let decay = (-(p + q) * t).exp();
    let f = (1.0 - decay) / (1.0 + q / p * decay);
    let dfdt = (1.0 - f) * (p + q * f);
    Ok((f, dfdt))
}

/// Draws study coefficients p ~ U[0, 0.03], q ~ U[0.3, 0.5]. A zero draw
/// for p is nudged to the smallest positive double to keep the closed
/// form defined.
pub fn sample_bass_coefficients<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    let p: f64 = rng.random_range(0.0..0.03);
    let q: f64 = rng.random_range(0.3..0.5);
    (p.max(f64::MIN_POSITIVE), q)
}

/// dF/dt = (1 − F)(p + qF) = p + (q − p)F − qF² as sparse equations over
/// the monomial library of the given degree.
pub fn bass_truth_equations(p: f64, q: f64, library: &TermLibrary) -> Result<Vec<EstimatedEquation>> {
    let i0 = library.index_by_name("1")?;
    let i1 = library.index_by_name("u")?;
    let i2 = library.index_by_name("u^2")?;
    Ok(vec![EstimatedEquation::from_sparse(
        library.len(),
        &[(i0, p), (i1, q - p), (i2, -q)],
        0.0,
    )?])
}

/// The study's term library: polynomials of F up to the fifth degree.
pub fn bass_library() -> TermLibrary {
    build_monomial_library(1, 5).expect("static library construction")
}

/// Observation source for the adoption study: exact closed-form values
/// with Gaussian noise of variance `sigma2` on the configured target
/// (state F by default).
pub struct BassOracle {
    p: f64,
    q: f64,
    sigma2: f64,
    target: NoiseTarget,
    rng: ChaCha8Rng,
}

impl BassOracle {
    pub fn new(p: f64, q: f64, sigma2: f64, target: NoiseTarget, rng: ChaCha8Rng) -> Result<Self> {
        bass_solution(p, q, 0.0)?;
        Ok(Self {
            p,
            q,
            sigma2,
            target,
            rng,
        })
    }
}

impl DataOracle for BassOracle {
    fn observe(&mut self, points: &[DesignPoint]) -> Result<Vec<Observation>> {
        let clean: Vec<Observation> = points
            .iter()
            .map(|pt| {
                if pt.dim() != 1 {
                    return Err(Error::DimensionMismatch {
                        context: "Bass oracle query",
                        expected: 1,
                        actual: pt.dim(),
                    });
                }
                let (f, dfdt) = bass_solution(self.p, self.q, pt.coord(0))?;
                Observation::new(pt.clone(), vec![f], vec![dfdt], vec![])
            })
            .collect::<Result<_>>()?;
        add_noise(&clean, self.sigma2, self.target, &mut self.rng)
    }
}
