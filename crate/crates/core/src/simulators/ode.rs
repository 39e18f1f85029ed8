//! ODE systems with polynomial right-hand sides, an adaptive Runge–Kutta
//! integrator, and the observation oracle built on them.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::activelearn::DataOracle;
use crate::basis::{build_monomial_library, Atom, TermLibrary};
use crate::error::{Error, Result};
use crate::simulators::noise::{add_noise, NoiseTarget};
use crate::types::{DesignPoint, EstimatedEquation, Observation};

/// A first-order system dy/dt = f(y) whose right-hand side is a linear
/// combination of state monomials, one coefficient row per component.
#[derive(Debug, Clone)]
pub struct OdeSpec {
    library: TermLibrary,
    coefficients: Vec<Vec<f64>>,
    y0: Vec<f64>,
    horizon: f64,
}

impl OdeSpec {
    pub fn new(
        library: TermLibrary,
        coefficients: Vec<Vec<f64>>,
        y0: Vec<f64>,
        horizon: f64,
    ) -> Result<Self> {
        let d = library.state_dim();
        if library.max_derivative_order() > 0
            || (0..library.len())
                .any(|j| library.term(j).factors().iter().any(|(a, _)| matches!(a, Atom::Coord(_))))
        {
            return Err(Error::InvalidArgument(
                "ODE right-hand sides must use state monomials only".into(),
            ));
        }
        if coefficients.len() != d || y0.len() != d {
            return Err(Error::DimensionMismatch {
                context: "OdeSpec components",
                expected: d,
                actual: coefficients.len().min(y0.len()),
            });
        }
        for row in &coefficients {
            if row.len() != library.len() {
                return Err(Error::DimensionMismatch {
                    context: "OdeSpec coefficient row",
                    expected: library.len(),
                    actual: row.len(),
                });
            }
            if row.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite("OdeSpec coefficients"));
            }
        }
        if y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("OdeSpec initial condition"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        Ok(Self {
            library,
            coefficients,
            y0,
            horizon,
        })
    }

    pub fn dimension(&self) -> usize {
        self.y0.len()
    }

    pub fn initial_condition(&self) -> &[f64] {
        &self.y0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn library(&self) -> &TermLibrary {
        &self.library
    }

    /// Evaluates dy/dt at a state vector.
    pub fn rhs(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.dimension());
        debug_assert_eq!(out.len(), self.dimension());
        let k = self.library.len();
        // Term values are shared across components; evaluate once.
        let mut terms = vec![1.0; k];
        for (j, t) in terms.iter_mut().enumerate() {
            for (atom, power) in self.library.term(j).factors() {
                let base = match atom {
                    Atom::State(s) => y[*s],
                    _ => unreachable!("validated at construction"),
                };
                *t *= base.powi(*power as i32);
            }
        }
        for (r, o) in out.iter_mut().enumerate() {
            *o = self
                .coefficients[r]
                .iter()
                .zip(&terms)
                .map(|(c, t)| c * t)
                .sum();
        }
    }

    /// The system as sparse equations over this spec's library, for
    /// scoring recovered equations.
    pub fn truth_equations(&self) -> Vec<EstimatedEquation> {
        self.coefficients
            .iter()
            .map(|row| EstimatedEquation::from_dense(row.clone(), 0.0).expect("validated"))
            .collect()
    }
}

/// The two-component damped-rotation system
/// dy₁/dt = −a·y₁ + b·y₂, dy₂/dt = −b·y₁ − a·y₂ with y(0) = (2, 0),
/// expressed over the full monomial library of the given degree.
pub fn linear_system_spec(a: f64, b: f64, max_degree: u32, horizon: f64) -> Result<OdeSpec> {
    let library = build_monomial_library(2, max_degree)?;
    let k = library.len();
    let i1 = library.index_by_name("u1")?;
    let i2 = library.index_by_name("u2")?;
    let mut c1 = vec![0.0; k];
    c1[i1] = -a;
    c1[i2] = b;
    let mut c2 = vec![0.0; k];
    c2[i1] = -b;
    c2[i2] = -a;
    OdeSpec::new(library, vec![c1, c2], vec![2.0, 0.0], horizon)
}

/// Closed-form solution of [`linear_system_spec`]'s system:
/// y₁ = 2e^{−at}cos(bt), y₂ = −2e^{−at}sin(bt).
pub fn linear_system_solution(a: f64, b: f64, t: f64) -> [f64; 2] {
    let decay = 2.0 * (-a * t).exp();
    [decay * (b * t).cos(), -decay * (b * t).sin()]
}

/// Draws the damped-rotation system with a ~ U[0.5, 1.5], b ~ U[2, 3].
pub fn sample_random_coeff_system<R: Rng + ?Sized>(
    rng: &mut R,
    max_degree: u32,
    horizon: f64,
) -> Result<OdeSpec> {
    let a = rng.random_range(0.5..1.5);
    let b = rng.random_range(2.0..3.0);
    linear_system_spec(a, b, max_degree, horizon)
}

/// Adaptive step control for the embedded Runge–Kutta pair.
#[derive(Debug, Clone)]
pub struct Rk45Options {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Hard cap on accepted plus rejected steps.
    pub max_steps: usize,
}

impl Default for Rk45Options {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-9,
            max_steps: 2_000_000,
        }
    }
}

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
// Fifth-order solution weights (k7 has weight zero).
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
// Difference between the fifth- and embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates dy/dt = f(t, y) from `t0` through the sorted `eval_times`,
/// returning the state at each of them. Steps land exactly on every eval
/// time; local error per step is held to `abs_tol + rel_tol·|y|` by the
/// embedded fourth-order estimate.
pub fn integrate_rk45<F>(
    f: F,
    y0: &[f64],
    t0: f64,
    eval_times: &[f64],
    opts: &Rk45Options,
) -> Result<Vec<Vec<f64>>>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    if !(opts.rel_tol > 0.0 && opts.abs_tol > 0.0) {
        return Err(Error::InvalidArgument(
            "integration tolerances must be positive".into(),
        ));
    }
    let d = y0.len();
    if d == 0 {
        return Err(Error::InvalidArgument("empty state".into()));
    }
    let mut prev = t0;
    for &t in eval_times {
        if !(t >= prev && t.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "eval times must be finite, nondecreasing, and at least t0 = {t0}; got {t} after {prev}"
            )));
        }
        prev = t;
    }

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; d]; 7];
    let mut y_stage = vec![0.0; d];
    let mut y_next = vec![0.0; d];
    let mut out = Vec::with_capacity(eval_times.len());
    let span = eval_times.last().map_or(1.0, |&te| (te - t0).max(1.0));
    let mut h = span * 1e-4;
    let mut n_steps = 0usize;

    for &target in eval_times {
        while t < target {
            if n_steps >= opts.max_steps {
                return Err(Error::Instability(format!(
                    "integration exceeded {} steps at t = {t}",
                    opts.max_steps
                )));
            }
            n_steps += 1;
            // A truncated step lands exactly on the target so lookup
            // times are hit without floating-point slivers.
            let lands_on_target = h >= target - t;
            let h_step = if lands_on_target { target - t } else { h };
            if h_step < 1e-14 * t.abs().max(1.0) {
                return Err(Error::Instability(format!(
                    "integration step size underflow at t = {t}"
                )));
            }

            f(t, &y, &mut k[0]);
            for stage in 0..6 {
                for i in 0..d {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(stage + 1) {
                        acc += A[stage][j] * kj[i];
                    }
                    y_stage[i] = y[i] + h_step * acc;
                }
                let t_stage = t + C[stage] * h_step;
                let (head, tail) = k.split_at_mut(stage + 1);
                let _ = head;
                f(t_stage, &y_stage, &mut tail[0]);
            }
            let mut err_norm2 = 0.0;
            for i in 0..d {
                let mut acc5 = 0.0;
                let mut err = 0.0;
                for (j, kj) in k.iter().enumerate() {
                    acc5 += B5[j] * kj[i];
                    err += E[j] * kj[i];
                }
                y_next[i] = y[i] + h_step * acc5;
                let scale = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_next[i].abs());
                let r = h_step * err / scale;
                err_norm2 += r * r;
            }
            let err_norm = (err_norm2 / d as f64).sqrt();
            if !err_norm.is_finite() || y_next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Instability(format!(
                    "integration produced non-finite values at t = {t}"
                )));
            }
            let factor = if err_norm == 0.0 {
                5.0
            } else {
                (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err_norm <= 1.0 {
                t = if lands_on_target { target } else { t + h_step };
                std::mem::swap(&mut y, &mut y_next);
                // Grow from the attempted step, not the possibly truncated
                // remainder to the target.
                if !lands_on_target {
                    h *= factor;
                } else if factor < 1.0 {
                    h = h_step * factor;
                }
            } else {
                h = h_step * factor;
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// Solves the system at the given times and packages full observations:
/// state y(t) and time derivative f(y(t)) evaluated exactly from the
/// right-hand side.
pub fn solve_ode(
    spec: &OdeSpec,
    eval_times: &[f64],
    opts: &Rk45Options,
) -> Result<Vec<Observation>> {
    if eval_times.iter().any(|&t| t < 0.0 || t > spec.horizon()) {
        return Err(Error::InvalidArgument(format!(
            "eval times must lie within [0, {}]",
            spec.horizon()
        )));
    }
    let states = integrate_rk45(
        |_t, y, out| spec.rhs(y, out),
        spec.initial_condition(),
        0.0,
        eval_times,
        opts,
    )?;
    let d = spec.dimension();
    eval_times
        .iter()
        .zip(states)
        .map(|(&t, y)| {
            let mut dy = vec![0.0; d];
            spec.rhs(&y, &mut dy);
            Observation::new(DesignPoint::scalar(t)?, y, dy, vec![])
        })
        .collect()
}

/// Precomputed noiseless trajectory over a fixed time grid, shared by
/// oracles across replications.
#[derive(Debug)]
pub struct OdeTable {
    times: Vec<f64>,
    observations: Vec<Observation>,
}

impl OdeTable {
    /// Integrates once over the sorted, distinct `eval_times`.
    pub fn build(spec: &OdeSpec, eval_times: &[f64], opts: &Rk45Options) -> Result<Self> {
        if eval_times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "table times must be strictly increasing".into(),
            ));
        }
        let observations = solve_ode(spec, eval_times, opts)?;
        Ok(Self {
            times: eval_times.to_vec(),
            observations,
        })
    }

    /// The noiseless observation at time `t`, which must match a table
    /// time to within 1e-9.
    pub fn lookup(&self, t: f64) -> Result<&Observation> {
        lookup_sorted(&self.times, t).map(|i| &self.observations[i])
    }
}

/// Index of `x` in an ascending grid `xs`, within absolute tolerance 1e-9.
pub(crate) fn lookup_sorted(xs: &[f64], x: f64) -> Result<usize> {
    const TOL: f64 = 1e-9;
    let i = xs.partition_point(|&v| v < x);
    for cand in [i.saturating_sub(1), i] {
        if let Some(&v) = xs.get(cand) {
            if (v - x).abs() <= TOL {
                return Ok(cand);
            }
        }
    }
    Err(Error::DataSource(format!(
        "query {x} does not lie on the precomputed grid"
    )))
}

/// Observation source for ODE studies: noiseless states from the
/// precomputed trajectory, Gaussian noise of variance `sigma2` on the
/// time-derivative responses.
pub struct OdeOracle {
    table: Arc<OdeTable>,
    sigma2: f64,
    rng: ChaCha8Rng,
}

impl OdeOracle {
    pub fn new(table: Arc<OdeTable>, sigma2: f64, rng: ChaCha8Rng) -> Self {
        Self { table, sigma2, rng }
    }
}

impl DataOracle for OdeOracle {
    fn observe(&mut self, points: &[DesignPoint]) -> Result<Vec<Observation>> {
        let clean: Vec<Observation> = points
            .iter()
            .map(|p| {
                if p.dim() != 1 {
                    return Err(Error::DimensionMismatch {
                        context: "ODE oracle query",
                        expected: 1,
                        actual: p.dim(),
                    });
                }
                self.table.lookup(p.coord(0)).cloned()
            })
            .collect::<Result<_>>()?;
        add_noise(&clean, self.sigma2, NoiseTarget::TimeDerivative, &mut self.rng)
    }
}
