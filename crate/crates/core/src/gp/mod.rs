//! Gaussian-process surrogates with anisotropic squared-exponential
//! kernels.
//!
//! The covariance between inputs `a` and `b` is
//! `tau2 * exp(-sum_s (a_s - b_s)^2 / (2 * omega_s))`, observation noise
//! `sigma02` is added on the diagonal, and the constant mean is profiled
//! out of the likelihood. The posterior mean is differentiable, and first
//! and second partial derivatives are available in closed form — these
//! stand in for derivatives of the latent dynamics when the equation
//! library must be evaluated at unobserved locations. Leave-one-out
//! residuals come from the factorized covariance without refitting.

pub mod optim;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::DesignPoint;
use optim::{minimize, NelderMeadOptions};

/// Kernel and noise hyperparameters on the raw data scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    /// Signal variance.
    pub tau2: f64,
    /// Squared-lengthscale per input coordinate.
    pub omega: Vec<f64>,
    /// Observation noise variance added on the covariance diagonal.
    pub sigma02: f64,
}

impl GpHyperparams {
    /// Validates positivity and finiteness.
    pub fn validate(&self) -> Result<()> {
        let ok = self.tau2.is_finite()
            && self.tau2 > 0.0
            && !self.omega.is_empty()
            && self.omega.iter().all(|w| w.is_finite() && *w > 0.0)
            && self.sigma02.is_finite()
            && self.sigma02 >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid GP hyperparameters: {self:?}"
            )))
        }
    }
}

/// Squared-exponential covariance between two points.
pub fn kernel(a: &DesignPoint, b: &DesignPoint, h: &GpHyperparams) -> Result<f64> {
    if a.dim() != b.dim() || a.dim() != h.omega.len() {
        return Err(Error::DimensionMismatch {
            context: "kernel",
            expected: h.omega.len(),
            actual: a.dim().max(b.dim()),
        });
    }
    let mut q = 0.0;
    for s in 0..a.dim() {
        let d = a.coord(s) - b.coord(s);
        q += d * d / (2.0 * h.omega[s]);
    }
    Ok(h.tau2 * (-q).exp())
}

/// Dense covariance matrix of the training inputs, noise included.
fn covariance_matrix(inputs: &[DesignPoint], h: &GpHyperparams) -> Result<DMatrix<f64>> {
    let n = inputs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = h.tau2 + h.sigma02;
        for j in (i + 1)..n {
            let v = kernel(&inputs[i], &inputs[j], h)?;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// First escalation step of the diagonal jitter, as a fraction of `tau2`.
const JITTER_INITIAL_FRACTION: f64 = 1e-8;
/// Jitter ceiling as a fraction of `tau2`; beyond this the factorization
/// is abandoned.
const JITTER_MAX_FRACTION: f64 = 1e-4;

struct Factorized {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

/// Cholesky-factorizes a covariance matrix, escalating a diagonal jitter
/// from `1e-8 * tau2` by doubling up to `1e-4 * tau2` if factorization
/// fails outright.
fn factor_covariance(cov: &DMatrix<f64>, tau2: f64) -> Result<Factorized> {
    if let Some(chol) = Cholesky::new(cov.clone()) {
        return Ok(Factorized { chol, jitter: 0.0 });
    }
    let mut jitter = JITTER_INITIAL_FRACTION * tau2;
    let cap = JITTER_MAX_FRACTION * tau2;
    while jitter <= cap {
        let mut jittered = cov.clone();
        for i in 0..cov.nrows() {
            jittered[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(jittered) {
            return Ok(Factorized { chol, jitter });
        }
        jitter *= 2.0;
    }
    Err(Error::Conditioning(format!(
        "covariance factorization failed even with jitter {cap:.3e}"
    )))
}

/// A fitted Gaussian-process surrogate.
#[derive(Debug, Clone)]
pub struct GpModel {
    hyperparams: GpHyperparams,
    train_inputs: Vec<DesignPoint>,
    mu: f64,
    /// `cov^{-1} (y - mu 1)`.
    alpha: DVector<f64>,
    /// Full covariance inverse (needed for leave-one-out residuals).
    kinv: DMatrix<f64>,
    jitter: f64,
    log_likelihood2: f64,
}

impl GpModel {
    /// Builds the surrogate at fixed hyperparameters (no optimization).
    pub fn with_hyperparams(
        inputs: &[DesignPoint],
        outputs: &[f64],
        hyperparams: GpHyperparams,
    ) -> Result<Self> {
        hyperparams.validate()?;
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("GP needs training data".into()));
        }
        if inputs.len() != outputs.len() {
            return Err(Error::DimensionMismatch {
                context: "GP training data",
                expected: inputs.len(),
                actual: outputs.len(),
            });
        }
        let p = hyperparams.omega.len();
        if inputs.iter().any(|x| x.dim() != p) {
            return Err(Error::DimensionMismatch {
                context: "GP input dimension",
                expected: p,
                actual: inputs.iter().map(|x| x.dim()).find(|&d| d != p).unwrap(),
            });
        }
        if outputs.iter().any(|y| !y.is_finite()) {
            return Err(Error::NonFinite("GP training outputs"));
        }

        let n = inputs.len();
        let cov = covariance_matrix(inputs, &hyperparams)?;
        let fac = factor_covariance(&cov, hyperparams.tau2)?;
        let y = DVector::from_column_slice(outputs);
        let ones = DVector::from_element(n, 1.0);
        let kinv_y = fac.chol.solve(&y);
        let kinv_1 = fac.chol.solve(&ones);
        let denom = ones.dot(&kinv_1);
        if !(denom > 0.0) {
            return Err(Error::Conditioning(
                "profiled mean denominator is not positive".into(),
            ));
        }
        let mu = ones.dot(&kinv_y) / denom;
        let alpha = &kinv_y - &kinv_1 * mu;
        let centered = &y - &ones * mu;
        let quad = centered.dot(&alpha);
        let logdet: f64 = 2.0 * fac.chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let log_likelihood2 = -quad - logdet;
        let kinv = fac.chol.inverse();
        Ok(Self {
            hyperparams,
            train_inputs: inputs.to_vec(),
            mu,
            alpha,
            kinv,
            jitter: fac.jitter,
            log_likelihood2,
        })
    }

    /// The hyperparameters the model was built with.
    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hyperparams
    }

    /// Profiled constant mean.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Diagonal jitter the factorization actually needed (zero normally).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Twice the profile log-likelihood, up to the `-n ln 2 pi` constant.
    pub fn log_likelihood2(&self) -> f64 {
        self.log_likelihood2
    }

    /// Number of training points.
    pub fn n_train(&self) -> usize {
        self.train_inputs.len()
    }

    /// Input dimension.
    pub fn input_dim(&self) -> usize {
        self.hyperparams.omega.len()
    }

    /// Training inputs.
    pub fn train_inputs(&self) -> &[DesignPoint] {
        &self.train_inputs
    }

    fn check_query(&self, x: &DesignPoint) -> Result<()> {
        if x.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "GP query",
                expected: self.input_dim(),
                actual: x.dim(),
            });
        }
        Ok(())
    }

    /// Posterior mean at `x`.
    pub fn predict(&self, x: &DesignPoint) -> Result<f64> {
        self.check_query(x)?;
        let mut acc = 0.0;
        for (i, xi) in self.train_inputs.iter().enumerate() {
            acc += self.alpha[i] * kernel(x, xi, &self.hyperparams)?;
        }
        Ok(self.mu + acc)
    }

    /// First partial derivative of the posterior mean with respect to query
    /// coordinate `j`.
    pub fn predict_deriv1(&self, x: &DesignPoint, j: usize) -> Result<f64> {
        self.check_query(x)?;
        if j >= self.input_dim() {
            return Err(Error::InvalidArgument(format!(
                "derivative coordinate {j} out of range"
            )));
        }
        let wj = self.hyperparams.omega[j];
        let mut acc = 0.0;
        for (i, xi) in self.train_inputs.iter().enumerate() {
            let k = kernel(x, xi, &self.hyperparams)?;
            acc += self.alpha[i] * (-(x.coord(j) - xi.coord(j)) / wj) * k;
        }
        Ok(acc)
    }

    /// Second partial derivative of the posterior mean with respect to
    /// query coordinates `l` and `j`.
    pub fn predict_deriv2(&self, x: &DesignPoint, l: usize, j: usize) -> Result<f64> {
        self.check_query(x)?;
        let p = self.input_dim();
        if j >= p || l >= p {
            return Err(Error::InvalidArgument(format!(
                "derivative coordinates ({l}, {j}) out of range"
            )));
        }
        let wj = self.hyperparams.omega[j];
        let wl = self.hyperparams.omega[l];
        let delta = if l == j { 1.0 / wj } else { 0.0 };
        let mut acc = 0.0;
        for (i, xi) in self.train_inputs.iter().enumerate() {
            let k = kernel(x, xi, &self.hyperparams)?;
            let dj = x.coord(j) - xi.coord(j);
            let dl = x.coord(l) - xi.coord(l);
            acc += self.alpha[i] * (dj * dl / (wj * wl) - delta) * k;
        }
        Ok(acc)
    }

    /// Leave-one-out residuals `y_i - yhat_{-i}(x_i)` from the factorized
    /// covariance, holding hyperparameters and the surrogate mean at their
    /// full-data values.
    pub fn loo_residuals(&self) -> DVector<f64> {
        let n = self.train_inputs.len();
        DVector::from_fn(n, |i, _| self.alpha[i] / self.kinv[(i, i)])
    }

    /// Mean squared leave-one-out residual — the cross-validated error
    /// variance used to weight exploration against exploitation.
    pub fn loo_cv_error(&self) -> f64 {
        let r = self.loo_residuals();
        r.dot(&r) / r.len() as f64
    }
}

/// Twice the profile log-likelihood of hyperparameters on a data set,
/// up to the `-n ln 2 pi` constant.
pub fn log_likelihood2(
    inputs: &[DesignPoint],
    outputs: &[f64],
    h: &GpHyperparams,
) -> Result<f64> {
    Ok(GpModel::with_hyperparams(inputs, outputs, h.clone())?.log_likelihood2())
}

/// How the noise variance is treated during fitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NuggetMode {
    /// Estimate the noise variance by maximum likelihood.
    Estimate,
    /// Hold the noise variance at the given raw-scale value (zero for a
    /// noiseless interpolator).
    Fixed(f64),
}

/// Controls the multistart maximum-likelihood search.
#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Total optimizer starts, counting the deterministic default and any
    /// warm start.
    pub n_starts: usize,
    /// Objective-evaluation budget per start.
    pub max_evals: usize,
    /// Seed for the random starts.
    pub seed: u64,
    /// Noise-variance treatment.
    pub nugget: NuggetMode,
    /// Hyperparameters (raw scale) from a previous fit on related data,
    /// searched first when provided.
    pub warm_start: Option<GpHyperparams>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_starts: 8,
            max_evals: 200,
            seed: 0,
            nugget: NuggetMode::Estimate,
            warm_start: None,
        }
    }
}

/// Outcome of one optimizer start (objective is `-2 log L` on the
/// internally standardized scale).
#[derive(Debug, Clone)]
pub struct StartOutcome {
    pub objective_initial: f64,
    pub objective_final: f64,
}

/// Diagnostics from a multistart fit.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub starts: Vec<StartOutcome>,
    pub best_start: usize,
    pub n_evals: usize,
}

struct Standardization {
    lo: Vec<f64>,
    range: Vec<f64>,
    mean: f64,
    sd: f64,
}

fn standardize(inputs: &[DesignPoint], outputs: &[f64]) -> Standardization {
    let p = inputs[0].dim();
    let mut lo = vec![f64::INFINITY; p];
    let mut hi = vec![f64::NEG_INFINITY; p];
    for x in inputs {
        for s in 0..p {
            lo[s] = lo[s].min(x.coord(s));
            hi[s] = hi[s].max(x.coord(s));
        }
    }
    let range: Vec<f64> = (0..p)
        .map(|s| {
            let r = hi[s] - lo[s];
            if r > 0.0 {
                r
            } else {
                1.0
            }
        })
        .collect();
    let n = outputs.len() as f64;
    let mean = outputs.iter().sum::<f64>() / n;
    let var = outputs.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
    Standardization {
        lo,
        range,
        mean,
        sd,
    }
}

// Log-space search box on the standardized scale.
const LOG_TAU2_BOUNDS: (f64, f64) = (-9.21034037197618, 6.907755278982137); // [1e-4, 1e3]
const LOG_OMEGA_BOUNDS: (f64, f64) = (-6.907755278982137, 6.907755278982137); // [1e-3, 1e3]
const LOG_NUGGET_BOUNDS: (f64, f64) = (-23.025850929940457, 2.302585092994046); // [1e-10, 1e1]

/// Fits hyperparameters by multistart Nelder–Mead over the profile
/// likelihood and returns the surrogate built at the best point.
pub fn fit(inputs: &[DesignPoint], outputs: &[f64], config: &FitConfig) -> Result<GpModel> {
    fit_with_report(inputs, outputs, config).map(|(m, _)| m)
}

/// Like [`fit`], additionally returning per-start diagnostics.
pub fn fit_with_report(
    inputs: &[DesignPoint],
    outputs: &[f64],
    config: &FitConfig,
) -> Result<(GpModel, FitReport)> {
    if inputs.len() < 2 {
        return Err(Error::InvalidArgument(
            "GP fitting needs at least two points".into(),
        ));
    }
    if inputs.len() != outputs.len() {
        return Err(Error::DimensionMismatch {
            context: "GP training data",
            expected: inputs.len(),
            actual: outputs.len(),
        });
    }
    if config.n_starts == 0 || config.max_evals == 0 {
        return Err(Error::InvalidArgument(
            "fit needs at least one start and a positive budget".into(),
        ));
    }
    let p = inputs[0].dim();
    if inputs.iter().any(|x| x.dim() != p) {
        return Err(Error::InvalidArgument(
            "GP inputs must share one dimension".into(),
        ));
    }
    if let NuggetMode::Fixed(v) = config.nugget {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidArgument(
                "fixed nugget must be finite and nonnegative".into(),
            ));
        }
    }

    let std = standardize(inputs, outputs);
    let z_inputs: Vec<DesignPoint> = inputs
        .iter()
        .map(|x| {
            DesignPoint::new(
                (0..p)
                    .map(|s| (x.coord(s) - std.lo[s]) / std.range[s])
                    .collect(),
            )
            .expect("standardized coordinates are finite")
        })
        .collect();
    let z_outputs: Vec<f64> = outputs.iter().map(|y| (y - std.mean) / std.sd).collect();

    let estimate_nugget = matches!(config.nugget, NuggetMode::Estimate);
    // Free coordinates: ln tau2, ln omega_1..p, and optionally ln sigma02.
    let dim = 1 + p + usize::from(estimate_nugget);
    let fixed_nugget_std = match config.nugget {
        NuggetMode::Fixed(v) => v / (std.sd * std.sd),
        NuggetMode::Estimate => 0.0,
    };

    let theta_to_hyper = |theta: &[f64]| -> GpHyperparams {
        GpHyperparams {
            tau2: theta[0].exp(),
            omega: theta[1..=p].iter().map(|t| t.exp()).collect(),
            sigma02: if estimate_nugget {
                theta[p + 1].exp()
            } else {
                fixed_nugget_std
            },
        }
    };

    let mut objective = |theta: &[f64]| -> f64 {
        let h = theta_to_hyper(theta);
        match log_likelihood2(&z_inputs, &z_outputs, &h) {
            Ok(ll2) => -ll2,
            Err(_) => f64::INFINITY,
        }
    };

    let mut lo = vec![LOG_TAU2_BOUNDS.0];
    let mut hi = vec![LOG_TAU2_BOUNDS.1];
    for _ in 0..p {
        lo.push(LOG_OMEGA_BOUNDS.0);
        hi.push(LOG_OMEGA_BOUNDS.1);
    }
    if estimate_nugget {
        lo.push(LOG_NUGGET_BOUNDS.0);
        hi.push(LOG_NUGGET_BOUNDS.1);
    }

    // Start list: warm start first when given, then a deterministic
    // default, then random points.
    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(config.n_starts);
    if let Some(warm) = &config.warm_start {
        warm.validate()?;
        if warm.omega.len() == p {
            let mut theta = vec![(warm.tau2 / (std.sd * std.sd)).ln()];
            for s in 0..p {
                theta.push((warm.omega[s] / (std.range[s] * std.range[s])).ln());
            }
            if estimate_nugget {
                let v = (warm.sigma02 / (std.sd * std.sd)).max(1e-10);
                theta.push(v.ln());
            }
            for i in 0..dim {
                theta[i] = theta[i].clamp(lo[i], hi[i]);
            }
            starts.push(theta);
        }
    }
    if starts.len() < config.n_starts {
        let mut theta = vec![0.0]; // tau2 = 1
        for _ in 0..p {
            theta.push((0.1_f64).ln());
        }
        if estimate_nugget {
            theta.push((1e-2_f64).ln());
        }
        starts.push(theta);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    while starts.len() < config.n_starts {
        let mut theta = vec![rng.random_range((0.1_f64).ln()..(10.0_f64).ln())];
        for _ in 0..p {
            theta.push(rng.random_range((1e-2_f64).ln()..(10.0_f64).ln()));
        }
        if estimate_nugget {
            theta.push(rng.random_range((1e-8_f64).ln()..0.0));
        }
        starts.push(theta);
    }

    let opts = NelderMeadOptions {
        max_evals: config.max_evals,
        ftol: 1e-8,
        xtol: 1e-5,
    };
    let step = vec![0.7; dim];
    let mut report = FitReport {
        starts: Vec::with_capacity(starts.len()),
        best_start: 0,
        n_evals: 0,
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (s, start) in starts.iter().enumerate() {
        let f0 = objective(start);
        report.n_evals += 1;
        let r = minimize(&mut objective, start, &step, &lo, &hi, &opts);
        report.n_evals += r.n_evals;
        report.starts.push(StartOutcome {
            objective_initial: f0,
            objective_final: r.f,
        });
        if best.as_ref().map_or(true, |(_, bf)| r.f < *bf) {
            report.best_start = s;
            best = Some((r.x, r.f));
        }
    }
    let (theta_best, f_best) = best.expect("at least one start");
    if !f_best.is_finite() {
        return Err(Error::FitFailure(
            "likelihood not evaluable at any visited hyperparameter".into(),
        ));
    }
    let h_std = theta_to_hyper(&theta_best);
    let h_raw = GpHyperparams {
        tau2: h_std.tau2 * std.sd * std.sd,
        omega: (0..p)
            .map(|s| h_std.omega[s] * std.range[s] * std.range[s])
            .collect(),
        sigma02: match config.nugget {
            NuggetMode::Fixed(v) => v,
            NuggetMode::Estimate => h_std.sigma02 * std.sd * std.sd,
        },
    };
    let model = GpModel::with_hyperparams(inputs, outputs, h_raw)?;
    Ok((model, report))
}
