//! The batch-sequential acquisition loop.
//!
//! Starting from a small initial design, each round (1) fits a sparse
//! equation per response by stepwise regression, (2) fits Gaussian-process
//! surrogates to the observed states and measures their cross-validated
//! error, (3) scores every available candidate by the adaptively weighted
//! combination of space-filling distance and D-optimality increment, and
//! (4) acquires a batch of new observations at the winning locations. The
//! loop stops when the estimated coefficients stabilize, when the design
//! budget is exhausted, or when a fixed design size is reached; a final
//! refit on all collected data produces the reported equations.

use serde::{Deserialize, Serialize};

use crate::basis::{design_matrix, response_vectors, surrogate_rows, TermLibrary};
use crate::design::{
    adaptive_weights, noise_to_signal_rho, select_batch, AcdsWeights, DesignState,
};
use crate::error::{Error, Result};
use crate::gp::{fit as gp_fit, FitConfig, GpHyperparams, GpModel, NuggetMode};
use crate::types::{
    compute_gamma_system, compute_l2_loss_system, CandidatePool, DesignPoint, EstimatedEquation,
    Metrics, Observation,
};
use crate::varsel::{forward_stepwise_bic, RegressionProblem};

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A source of observations at requested design points: a simulator, a
/// cached field snapshot, or a physical experiment.
pub trait DataOracle {
    /// Produces one observation per requested point, in order.
    fn observe(&mut self, points: &[DesignPoint]) -> Result<Vec<Observation>>;
}

/// Which acquisition criterion drives the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    /// Adaptively weighted combination of space-filling and D-optimality.
    Acds,
    /// D-optimality increment only.
    DOptimalOnly,
    /// Space-filling (maximin) only; no surrogates are fit.
    MaximinOnly,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [
        Criterion::Acds,
        Criterion::DOptimalOnly,
        Criterion::MaximinOnly,
    ];

    /// Stable kebab-case name used in files and on the command line.
    pub fn name(self) -> &'static str {
        match self {
            Criterion::Acds => "acds",
            Criterion::DOptimalOnly => "d-optimal-only",
            Criterion::MaximinOnly => "maximin-only",
        }
    }

    pub fn parse(s: &str) -> Option<Criterion> {
        Criterion::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// How the initial design is drawn from the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitDesign {
    /// Uniform random subset of the pool.
    RandomSubset,
    /// Latin hypercube sample over the pool's bounding box, snapped to the
    /// nearest available pool points.
    LatinHypercube,
}

/// Budgets for the surrogate hyperparameter searches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpFitSettings {
    /// Optimizer starts for the first round (no warm start available).
    pub initial_starts: usize,
    /// Optimizer starts for later rounds (the previous optimum is searched
    /// first).
    pub refit_starts: usize,
    /// Objective evaluations per start in the first round.
    pub initial_max_evals: usize,
    /// Objective evaluations per start in later rounds.
    pub refit_max_evals: usize,
}

impl Default for GpFitSettings {
    fn default() -> Self {
        Self {
            initial_starts: 8,
            refit_starts: 3,
            initial_max_evals: 240,
            refit_max_evals: 160,
        }
    }
}

/// Configuration of one active-learning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub criterion: Criterion,
    /// Relative coefficient-change tolerance for convergence.
    pub tol: f64,
    /// Design-size budget: the loop continues while `n <= n_max`.
    pub n_max: usize,
    /// When set, ignore `tol`/`n_max` and acquire until the design holds
    /// exactly this many points (assuming divisibility by the batch size).
    pub fixed_n: Option<usize>,
    /// Observations acquired per round.
    pub batch_size: usize,
    /// Initial design size.
    pub n_init: usize,
    pub init_design: InitDesign,
    /// Seed for everything stochastic inside the run (initial design and
    /// surrogate multistarts). Oracles carry their own seeds.
    pub seed: u64,
    pub gp: GpFitSettings,
    /// Experimental: rescale each weight input by its own signal variance
    /// before combining (the surrogate error lives in state units, the
    /// residual variance in response units). Off by default — the
    /// published criterion combines them directly.
    #[serde(default)]
    pub normalize_weights: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            criterion: Criterion::Acds,
            tol: 1e-2,
            n_max: 400,
            fixed_n: None,
            batch_size: 16,
            n_init: 16,
            init_design: InitDesign::RandomSubset,
            seed: 0,
            gp: GpFitSettings::default(),
            normalize_weights: false,
        }
    }
}

/// Why the acquisition loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// Relative coefficient change fell below the tolerance.
    TolReached,
    /// The design-size budget was exceeded.
    NMaxReached,
    /// The fixed design size was reached.
    FixedNReached,
}

/// Per-round diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    /// Round number, starting at zero.
    pub iteration: usize,
    /// Observations the round's fits used.
    pub n_data: usize,
    /// Relative coefficient change produced by this round's fit.
    pub rel_change: f64,
    /// Space-filling weight used for selection.
    pub alpha1: f64,
    /// D-optimality weight used for selection.
    pub alpha2: f64,
    /// Gram regularization used for selection (zero for maximin-only).
    pub rho: f64,
    /// Residual variance estimate per response.
    pub sigma2_hat: Vec<f64>,
    /// Mean cross-validated surrogate error (absent for maximin-only).
    pub tau2_cv: Option<f64>,
    /// Dense coefficient estimates per response.
    pub beta: Vec<Vec<f64>>,
    /// Pool indices acquired this round.
    pub batch_indices: Vec<usize>,
    /// Coordinates of the acquired points, parallel to `batch_indices`.
    pub batch_points: Vec<Vec<f64>>,
}

/// Everything a completed (or aborted) run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Pool indices of the initial design.
    pub initial_indices: Vec<usize>,
    pub iterations: Vec<IterationLog>,
    /// Equations from the final refit on all data (empty if the run
    /// aborted before the first fit).
    pub final_equations: Vec<EstimatedEquation>,
    pub stop: StopReason,
    /// Whether the relative coefficient change was below tolerance when
    /// the loop exited (true by construction for [`StopReason::TolReached`]).
    pub converged: bool,
    /// Total observations collected.
    pub n_total: usize,
    /// Recovery metrics against the ground truth, when one was supplied.
    pub metrics: Option<Metrics>,
}

/// A run that aborted partway, with whatever it had produced.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub partial: RunRecord,
}

impl RunFailure {
    /// Wraps an error raised while assembling a run's inputs, before any
    /// observation was taken.
    pub fn from_setup(error: Error) -> Self {
        Self {
            error,
            partial: RunRecord {
                initial_indices: Vec::new(),
                iterations: Vec::new(),
                final_equations: Vec::new(),
                stop: StopReason::NMaxReached,
                converged: false,
                n_total: 0,
                metrics: None,
            },
        }
    }
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "run aborted after {} observations: {}",
            self.partial.n_total, self.error
        )
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// One step of a splitmix64 sequence.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Deterministically mixes a base seed with a sequence of salt words,
/// giving independent-looking streams for sub-tasks.
pub fn mix_seed(base: u64, salts: &[u64]) -> u64 {
    let mut s = splitmix64(base);
    for &w in salts {
        s = splitmix64(s ^ w.wrapping_mul(0x9E3779B97F4A7C15));
    }
    s
}

/// Relative change between coefficient snapshots:
/// `||current - previous|| / ||current||`. Returns `(converged, change)`.
/// A zero current vector never converges: an empty model carries no
/// dynamics to have stabilized, so data collection must continue.
pub fn check_convergence(current: &[f64], previous: &[f64], tol: f64) -> (bool, f64) {
    debug_assert_eq!(current.len(), previous.len());
    let mut diff2 = 0.0;
    let mut norm2 = 0.0;
    for (c, p) in current.iter().zip(previous) {
        diff2 += (c - p) * (c - p);
        norm2 += c * c;
    }
    let rel = if norm2 > 0.0 {
        (diff2 / norm2).sqrt()
    } else {
        f64::INFINITY
    };
    (rel < tol, rel)
}

fn concat_coefficients(eqs: &[EstimatedEquation]) -> Vec<f64> {
    eqs.iter()
        .flat_map(|e| e.coefficients().iter().copied())
        .collect()
}

fn sample_variance(v: &DVector<f64>) -> f64 {
    let n = v.len() as f64;
    let mean = v.sum() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0)
}

/// Draws the initial design from the pool (without marking it).
fn initial_indices(
    pool: &CandidatePool,
    n_init: usize,
    init: InitDesign,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let available = pool.available_indices();
    if available.len() < n_init {
        return Err(Error::PoolExhausted {
            requested: n_init,
            available: available.len(),
        });
    }
    let mut chosen = match init {
        InitDesign::RandomSubset => {
            let picks = rand::seq::index::sample(rng, available.len(), n_init);
            picks.iter().map(|i| available[i]).collect::<Vec<_>>()
        }
        InitDesign::LatinHypercube => {
            let p = pool.dim();
            let mut lo = vec![f64::INFINITY; p];
            let mut hi = vec![f64::NEG_INFINITY; p];
            for &i in &available {
                for s in 0..p {
                    lo[s] = lo[s].min(pool.point(i).coord(s));
                    hi[s] = hi[s].max(pool.point(i).coord(s));
                }
            }
            let mut perms: Vec<Vec<usize>> = Vec::with_capacity(p);
            for _ in 0..p {
                let mut perm: Vec<usize> = (0..n_init).collect();
                perm.shuffle(rng);
                perms.push(perm);
            }
            let mut taken = vec![false; pool.len()];
            let mut picks = Vec::with_capacity(n_init);
            for i in 0..n_init {
                let target: Vec<f64> = (0..p)
                    .map(|s| {
                        let u: f64 = rng.random_range(0.0..1.0);
                        lo[s] + (perms[s][i] as f64 + u) / n_init as f64 * (hi[s] - lo[s])
                    })
                    .collect();
                let mut best: Option<(usize, f64)> = None;
                for &j in &available {
                    if taken[j] {
                        continue;
                    }
                    let d2: f64 = (0..p)
                        .map(|s| {
                            let d = pool.point(j).coord(s) - target[s];
                            d * d
                        })
                        .sum();
                    if best.map_or(true, |(_, bd)| d2 < bd) {
                        best = Some((j, d2));
                    }
                }
                let (j, _) = best.expect("available points remain");
                taken[j] = true;
                picks.push(j);
            }
            picks
        }
    };
    chosen.sort_unstable();
    Ok(chosen)
}

struct LoopState {
    observations: Vec<Observation>,
    iterations: Vec<IterationLog>,
    initial_indices: Vec<usize>,
}

impl LoopState {
    fn partial(self, stop: StopReason) -> RunRecord {
        RunRecord {
            initial_indices: self.initial_indices,
            iterations: self.iterations,
            final_equations: vec![],
            stop,
            converged: false,
            n_total: self.observations.len(),
            metrics: None,
        }
    }
}

/// Executes one active-learning run against an oracle.
///
/// On success the record holds per-round diagnostics, the final refit on
/// all collected data, and metrics against `truth` when given. Oracle,
/// surrogate, or selection failures abort the run and return the partial
/// record alongside the error.
pub fn run(
    config: &RunConfig,
    oracle: &mut dyn DataOracle,
    library: &TermLibrary,
    pool: &mut CandidatePool,
    truth: Option<&[EstimatedEquation]>,
) -> std::result::Result<RunRecord, Box<RunFailure>> {
    let fail = |error: Error, state: LoopState, stop: StopReason| {
        Box::new(RunFailure {
            error,
            partial: state.partial(stop),
        })
    };
    let empty_state = || LoopState {
        observations: vec![],
        iterations: vec![],
        initial_indices: vec![],
    };

    // --- validation ---------------------------------------------------
    let validated: Result<()> = (|| {
        if config.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        if config.n_init < 2 {
            return Err(Error::InvalidArgument(
                "initial design needs at least two points".into(),
            ));
        }
        if config.fixed_n.is_none() && !(config.tol > 0.0 && config.tol.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be positive and finite, got {}",
                config.tol
            )));
        }
        if let Some(f) = config.fixed_n {
            if f < config.n_init {
                return Err(Error::InvalidArgument(format!(
                    "fixed design size {f} is below the initial size {}",
                    config.n_init
                )));
            }
        }
        if pool.dim() != library.space_dim() {
            return Err(Error::DimensionMismatch {
                context: "pool vs library space",
                expected: library.space_dim(),
                actual: pool.dim(),
            });
        }
        if config.criterion != Criterion::MaximinOnly && library.max_derivative_order() > 2 {
            return Err(Error::Unsupported(
                "surrogate-based criteria need a library with derivatives of order at most 2"
                    .into(),
            ));
        }
        Ok(())
    })();
    if let Err(e) = validated {
        return Err(fail(e, empty_state(), StopReason::NMaxReached));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, &[0x12171]));

    // --- initial design -----------------------------------------------
    let init_idx = match initial_indices(pool, config.n_init, config.init_design, &mut rng) {
        Ok(v) => v,
        Err(e) => return Err(fail(e, empty_state(), StopReason::NMaxReached)),
    };
    let mut state = LoopState {
        observations: vec![],
        iterations: vec![],
        initial_indices: init_idx.clone(),
    };
    let init_points: Vec<DesignPoint> = init_idx.iter().map(|&i| pool.point(i).clone()).collect();
    for &i in &init_idx {
        if let Err(e) = pool.mark_selected(i) {
            return Err(fail(e, state, StopReason::NMaxReached));
        }
    }
    match oracle.observe(&init_points) {
        Ok(obs) => state.observations.extend(obs),
        Err(e) => return Err(fail(e, state, StopReason::NMaxReached)),
    }
    if state.observations.len() != config.n_init {
        return Err(fail(
            Error::DataSource(format!(
                "oracle returned {} observations for {} points",
                state.observations.len(),
                config.n_init
            )),
            state,
            StopReason::NMaxReached,
        ));
    }
    let d = state.observations[0].state_dim();
    if d != library.state_dim() {
        let e = Error::DimensionMismatch {
            context: "observation state vs library",
            expected: library.state_dim(),
            actual: d,
        };
        return Err(fail(e, state, StopReason::NMaxReached));
    }
    if let Some(t) = truth {
        if t.len() != d || t.iter().any(|eq| eq.n_terms() != library.len()) {
            let e = Error::InvalidArgument(
                "truth must have one equation per response over the same library".into(),
            );
            return Err(fail(e, state, StopReason::NMaxReached));
        }
    }

    // --- acquisition loop -----------------------------------------------
    let k = library.len();
    let mut beta_current = vec![1.0; k * d];
    let mut beta_old = vec![0.0; k * d];
    let mut rel_change = {
        let (_, r) = check_convergence(&beta_current, &beta_old, f64::INFINITY);
        r
    };
    let mut warm: Vec<Option<GpHyperparams>> = vec![None; d];
    let mut iteration = 0usize;
    let stop;
    loop {
        let n = state.observations.len();
        if let Some(fixed) = config.fixed_n {
            if n >= fixed {
                stop = StopReason::FixedNReached;
                break;
            }
        } else if rel_change < config.tol {
            stop = StopReason::TolReached;
            break;
        } else if n > config.n_max {
            stop = StopReason::NMaxReached;
            break;
        }

        // (1) sparse fit per response on everything observed so far.
        let matrix = match design_matrix(library, &state.observations) {
            Ok(m) => m,
            Err(e) => return Err(fail(e, state, StopReason::NMaxReached)),
        };
        let responses = match response_vectors(&state.observations) {
            Ok(r) => r,
            Err(e) => return Err(fail(e, state, StopReason::NMaxReached)),
        };
        let mut equations = Vec::with_capacity(d);
        for y in &responses {
            let problem = match RegressionProblem::new(matrix.clone(), y.clone()) {
                Ok(p) => p,
                Err(e) => return Err(fail(e, state, StopReason::NMaxReached)),
            };
            match forward_stepwise_bic(&problem) {
                Ok(eq) => equations.push(eq),
                Err(e) => return Err(fail(e, state, StopReason::NMaxReached)),
            }
        }
        beta_old = beta_current;
        beta_current = concat_coefficients(&equations);
        let (_, rel) = check_convergence(&beta_current, &beta_old, config.tol);
        rel_change = rel;
        let sigma2_hat: Vec<f64> = equations.iter().map(|e| e.sigma2()).collect();

        // (2) + (3): criterion-specific selection state.
        let points: Vec<DesignPoint> = state
            .observations
            .iter()
            .map(|o| o.point.clone())
            .collect();
        let (weights, rho, tau2_cv, batch) = match config.criterion {
            Criterion::MaximinOnly => {
                let mut dstate = DesignState::space_filling(points);
                let weights = AcdsWeights::space_filling_only();
                let batch = match select_batch(pool, &mut dstate, None, &weights, config.batch_size)
                {
                    Ok(b) => b,
                    Err(e) => return Err(fail(e, state, StopReason::NMaxReached)),
                };
                (weights, 0.0, None, batch)
            }
            Criterion::Acds | Criterion::DOptimalOnly => {
                // Surrogates per state component, warm-started after the
                // first round.
                let mut models: Vec<GpModel> = Vec::with_capacity(d);
                for r in 0..d {
                    let outputs: Vec<f64> =
                        state.observations.iter().map(|o| o.state[r]).collect();
                    let first = warm[r].is_none();
                    let fitcfg = FitConfig {
                        n_starts: if first {
                            config.gp.initial_starts
                        } else {
                            config.gp.refit_starts
                        },
                        max_evals: if first {
                            config.gp.initial_max_evals
                        } else {
                            config.gp.refit_max_evals
                        },
                        seed: mix_seed(config.seed, &[0x69f, iteration as u64, r as u64]),
                        nugget: NuggetMode::Estimate,
                        warm_start: warm[r].clone(),
                    };
                    let fitted = gp_fit(&points, &outputs, &fitcfg).or_else(|_| {
                        // One retry with fresh random starts.
                        let retry = FitConfig {
                            n_starts: config.gp.initial_starts,
                            max_evals: config.gp.initial_max_evals,
                            seed: mix_seed(
                                config.seed,
                                &[0x69f, iteration as u64, r as u64, 0xbad],
                            ),
                            nugget: NuggetMode::Estimate,
                            warm_start: None,
                        };
                        gp_fit(&points, &outputs, &retry)
                    });
                    match fitted {
                        Ok(m) => models.push(m),
                        Err(e) => return Err(fail(e, state, StopReason::NMaxReached)),
                    }
                }
                let tau2_cv =
                    models.iter().map(|m| m.loo_cv_error()).sum::<f64>() / models.len() as f64;
                for (r, m) in models.iter().enumerate() {
                    warm[r] = Some(m.hyperparams().clone());
                }

                let response_vars: Vec<f64> = responses.iter().map(sample_variance).collect();
                let rho = match noise_to_signal_rho(&sigma2_hat, &response_vars) {
                    Ok(r) => r,
                    Err(e) => return Err(fail(e, state, StopReason::NMaxReached)),
                };
                let weights = match config.criterion {
                    Criterion::DOptimalOnly => AcdsWeights::d_optimal_only(),
                    _ => {
                        let mut surrogate_err = tau2_cv;
                        let mut mean_sigma2 =
                            sigma2_hat.iter().sum::<f64>() / sigma2_hat.len() as f64;
                        if config.normalize_weights {
                            let state_var = (0..d)
                                .map(|r| {
                                    sample_variance(&DVector::from_iterator(
                                        n,
                                        state.observations.iter().map(|o| o.state[r]),
                                    ))
                                })
                                .sum::<f64>()
                                / d as f64;
                            let response_var = response_vars.iter().sum::<f64>()
                                / response_vars.len() as f64;
                            surrogate_err /= state_var.max(f64::MIN_POSITIVE);
                            mean_sigma2 /= response_var.max(f64::MIN_POSITIVE);
                        }
                        match adaptive_weights(surrogate_err, mean_sigma2) {
                            Ok(w) => w,
                            Err(e) => return Err(fail(e, state, StopReason::NMaxReached)),
                        }
                    }
                };

                // Surrogate rows for every available pool point.
                let avail = pool.available_indices();
                let avail_points: Vec<DesignPoint> =
                    avail.iter().map(|&i| pool.point(i).clone()).collect();
                let avail_rows = match surrogate_rows(library, &models, &avail_points) {
                    Ok(r) => r,
                    Err(e) => return Err(fail(e, state, StopReason::NMaxReached)),
                };
                let mut rows: Vec<Option<DVector<f64>>> = vec![None; pool.len()];
                for (&i, row) in avail.iter().zip(avail_rows) {
                    rows[i] = Some(row);
                }

                let mut dstate = match DesignState::with_gram(&matrix, rho, points) {
                    Ok(s) => s,
                    Err(e) => return Err(fail(e, state, StopReason::NMaxReached)),
                };
                let batch = match select_batch(
                    pool,
                    &mut dstate,
                    Some(&rows),
                    &weights,
                    config.batch_size,
                ) {
                    Ok(b) => b,
                    Err(e) => return Err(fail(e, state, StopReason::NMaxReached)),
                };
                (weights, rho, Some(tau2_cv), batch)
            }
        };

        // (4) acquire the batch.
        let batch_indices: Vec<usize> = batch.iter().map(|(i, _)| *i).collect();
        let batch_points: Vec<DesignPoint> = batch.into_iter().map(|(_, p)| p).collect();
        let new_obs = match oracle.observe(&batch_points) {
            Ok(o) => o,
            Err(e) => return Err(fail(e, state, StopReason::NMaxReached)),
        };
        if new_obs.len() != batch_points.len()
            || new_obs.iter().any(|o| o.state_dim() != d)
        {
            let e = Error::DataSource("oracle returned a malformed batch".into());
            return Err(fail(e, state, StopReason::NMaxReached));
        }
        state.iterations.push(IterationLog {
            iteration,
            n_data: n,
            rel_change,
            alpha1: weights.alpha1,
            alpha2: weights.alpha2,
            rho,
            sigma2_hat,
            tau2_cv,
            beta: equations.iter().map(|e| e.coefficients().to_vec()).collect(),
            batch_indices,
            batch_points: batch_points
                .iter()
                .map(|p| p.coords().to_vec())
                .collect(),
        });
        state.observations.extend(new_obs);
        iteration += 1;
    }

    // --- final refit on everything --------------------------------------
    let matrix = match design_matrix(library, &state.observations) {
        Ok(m) => m,
        Err(e) => return Err(fail(e, state, stop)),
    };
    let responses = match response_vectors(&state.observations) {
        Ok(r) => r,
        Err(e) => return Err(fail(e, state, stop)),
    };
    let mut final_equations = Vec::with_capacity(d);
    for y in &responses {
        let problem = match RegressionProblem::new(matrix.clone(), y.clone()) {
            Ok(p) => p,
            Err(e) => return Err(fail(e, state, stop)),
        };
        match forward_stepwise_bic(&problem) {
            Ok(eq) => final_equations.push(eq),
            Err(e) => return Err(fail(e, state, stop)),
        }
    }
    let metrics = match truth {
        Some(t) => {
            let gamma = match compute_gamma_system(&final_equations, t) {
                Ok(g) => g,
                Err(e) => return Err(fail(e, state, stop)),
            };
            let l2 = match compute_l2_loss_system(&final_equations, t) {
                Ok(l) => l,
                Err(e) => return Err(fail(e, state, stop)),
            };
            Some(Metrics {
                gamma,
                l2_beta: l2,
                n_total: state.observations.len(),
            })
        }
        None => None,
    };
    Ok(RunRecord {
        initial_indices: state.initial_indices,
        iterations: state.iterations,
        final_equations,
        stop,
        converged: rel_change < config.tol,
        n_total: state.observations.len(),
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_monomial_library;

    /// Oracle for a known scalar law du/dt = g(u) with state u(t) supplied
    /// by a closed form; optionally fails after a number of calls.
    struct SyntheticOracle {
        state_fn: fn(f64) -> f64,
        response_fn: fn(f64) -> f64,
        calls_before_failure: Option<usize>,
        calls: usize,
    }

    impl DataOracle for SyntheticOracle {
        fn observe(&mut self, points: &[DesignPoint]) -> Result<Vec<Observation>> {
            self.calls += 1;
            if let Some(limit) = self.calls_before_failure {
                if self.calls > limit {
                    return Err(Error::DataSource("synthetic failure".into()));
                }
            }
            points
                .iter()
                .map(|p| {
                    let t = p.coord(0);
                    let u = (self.state_fn)(t);
                    Observation::new(
                        p.clone(),
                        vec![u],
                        vec![(self.response_fn)(u)],
                        vec![],
                    )
                })
                .collect()
        }
    }

    fn cosine_oracle() -> SyntheticOracle {
        SyntheticOracle {
            state_fn: |t| t.cos(),
            // du/dt "law": 2u - 0.5 u^2 evaluated on the state.
            response_fn: |u| 2.0 * u - 0.5 * u * u,
            calls_before_failure: None,
            calls: 0,
        }
    }

    fn truth_for(lib: &TermLibrary) -> Vec<EstimatedEquation> {
        let iu = lib.index_by_name("u").unwrap();
        let iu2 = lib.index_by_name("u^2").unwrap();
        vec![EstimatedEquation::from_sparse(lib.len(), &[(iu, 2.0), (iu2, -0.5)], 0.0).unwrap()]
    }

    #[test]
    fn convergence_check_examples() {
        assert_eq!(check_convergence(&[1.0, 1.0], &[1.0, 1.0], 1e-2), (true, 0.0));
        let (ok, rel) = check_convergence(&[2.0, 0.0], &[1.0, 0.0], 1e-2);
        assert!(!ok);
        assert!((rel - 0.5).abs() < 1e-15);
        let (ok, rel) = check_convergence(&[0.0], &[1.0], 1e-2);
        assert!(!ok);
        assert!(rel.is_infinite());
        // An empty model never counts as converged, even if it repeats.
        let (ok, rel) = check_convergence(&[0.0], &[0.0], 1e-2);
        assert!(!ok);
        assert!(rel.is_infinite());
    }

    #[test]
    fn seed_mixing_is_deterministic_and_salt_sensitive() {
        let a = mix_seed(7, &[1, 2, 3]);
        assert_eq!(a, mix_seed(7, &[1, 2, 3]));
        assert_ne!(a, mix_seed(7, &[1, 2, 4]));
        assert_ne!(a, mix_seed(8, &[1, 2, 3]));
        assert_ne!(mix_seed(7, &[0]), mix_seed(7, &[]));
    }

    #[test]
    fn recovers_a_noiseless_scalar_law() {
        let lib = build_monomial_library(1, 3).unwrap();
        let mut pool = CandidatePool::linspace(0.0, 6.0, 400).unwrap();
        let mut oracle = cosine_oracle();
        let config = RunConfig {
            n_init: 6,
            batch_size: 3,
            n_max: 30,
            seed: 5,
            ..Default::default()
        };
        let truth = truth_for(&lib);
        let record = run(&config, &mut oracle, &lib, &mut pool, Some(&truth)).unwrap();
        let m = record.metrics.unwrap();
        assert_eq!(m.gamma, 0, "support errors: {:?}", record.final_equations);
        assert!(m.l2_beta <= 1e-6, "coefficient loss {}", m.l2_beta);
        assert!(record.converged);
        assert_eq!(record.stop, StopReason::TolReached);
        assert_eq!(record.n_total, m.n_total);
        assert!(!record.iterations.is_empty());
        // Weights are adaptive and normalized.
        for it in &record.iterations {
            assert!((it.alpha1 + it.alpha2 - 1.0).abs() < 1e-12);
            assert!(it.rho >= crate::design::RHO_FLOOR);
        }
    }

    #[test]
    fn maximin_mode_needs_no_surrogates_and_recovers_too() {
        let lib = build_monomial_library(1, 3).unwrap();
        let mut pool = CandidatePool::linspace(0.0, 6.0, 400).unwrap();
        let mut oracle = cosine_oracle();
        let config = RunConfig {
            criterion: Criterion::MaximinOnly,
            n_init: 6,
            batch_size: 3,
            n_max: 30,
            seed: 5,
            ..Default::default()
        };
        let truth = truth_for(&lib);
        let record = run(&config, &mut oracle, &lib, &mut pool, Some(&truth)).unwrap();
        assert_eq!(record.metrics.as_ref().unwrap().gamma, 0);
        for it in &record.iterations {
            assert_eq!(it.alpha1, 1.0);
            assert_eq!(it.alpha2, 0.0);
            assert!(it.tau2_cv.is_none());
        }
    }

    #[test]
    fn fixed_design_size_is_hit_exactly() {
        let lib = build_monomial_library(1, 3).unwrap();
        let mut pool = CandidatePool::linspace(0.0, 6.0, 400).unwrap();
        let mut oracle = cosine_oracle();
        let config = RunConfig {
            fixed_n: Some(12),
            n_init: 4,
            batch_size: 2,
            seed: 9,
            ..Default::default()
        };
        let record = run(&config, &mut oracle, &lib, &mut pool, None).unwrap();
        assert_eq!(record.n_total, 12);
        assert_eq!(record.stop, StopReason::FixedNReached);
        assert_eq!(record.iterations.len(), 4);
        assert!(record.metrics.is_none());
    }

    #[test]
    fn runs_are_bit_reproducible() {
        let lib = build_monomial_library(1, 3).unwrap();
        let config = RunConfig {
            n_init: 5,
            batch_size: 3,
            n_max: 20,
            seed: 42,
            ..Default::default()
        };
        let mut records = Vec::new();
        for _ in 0..2 {
            let mut pool = CandidatePool::linspace(0.0, 6.0, 300).unwrap();
            let mut oracle = cosine_oracle();
            let record = run(&config, &mut oracle, &lib, &mut pool, None).unwrap();
            records.push(serde_json::to_string(&record).unwrap());
        }
        assert_eq!(records[0], records[1]);
    }

    #[test]
    fn oracle_failure_aborts_with_partial_record() {
        let lib = build_monomial_library(1, 3).unwrap();
        let mut pool = CandidatePool::linspace(0.0, 6.0, 300).unwrap();
        let mut oracle = SyntheticOracle {
            calls_before_failure: Some(2),
            ..cosine_oracle()
        };
        let config = RunConfig {
            n_init: 5,
            batch_size: 3,
            fixed_n: Some(50),
            seed: 1,
            ..Default::default()
        };
        let failure = run(&config, &mut oracle, &lib, &mut pool, None).unwrap_err();
        // Initial observe + one batch succeeded, the second batch failed.
        assert_eq!(failure.partial.n_total, 5 + 3);
        assert_eq!(failure.partial.iterations.len(), 1);
        assert!(failure.partial.final_equations.is_empty());
        assert!(matches!(failure.error, Error::DataSource(_)));
    }

    #[test]
    fn undersized_pool_is_rejected() {
        let lib = build_monomial_library(1, 3).unwrap();
        let mut pool = CandidatePool::linspace(0.0, 6.0, 4).unwrap();
        let mut oracle = cosine_oracle();
        let config = RunConfig {
            n_init: 10,
            ..Default::default()
        };
        let failure = run(&config, &mut oracle, &lib, &mut pool, None).unwrap_err();
        assert!(matches!(failure.error, Error::PoolExhausted { .. }));
        assert_eq!(failure.partial.n_total, 0);
    }

    #[test]
    fn latin_hypercube_initialization_spreads_points() {
        let lib = build_monomial_library(1, 3).unwrap();
        let mut pool = CandidatePool::linspace(0.0, 6.0, 600).unwrap();
        let mut oracle = cosine_oracle();
        let config = RunConfig {
            init_design: InitDesign::LatinHypercube,
            n_init: 6,
            batch_size: 3,
            n_max: 15,
            seed: 3,
            ..Default::default()
        };
        let record = run(&config, &mut oracle, &lib, &mut pool, None).unwrap();
        // One initial point per sextile of the domain.
        let coords: Vec<f64> = record
            .initial_indices
            .iter()
            .map(|&i| i as f64 * 6.0 / 599.0)
            .collect();
        for s in 0..6 {
            let lo = s as f64;
            let hi = lo + 1.0;
            assert!(
                coords.iter().any(|&c| c >= lo && c <= hi),
                "stratum [{lo}, {hi}] empty: {coords:?}"
            );
        }
    }
}
