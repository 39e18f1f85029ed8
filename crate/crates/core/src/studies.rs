//! The five benchmark studies: their candidate pools, term libraries,
//! data oracles, ground truths, and default run settings, behind one
//! entry point that maps a (study, criterion, noise level, seed) cell to
//! a completed [`RunRecord`].
//!
//! Everything stochastic in a run derives from its single `run_seed`:
//! the run configuration (initial design, surrogate multistarts), the
//! observation noise stream, and — for studies with randomly drawn
//! systems — the system coefficients each use an independent stream
//! split from it, so one integer reproduces the run bit for bit.

use std::sync::{Arc, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::activelearn::{
    mix_seed, run, Criterion, InitDesign, RunConfig, RunFailure, RunRecord,
};
use crate::basis::{build_field_library, build_monomial_library, burgers_library, TermLibrary};
use crate::error::Result;
use crate::simulators::bass::{bass_truth_equations, sample_bass_coefficients, BassOracle};
use crate::simulators::burgers::{
    burgers_initial_condition, burgers_pool_nodes, burgers_study_grid, burgers_truth_equations,
    solve_burgers, FieldSnapshot1d, SnapshotOracle1d, BURGERS_NU,
};
use crate::simulators::diffusion::{
    diffusion_pool_nodes, diffusion_study_grid, diffusion_truth_equations, solve_diffusion_2d,
    two_source_initial_condition, FieldSnapshot2d, SnapshotOracle2d,
};
use crate::simulators::noise::NoiseTarget;
use crate::simulators::ode::{
    linear_system_spec, sample_random_coeff_system, OdeOracle, OdeTable, Rk45Options,
};
use crate::types::{CandidatePool, DesignPoint, EstimatedEquation};

use serde::{Deserialize, Serialize};

/// Which benchmark system a run learns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    /// Damped rotation: dy/dt = [[−a, b], [−b, −a]]·y with (a, b) = (0.5, 2).
    OdeLinear,
    /// The same form with (a, b) drawn fresh per replication.
    OdeRandom,
    /// Logistic adoption dF/dt = (1−F)(p+qF), coefficients drawn per
    /// replication, noise on the state.
    Bass,
    /// Viscous Burgers field at one time snapshot.
    Burgers,
    /// Isotropic 2-D diffusion field at one time snapshot.
    Diffusion2d,
}

impl Study {
    pub const ALL: [Study; 5] = [
        Study::OdeLinear,
        Study::OdeRandom,
        Study::Bass,
        Study::Burgers,
        Study::Diffusion2d,
    ];

    /// Stable identifier used in output files and seed derivation.
    pub fn name(self) -> &'static str {
        match self {
            Study::OdeLinear => "ode-linear",
            Study::OdeRandom => "ode-random",
            Study::Bass => "bass",
            Study::Burgers => "burgers",
            Study::Diffusion2d => "diffusion-2d",
        }
    }

    pub fn parse(s: &str) -> Option<Study> {
        Study::ALL.into_iter().find(|st| st.name() == s)
    }

    /// The noise variances the corresponding published table sweeps.
    pub fn default_sigma2(self) -> &'static [f64] {
        match self {
            Study::OdeLinear => &[0.04, 0.25, 0.64],
            Study::OdeRandom => &[0.16, 0.36, 0.64],
            Study::Bass => &[1e-4, 4e-4, 1.6e-3],
            Study::Burgers | Study::Diffusion2d => &[0.04, 0.16, 0.64],
        }
    }

    /// The run configuration the study uses unless overridden: initial
    /// design size, batch size, stopping rule, and initialization scheme.
    pub fn default_config(self, criterion: Criterion) -> RunConfig {
        let base = RunConfig {
            criterion,
            ..RunConfig::default()
        };
        match self {
            Study::OdeLinear | Study::Bass => base,
            Study::OdeRandom => RunConfig {
                fixed_n: Some(112),
                ..base
            },
            Study::Burgers => RunConfig {
                n_init: 5,
                batch_size: 10,
                n_max: 200,
                ..base
            },
            Study::Diffusion2d => RunConfig {
                fixed_n: Some(80),
                init_design: InitDesign::LatinHypercube,
                ..base
            },
        }
    }
}

/// Optional departures from a study's published protocol.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StudyOverrides {
    /// Acquire until exactly this many observations (disables the
    /// convergence stop).
    pub fixed_n: Option<usize>,
    /// Design-size budget for the convergence protocol.
    pub n_max: Option<usize>,
    /// Convergence tolerance.
    pub tol: Option<f64>,
    pub batch_size: Option<usize>,
    pub n_init: Option<usize>,
    /// See [`RunConfig::normalize_weights`].
    pub normalize_weights: Option<bool>,
}

impl StudyOverrides {
    fn apply(&self, mut config: RunConfig) -> RunConfig {
        if let Some(n) = self.fixed_n {
            config.fixed_n = Some(n);
        }
        if let Some(n) = self.n_max {
            config.n_max = n;
        }
        if let Some(t) = self.tol {
            config.tol = t;
        }
        if let Some(b) = self.batch_size {
            config.batch_size = b;
        }
        if let Some(n) = self.n_init {
            config.n_init = n;
        }
        if let Some(w) = self.normalize_weights {
            config.normalize_weights = w;
        }
        config
    }
}

/// Shared immutable inputs — solved field snapshots and the linear-study
/// trajectory table — computed once and reused across runs and threads.
#[derive(Default)]
pub struct StudyContext {
    ode_table: OnceLock<Arc<OdeTable>>,
    burgers: OnceLock<Arc<FieldSnapshot1d>>,
    diffusion: OnceLock<Arc<FieldSnapshot2d>>,
}

/// Number of candidate time points for the ODE and Bass studies.
pub const TIME_POOL_SIZE: usize = 3000;
/// Time horizon for the ODE and Bass studies.
pub const TIME_HORIZON: f64 = 30.0;
/// Snapshot time of the Burgers study.
pub const BURGERS_SNAPSHOT_TIME: f64 = 0.1;
/// Snapshot time of the 2-D diffusion study.
pub const DIFFUSION_SNAPSHOT_TIME: f64 = 5e-4;

impl StudyContext {
    pub fn new() -> Self {
        Self::default()
    }

    /// Noiseless trajectory of the fixed linear system on the time pool.
    pub fn ode_table(&self) -> Result<Arc<OdeTable>> {
        if let Some(t) = self.ode_table.get() {
            return Ok(t.clone());
        }
        let spec = linear_system_spec(0.5, 2.0, 4, TIME_HORIZON)?;
        let pool = time_pool()?;
        let times: Vec<f64> = pool.points().iter().map(|p| p.coord(0)).collect();
        let table = Arc::new(OdeTable::build(&spec, &times, &Rk45Options::default())?);
        Ok(self.ode_table.get_or_init(|| table).clone())
    }

    /// The solved Burgers field at the study snapshot, on the study grid.
    pub fn burgers_snapshot(&self) -> Result<Arc<FieldSnapshot1d>> {
        if let Some(s) = self.burgers.get() {
            return Ok(s.clone());
        }
        let snap = Arc::new(solve_burgers(
            burgers_initial_condition,
            &burgers_study_grid(),
            BURGERS_NU,
            BURGERS_SNAPSHOT_TIME,
        )?);
        Ok(self.burgers.get_or_init(|| snap).clone())
    }

    /// Installs a precomputed Burgers snapshot (e.g. from a cache file).
    /// No-op if one is already set; returns the one in effect.
    pub fn install_burgers_snapshot(&self, snap: Arc<FieldSnapshot1d>) -> Arc<FieldSnapshot1d> {
        self.burgers.get_or_init(|| snap).clone()
    }

    /// The solved diffusion field at the study snapshot, on the study grid.
    pub fn diffusion_snapshot(&self) -> Result<Arc<FieldSnapshot2d>> {
        if let Some(s) = self.diffusion.get() {
            return Ok(s.clone());
        }
        let snap = Arc::new(solve_diffusion_2d(
            two_source_initial_condition,
            &diffusion_study_grid(),
            DIFFUSION_SNAPSHOT_TIME,
        )?);
        Ok(self.diffusion.get_or_init(|| snap).clone())
    }

    /// Installs a precomputed diffusion snapshot (e.g. from a cache file).
    pub fn install_diffusion_snapshot(&self, snap: Arc<FieldSnapshot2d>) -> Arc<FieldSnapshot2d> {
        self.diffusion.get_or_init(|| snap).clone()
    }
}

/// The shared time pool of the ODE and Bass studies.
pub fn time_pool() -> Result<CandidatePool> {
    CandidatePool::linspace(0.0, TIME_HORIZON, TIME_POOL_SIZE)
}

/// The term library each study searches.
pub fn study_library(study: Study) -> Result<TermLibrary> {
    match study {
        Study::OdeLinear | Study::OdeRandom => build_monomial_library(2, 4),
        Study::Bass => build_monomial_library(1, 5),
        Study::Burgers => Ok(burgers_library()),
        Study::Diffusion2d => build_field_library(
            1,
            2,
            &[vec![1, 0], vec![0, 1], vec![2, 0], vec![0, 2], vec![1, 1]],
            2,
        ),
    }
}

/// Executes one study run. `run_seed` alone determines the outcome; the
/// run configuration's seed, the noise stream, and any random system
/// coefficients are derived from it through independent splits.
pub fn run_study(
    ctx: &StudyContext,
    study: Study,
    criterion: Criterion,
    sigma2: f64,
    run_seed: u64,
    overrides: &StudyOverrides,
) -> std::result::Result<RunRecord, Box<RunFailure>> {
    let into_failure =
        |e: crate::error::Error| Box::new(RunFailure::from_setup(e));

    let mut config = overrides.apply(study.default_config(criterion));
    config.seed = mix_seed(run_seed, &[1]);
    let noise_rng = ChaCha8Rng::seed_from_u64(mix_seed(run_seed, &[2]));
    let mut system_rng = ChaCha8Rng::seed_from_u64(mix_seed(run_seed, &[3]));

    let library = study_library(study).map_err(&into_failure)?;

    match study {
        Study::OdeLinear => {
            let table = ctx.ode_table().map_err(&into_failure)?;
            let truth = linear_system_spec(0.5, 2.0, 4, TIME_HORIZON)
                .map_err(&into_failure)?
                .truth_equations();
            let mut pool = time_pool().map_err(&into_failure)?;
            let mut oracle = OdeOracle::new(table, sigma2, noise_rng);
            run(&config, &mut oracle, &library, &mut pool, Some(&truth))
        }
        Study::OdeRandom => {
            let spec =
                sample_random_coeff_system(&mut system_rng, 4, TIME_HORIZON)
                    .map_err(&into_failure)?;
            let truth = spec.truth_equations();
            let mut pool = time_pool().map_err(&into_failure)?;
            let times: Vec<f64> = pool.points().iter().map(|p| p.coord(0)).collect();
            let table = Arc::new(
                OdeTable::build(&spec, &times, &Rk45Options::default())
                    .map_err(&into_failure)?,
            );
            let mut oracle = OdeOracle::new(table, sigma2, noise_rng);
            run(&config, &mut oracle, &library, &mut pool, Some(&truth))
        }
        Study::Bass => {
            let (p, q) = sample_bass_coefficients(&mut system_rng);
            let truth = bass_truth_equations(p, q, &library).map_err(&into_failure)?;
            let mut pool = time_pool().map_err(&into_failure)?;
            let mut oracle = BassOracle::new(p, q, sigma2, NoiseTarget::State, noise_rng)
                .map_err(&into_failure)?;
            run(&config, &mut oracle, &library, &mut pool, Some(&truth))
        }
        Study::Burgers => {
            let snap = ctx.burgers_snapshot().map_err(&into_failure)?;
            let truth = burgers_truth_equations(&library, BURGERS_NU).map_err(&into_failure)?;
            let nodes = burgers_pool_nodes(&snap);
            let points: Vec<DesignPoint> = nodes
                .into_iter()
                .map(DesignPoint::scalar)
                .collect::<Result<_>>()
                .map_err(&into_failure)?;
            let mut pool = CandidatePool::new(points).map_err(&into_failure)?;
            let mut oracle = SnapshotOracle1d::new(snap, sigma2, noise_rng);
            run(&config, &mut oracle, &library, &mut pool, Some(&truth))
        }
        Study::Diffusion2d => {
            let snap = ctx.diffusion_snapshot().map_err(&into_failure)?;
            let truth = diffusion_truth_equations(&library).map_err(&into_failure)?;
            let points: Vec<DesignPoint> = diffusion_pool_nodes(&snap)
                .into_iter()
                .map(|(x, y)| DesignPoint::new(vec![x, y]))
                .collect::<Result<_>>()
                .map_err(&into_failure)?;
            let mut pool = CandidatePool::new(points).map_err(&into_failure)?;
            let mut oracle = SnapshotOracle2d::new(snap, sigma2, noise_rng);
            run(&config, &mut oracle, &library, &mut pool, Some(&truth))
        }
    }
}

/// Ground truth of a study cell, for metric recomputation outside runs.
/// Randomly drawn systems need the same `run_seed` the run used.
pub fn study_truth(study: Study, run_seed: u64) -> Result<Vec<EstimatedEquation>> {
    let library = study_library(study)?;
    let mut system_rng = ChaCha8Rng::seed_from_u64(mix_seed(run_seed, &[3]));
    match study {
        Study::OdeLinear => Ok(linear_system_spec(0.5, 2.0, 4, TIME_HORIZON)?.truth_equations()),
        Study::OdeRandom => {
            Ok(sample_random_coeff_system(&mut system_rng, 4, TIME_HORIZON)?.truth_equations())
        }
        Study::Bass => {
            let (p, q) = sample_bass_coefficients(&mut system_rng);
            bass_truth_equations(p, q, &library)
        }
        Study::Burgers => burgers_truth_equations(&library, BURGERS_NU),
        Study::Diffusion2d => diffusion_truth_equations(&library),
    }
}
