//! Reference systems the studies learn from: closed-form and numerically
//! integrated dynamics, finite-difference field solvers, and the data
//! oracles that serve noisy observations from them.
//!
//! - [`ode`]: polynomial ODE systems, a Dormand–Prince integrator, the
//!   damped rotation benchmark, and its table-backed oracle;
//! - [`bass`]: the logistic adoption model with closed-form state and rate;
//! - [`burgers`]: viscous Burgers on a line, solved semi-implicitly;
//! - [`diffusion`]: isotropic 2-D diffusion, solved explicitly;
//! - [`stencil`]: shared second-order finite-difference stencils;
//! - [`noise`]: Gaussian perturbation of chosen observation fields;
//! - [`snapshot`]: a binary cache for solved field snapshots.

pub mod bass;
pub mod burgers;
pub mod diffusion;
pub mod noise;
pub mod ode;
pub mod snapshot;
pub(crate) mod stencil;

pub use bass::{
    bass_library, bass_solution, bass_truth_equations, sample_bass_coefficients, BassOracle,
};
pub use burgers::{
    burgers_initial_condition, burgers_pool_nodes, burgers_study_grid, burgers_truth_equations,
    solve_burgers, FieldSnapshot1d, Grid1d, SnapshotOracle1d, BURGERS_NU,
};
pub use diffusion::{
    diffusion_pool_nodes, diffusion_study_grid, diffusion_truth_equations, solve_diffusion_2d,
    two_source_initial_condition, FieldSnapshot2d, Grid2d, SnapshotOracle2d,
};
pub use noise::{add_noise, NoiseTarget};
pub use ode::{
    integrate_rk45, linear_system_spec, linear_system_solution, sample_random_coeff_system,
    solve_ode, OdeOracle, OdeSpec, OdeTable, Rk45Options,
};
pub use snapshot::{read_snapshot_1d, read_snapshot_2d, write_snapshot_1d, write_snapshot_2d};
