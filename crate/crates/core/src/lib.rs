//! Active learning for sparse identification of differential equations.
//!
//! This crate discovers the governing equations of dynamical systems and
//! spatio-temporal fields from noisy data gathered *sequentially*: instead
//! of fitting a sparse regression to a fixed data set, it decides where to
//! observe next. Candidate locations are scored by a convex combination of
//! a space-filling term (squared distance to the nearest existing
//! observation) and a D-optimality term (the determinant gain of the
//! regularized regression information matrix), with weights adapted each
//! round from the cross-validated error of Gaussian-process surrogates and
//! the residual variance of the current sparse fit. Equations are
//! estimated by forward stepwise regression over a library of candidate
//! terms, scored by BIC.
//!
//! Module map:
//! - [`types`]: design points, observations, pools, equations, metrics;
//! - [`gp`]: Gaussian-process surrogates with analytic derivatives;
//! - [`basis`]: term libraries and their evaluation;
//! - [`varsel`]: forward stepwise selection and confidence intervals;
//! - [`design`]: selection criteria and Gram bookkeeping;
//! - [`activelearn`]: the batch-sequential acquisition loop;
//! - [`simulators`]: reference systems, solvers, and data oracles;
//! - [`studies`]: the benchmark studies wired end to end.

pub mod activelearn;
pub mod basis;
pub mod design;
pub mod error;
pub mod gp;
pub mod simulators;
pub mod studies;
pub mod types;
pub mod varsel;

pub use error::{Error, Result};
pub use types::{
    compute_gamma, compute_gamma_system, compute_l2_loss, compute_l2_loss_system, CandidatePool,
    DesignPoint, EstimatedEquation, Metrics, Observation,
};
