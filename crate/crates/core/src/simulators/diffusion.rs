//! Isotropic 2-D diffusion c_t = c_xx + c_yy on a rectangle with zero
//! boundary values, solved by the explicit FTCS scheme, plus the snapshot
//! oracle built on the solution.
//!
//! The study observes a very short horizon (ten steps), so the explicit
//! scheme is both stable — its diffusion-number bound is checked up
//! front — and effectively exact in time at the step it uses.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use crate::activelearn::DataOracle;
use crate::error::{Error, Result};
use crate::simulators::noise::{add_noise, NoiseTarget};
use crate::simulators::stencil::{
    central_time_derivative, first_derivative, forward_time_derivative, second_derivative,
};
use crate::types::{DesignPoint, EstimatedEquation, Observation, SpatialDerivative};

use crate::basis::TermLibrary;

/// Uniform rectangular space–time grid. Node layout is row-major with the
/// second coordinate fastest: index = ix·n_nodes[1] + iy.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2d {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub n_nodes: [usize; 2],
    pub dt: f64,
}

impl Grid2d {
    pub fn new(lo: [f64; 2], hi: [f64; 2], n_nodes: [usize; 2], dt: f64) -> Result<Self> {
        for s in 0..2 {
            if !(hi[s] > lo[s] && lo[s].is_finite() && hi[s].is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "invalid interval [{}, {}]",
                    lo[s], hi[s]
                )));
            }
            if n_nodes[s] < 4 {
                return Err(Error::InvalidArgument(
                    "grid needs at least four nodes per axis".into(),
                ));
            }
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "time step must be positive, got {dt}"
            )));
        }
        let g = Self {
            lo,
            hi,
            n_nodes,
            dt,
        };
        // Explicit-scheme diffusion bound: δt ≤ δx²δy² / (2(δx²+δy²)).
        let (sx, sy) = (g.step(0), g.step(1));
        let bound = sx * sx * sy * sy / (2.0 * (sx * sx + sy * sy));
        if dt > bound {
            return Err(Error::Instability(format!(
                "time step {dt} exceeds the explicit diffusion bound {bound}"
            )));
        }
        Ok(g)
    }

    pub fn step(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.n_nodes[axis] - 1) as f64
    }

    pub fn node(&self, axis: usize, i: usize) -> f64 {
        self.lo[axis] + i as f64 * self.step(axis)
    }
}

/// A solved 2-D field at one time level with every derivative the study's
/// term library consumes. Layout matches [`Grid2d`]: index = ix·ny + iy.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot2d {
    pub lo: [f64; 2],
    pub step: [f64; 2],
    pub n_nodes: [usize; 2],
    pub dt: f64,
    pub t_snapshot: f64,
    pub c: Vec<f64>,
    pub c_x: Vec<f64>,
    pub c_y: Vec<f64>,
    pub c_xx: Vec<f64>,
    pub c_yy: Vec<f64>,
    pub c_xy: Vec<f64>,
    pub c_t: Vec<f64>,
}

impl FieldSnapshot2d {
    fn axis_index(&self, axis: usize, v: f64) -> Result<usize> {
        let i = ((v - self.lo[axis]) / self.step[axis]).round();
        let ok = i >= 0.0
            && (i as usize) < self.n_nodes[axis]
            && (self.lo[axis] + i * self.step[axis] - v).abs() <= 1e-9;
        if ok {
            Ok(i as usize)
        } else {
            Err(Error::DataSource(format!(
                "query coordinate {v} does not lie on the solved grid"
            )))
        }
    }

    /// Flat index of a query point, which must lie on a node to within
    /// 1e-9 per coordinate.
    pub fn node_index(&self, x: f64, y: f64) -> Result<usize> {
        let ix = self.axis_index(0, x)?;
        let iy = self.axis_index(1, y)?;
        Ok(ix * self.n_nodes[1] + iy)
    }

    /// The noiseless observation at a grid node, keeping the caller's
    /// coordinates so they match the candidate pool bit for bit.
    pub fn observation(&self, x: f64, y: f64) -> Result<Observation> {
        let i = self.node_index(x, y)?;
        let deriv = |orders: [u32; 2], values: &[f64]| SpatialDerivative {
            orders: orders.to_vec(),
            values: vec![values[i]],
        };
        Observation::new(
            DesignPoint::new(vec![x, y])?,
            vec![self.c[i]],
            vec![self.c_t[i]],
            vec![
                deriv([1, 0], &self.c_x),
                deriv([0, 1], &self.c_y),
                deriv([2, 0], &self.c_xx),
                deriv([0, 2], &self.c_yy),
                deriv([1, 1], &self.c_xy),
            ],
        )
    }
}

/// The study's initial concentration: two correlated Gaussian densities
/// centered at (3, 5) and (7, 5) with covariance [[0.25, 0.3], [0.3, 1]].
pub fn two_source_initial_condition(x: f64, y: f64) -> f64 {
    // Inverse covariance [[6.25, −1.875], [−1.875, 1.5625]], det = 0.16.
    const NORM: f64 = 0.397_887_357_729_738_4; // 1 / (2π·√0.16)
    let bump = |mx: f64, my: f64| {
        let (rx, ry) = (x - mx, y - my);
        let q = 6.25 * rx * rx - 2.0 * 1.875 * rx * ry + 1.5625 * ry * ry;
        NORM * (-0.5 * q).exp()
    };
    bump(3.0, 5.0) + bump(7.0, 5.0)
}

/// The study grid: [0, 10]² at 311×311 nodes, time step 5e−5.
pub fn diffusion_study_grid() -> Grid2d {
    Grid2d::new([0.0, 0.0], [10.0, 10.0], [311, 311], 5e-5).expect("static grid")
}

/// c_t = c_xx + c_yy as a sparse equation over the 2-D field library.
pub fn diffusion_truth_equations(library: &TermLibrary) -> Result<Vec<EstimatedEquation>> {
    Ok(vec![EstimatedEquation::from_sparse(
        library.len(),
        &[
            (library.index_by_name("u_xx")?, 1.0),
            (library.index_by_name("u_yy")?, 1.0),
        ],
        0.0,
    )?])
}

/// Derivative of a flat row-major field along an axis, one grid line at a
/// time, second-order everywhere.
fn field_derivative(
    values: &[f64],
    n: [usize; 2],
    step: [f64; 2],
    axis: usize,
    second: bool,
) -> Vec<f64> {
    let (nx, ny) = (n[0], n[1]);
    let mut out = vec![0.0; values.len()];
    match axis {
        0 => {
            let mut line = vec![0.0; nx];
            for iy in 0..ny {
                for ix in 0..nx {
                    line[ix] = values[ix * ny + iy];
                }
                let d = if second {
                    second_derivative(&line, step[0])
                } else {
                    first_derivative(&line, step[0])
                };
                for ix in 0..nx {
                    out[ix * ny + iy] = d[ix];
                }
            }
        }
        1 => {
            for ix in 0..nx {
                let row = &values[ix * ny..(ix + 1) * ny];
                let d = if second {
                    second_derivative(row, step[1])
                } else {
                    first_derivative(row, step[1])
                };
                out[ix * ny..(ix + 1) * ny].copy_from_slice(&d);
            }
        }
        _ => unreachable!("two axes"),
    }
    out
}

/// Solves c_t = c_xx + c_yy with zero boundary values, returning the field
/// and all first/second derivatives at `t_snapshot` (a whole number of
/// time steps). The time derivative comes from a second-order stencil
/// across adjacent levels.
pub fn solve_diffusion_2d(
    initial: impl Fn(f64, f64) -> f64,
    grid: &Grid2d,
    t_snapshot: f64,
) -> Result<FieldSnapshot2d> {
    let steps_f = t_snapshot / grid.dt;
    let n_t = steps_f.round();
    if !(t_snapshot >= 0.0) || (steps_f - n_t).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "snapshot time {t_snapshot} is not a whole number of steps of {}",
            grid.dt
        )));
    }
    let n_t = n_t as usize;
    let (nx, ny) = (grid.n_nodes[0], grid.n_nodes[1]);
    let (sx, sy) = (grid.step(0), grid.step(1));
    let (rx, ry) = (grid.dt / (sx * sx), grid.dt / (sy * sy));

    let mut c0 = vec![0.0; nx * ny];
    for ix in 0..nx {
        for iy in 0..ny {
            c0[ix * ny + iy] = initial(grid.node(0, ix), grid.node(1, iy));
        }
    }
    if c0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial condition"));
    }
    // Zero Dirichlet boundary, including at the initial level.
    let zero_boundary = |c: &mut [f64]| {
        for ix in 0..nx {
            c[ix * ny] = 0.0;
            c[ix * ny + ny - 1] = 0.0;
        }
        for iy in 0..ny {
            c[iy] = 0.0;
            c[(nx - 1) * ny + iy] = 0.0;
        }
    };
    zero_boundary(&mut c0);

    let last_level = if n_t == 0 { 2 } else { n_t + 1 };
    let mut levels: Vec<Vec<f64>> = vec![c0];
    for _ in 0..last_level {
        let c = levels.last().expect("nonempty");
        let mut next = vec![0.0; nx * ny];
        for ix in 1..nx - 1 {
            for iy in 1..ny - 1 {
                let idx = ix * ny + iy;
                next[idx] = c[idx]
                    + rx * (c[idx + ny] - 2.0 * c[idx] + c[idx - ny])
                    + ry * (c[idx + 1] - 2.0 * c[idx] + c[idx - 1]);
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Instability("non-finite field".into()));
        }
        levels.push(next);
        if levels.len() > 3 {
            levels.remove(0);
        }
    }

    let (snap, c_t) = if n_t == 0 {
        let ct = forward_time_derivative(&levels[0], &levels[1], &levels[2], grid.dt);
        (levels[0].clone(), ct)
    } else {
        let ct = central_time_derivative(&levels[0], &levels[2], grid.dt);
        (levels[1].clone(), ct)
    };
    let n = grid.n_nodes;
    let step = [sx, sy];
    let c_x = field_derivative(&snap, n, step, 0, false);
    let c_y = field_derivative(&snap, n, step, 1, false);
    let c_xx = field_derivative(&snap, n, step, 0, true);
    let c_yy = field_derivative(&snap, n, step, 1, true);
    let c_xy = field_derivative(&c_x, n, step, 1, false);
    Ok(FieldSnapshot2d {
        lo: grid.lo,
        step,
        n_nodes: n,
        dt: grid.dt,
        t_snapshot: n_t as f64 * grid.dt,
        c: snap,
        c_x,
        c_y,
        c_xx,
        c_yy,
        c_xy,
        c_t,
    })
}

/// Observation source for 2-D field studies: noiseless state and spatial
/// derivatives from the precomputed snapshot, Gaussian noise of variance
/// `sigma2` on the time derivative.
pub struct SnapshotOracle2d {
    snapshot: Arc<FieldSnapshot2d>,
    sigma2: f64,
    rng: ChaCha8Rng,
}

impl SnapshotOracle2d {
    pub fn new(snapshot: Arc<FieldSnapshot2d>, sigma2: f64, rng: ChaCha8Rng) -> Self {
        Self {
            snapshot,
            sigma2,
            rng,
        }
    }
}

impl DataOracle for SnapshotOracle2d {
    fn observe(&mut self, points: &[DesignPoint]) -> Result<Vec<Observation>> {
        let clean: Vec<Observation> = points
            .iter()
            .map(|p| {
                if p.dim() != 2 {
                    return Err(Error::DimensionMismatch {
                        context: "2-D snapshot oracle query",
                        expected: 2,
                        actual: p.dim(),
                    });
                }
                self.snapshot.observation(p.coord(0), p.coord(1))
            })
            .collect::<Result<_>>()?;
        add_noise(&clean, self.sigma2, NoiseTarget::TimeDerivative, &mut self.rng)
    }
}

/// The study pool: every 10th node per axis, a 32×32 grid spanning the
/// domain corners.
pub fn diffusion_pool_nodes(snapshot: &FieldSnapshot2d) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut ix = 0;
    while ix < snapshot.n_nodes[0] {
        let mut iy = 0;
        while iy < snapshot.n_nodes[1] {
            out.push((
                snapshot.lo[0] + ix as f64 * snapshot.step[0],
                snapshot.lo[1] + iy as f64 * snapshot.step[1],
            ));
            iy += 10;
        }
        ix += 10;
    }
    out
}
