//! Domain types shared by every stage of the pipeline: design points,
//! observations carrying derivative data, candidate pools with availability
//! tracking, estimated sparse equations, and recovery metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A location in the design space at which the system can be observed.
///
/// The interpretation of the coordinates is study-specific: a single time
/// value for dynamical systems sampled along a trajectory, a spatial
/// coordinate for a fixed-time snapshot of a 1-D field, or a pair of spatial
/// coordinates for a 2-D field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    coords: Vec<f64>,
}

impl DesignPoint {
    /// Creates a point from its coordinates. All coordinates must be finite.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidArgument(
                "design point must have at least one coordinate".into(),
            ));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("design point coordinates"));
        }
        Ok(Self { coords })
    }

    /// Convenience constructor for one-dimensional design spaces.
    pub fn scalar(value: f64) -> Result<Self> {
        Self::new(vec![value])
    }

    /// Number of coordinates.
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Coordinate `i`.
    pub fn coord(&self, i: usize) -> f64 {
        self.coords[i]
    }

    /// All coordinates as a slice.
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Squared Euclidean distance to another point of the same dimension.
    pub fn squared_distance(&self, other: &Self) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                context: "squared_distance",
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }
}

/// Partial derivative orders with respect to each spatial coordinate,
/// e.g. `[2]` for u_xx in one spatial dimension or `[1, 1]` for a mixed
/// second derivative in two.
pub type DerivOrders = Vec<u32>;

/// Values of one spatial derivative of every state component at a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialDerivative {
    /// Differentiation order per spatial coordinate.
    pub orders: DerivOrders,
    /// One value per state component.
    pub values: Vec<f64>,
}

/// Everything measured (or computed) at one design point: the state vector,
/// its time derivative, and any spatial derivatives the study provides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub point: DesignPoint,
    /// State components at the point.
    pub state: Vec<f64>,
    /// Time derivative of each state component (the regression response).
    pub time_derivative: Vec<f64>,
    /// Spatial derivatives, if the study provides them. Empty for pure
    /// time-series studies.
    pub spatial_derivatives: Vec<SpatialDerivative>,
}

impl Observation {
    /// Validates internal consistency: matching lengths and finite values.
    pub fn new(
        point: DesignPoint,
        state: Vec<f64>,
        time_derivative: Vec<f64>,
        spatial_derivatives: Vec<SpatialDerivative>,
    ) -> Result<Self> {
        if state.is_empty() {
            return Err(Error::InvalidArgument(
                "observation must have at least one state component".into(),
            ));
        }
        if time_derivative.len() != state.len() {
            return Err(Error::DimensionMismatch {
                context: "observation time derivative",
                expected: state.len(),
                actual: time_derivative.len(),
            });
        }
        for sd in &spatial_derivatives {
            if sd.values.len() != state.len() {
                return Err(Error::DimensionMismatch {
                    context: "observation spatial derivative",
                    expected: state.len(),
                    actual: sd.values.len(),
                });
            }
        }
        let finite = state.iter().all(|v| v.is_finite())
            && time_derivative.iter().all(|v| v.is_finite())
            && spatial_derivatives
                .iter()
                .all(|sd| sd.values.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::NonFinite("observation values"));
        }
        Ok(Self {
            point,
            state,
            time_derivative,
            spatial_derivatives,
        })
    }

    /// Number of state components.
    pub fn state_dim(&self) -> usize {
        self.state.len()
    }

    /// Looks up the values of the spatial derivative with the given orders.
    pub fn spatial_derivative(&self, orders: &[u32]) -> Option<&[f64]> {
        self.spatial_derivatives
            .iter()
            .find(|sd| sd.orders == orders)
            .map(|sd| sd.values.as_slice())
    }
}

/// A finite set of candidate design points with availability tracking.
///
/// Points are pairwise distinct; once selected, a point becomes permanently
/// unavailable.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    points: Vec<DesignPoint>,
    available: Vec<bool>,
    n_available: usize,
}

impl CandidatePool {
    /// Builds a pool, verifying that the points are pairwise distinct and
    /// share a common dimension.
    pub fn new(points: Vec<DesignPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("candidate pool is empty".into()));
        }
        let dim = points[0].dim();
        if points.iter().any(|p| p.dim() != dim) {
            return Err(Error::InvalidArgument(
                "candidate pool points must share one dimension".into(),
            ));
        }
        // Sort indices lexicographically by coordinates; duplicates land
        // adjacent. Coordinates are finite, so partial_cmp never fails.
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| {
            points[a]
                .coords()
                .partial_cmp(points[b].coords())
                .expect("finite coordinates are totally ordered")
        });
        for w in order.windows(2) {
            if points[w[0]] == points[w[1]] {
                return Err(Error::InvalidArgument(format!(
                    "candidate pool contains duplicate point {:?}",
                    points[w[0]].coords()
                )));
            }
        }
        let n = points.len();
        Ok(Self {
            points,
            available: vec![true; n],
            n_available: n,
        })
    }

    /// `n` equally spaced points covering `[lo, hi]`, endpoints included.
    pub fn linspace(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 || !(hi > lo) {
            return Err(Error::InvalidArgument(
                "linspace pool needs n >= 2 and hi > lo".into(),
            ));
        }
        let step = (hi - lo) / (n - 1) as f64;
        let points = (0..n)
            .map(|i| DesignPoint::scalar(lo + step * i as f64))
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }

    /// A full-factorial 2-D grid, row-major with the second coordinate
    /// varying fastest.
    pub fn grid_2d(x: (f64, f64, usize), y: (f64, f64, usize)) -> Result<Self> {
        let (xlo, xhi, nx) = x;
        let (ylo, yhi, ny) = y;
        if nx < 2 || ny < 2 || !(xhi > xlo) || !(yhi > ylo) {
            return Err(Error::InvalidArgument(
                "grid pool needs at least 2 nodes per axis and increasing bounds".into(),
            ));
        }
        let dx = (xhi - xlo) / (nx - 1) as f64;
        let dy = (yhi - ylo) / (ny - 1) as f64;
        let mut points = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            for j in 0..ny {
                points.push(DesignPoint::new(vec![
                    xlo + dx * i as f64,
                    ylo + dy * j as f64,
                ])?);
            }
        }
        Self::new(points)
    }

    /// Total number of points, available or not.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// True when the pool holds no points at all.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of still-available points.
    pub fn n_available(&self) -> usize {
        self.n_available
    }

    /// Dimension of the design space.
    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    /// The point at index `i`.
    pub fn point(&self, i: usize) -> &DesignPoint {
        &self.points[i]
    }

    /// All points, in index order.
    pub fn points(&self) -> &[DesignPoint] {
        &self.points
    }

    /// Whether point `i` is still selectable.
    pub fn is_available(&self, i: usize) -> bool {
        self.available[i]
    }

    /// Indices of the still-available points, ascending.
    pub fn available_indices(&self) -> Vec<usize> {
        (0..self.points.len())
            .filter(|&i| self.available[i])
            .collect()
    }

    /// Marks point `i` as selected. Selecting an unavailable point is an
    /// error: availability only ever decreases.
    pub fn mark_selected(&mut self, i: usize) -> Result<()> {
        if i >= self.points.len() {
            return Err(Error::InvalidArgument(format!(
                "pool index {i} out of range ({} points)",
                self.points.len()
            )));
        }
        if !self.available[i] {
            return Err(Error::InvalidArgument(format!(
                "pool point {i} was already selected"
            )));
        }
        self.available[i] = false;
        self.n_available -= 1;
        Ok(())
    }
}

/// A sparse linear combination of library terms: the outcome of variable
/// selection for one response component, or a ground-truth equation.
///
/// The coefficient vector is dense over the term library; the selected
/// support is exactly the set of nonzero entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedEquation {
    coefficients: Vec<f64>,
    sigma2: f64,
}

impl EstimatedEquation {
    /// Builds from a dense coefficient vector; the support is inferred from
    /// the nonzero entries.
    pub fn from_dense(coefficients: Vec<f64>, sigma2: f64) -> Result<Self> {
        if coefficients.iter().any(|c| !c.is_finite()) || !sigma2.is_finite() || sigma2 < 0.0 {
            return Err(Error::NonFinite("equation coefficients"));
        }
        Ok(Self {
            coefficients,
            sigma2,
        })
    }

    /// Builds from `(index, coefficient)` pairs over a library of `n_terms`
    /// terms. Coefficients given as exactly zero are rejected, as are
    /// repeated indices.
    pub fn from_sparse(n_terms: usize, entries: &[(usize, f64)], sigma2: f64) -> Result<Self> {
        let mut coefficients = vec![0.0; n_terms];
        for &(i, c) in entries {
            if i >= n_terms {
                return Err(Error::InvalidArgument(format!(
                    "term index {i} out of range for library of {n_terms}"
                )));
            }
            if c == 0.0 {
                return Err(Error::InvalidArgument(
                    "sparse equation entry with zero coefficient".into(),
                ));
            }
            if coefficients[i] != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "duplicate term index {i} in sparse equation"
                )));
            }
            coefficients[i] = c;
        }
        Self::from_dense(coefficients, sigma2)
    }

    /// Dense coefficients over the library.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Residual variance estimate attached to the fit (zero for truths).
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Number of terms in the underlying library.
    pub fn n_terms(&self) -> usize {
        self.coefficients.len()
    }

    /// Indices of nonzero coefficients, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.coefficients.len())
            .filter(|&i| self.coefficients[i] != 0.0)
            .collect()
    }

    /// Whether term `i` carries a nonzero coefficient.
    pub fn is_selected(&self, i: usize) -> bool {
        i < self.coefficients.len() && self.coefficients[i] != 0.0
    }
}

/// Number of support errors between an estimate and the truth: false
/// positives (selected but truly absent) plus false negatives (missed).
pub fn compute_gamma(estimate: &EstimatedEquation, truth: &EstimatedEquation) -> Result<usize> {
    if estimate.n_terms() != truth.n_terms() {
        return Err(Error::DimensionMismatch {
            context: "compute_gamma",
            expected: truth.n_terms(),
            actual: estimate.n_terms(),
        });
    }
    let count = (0..truth.n_terms())
        .filter(|&i| estimate.is_selected(i) != truth.is_selected(i))
        .count();
    Ok(count)
}

/// Euclidean distance between estimated and true coefficient vectors.
pub fn compute_l2_loss(estimate: &EstimatedEquation, truth: &EstimatedEquation) -> Result<f64> {
    if estimate.n_terms() != truth.n_terms() {
        return Err(Error::DimensionMismatch {
            context: "compute_l2_loss",
            expected: truth.n_terms(),
            actual: estimate.n_terms(),
        });
    }
    let sum: f64 = estimate
        .coefficients
        .iter()
        .zip(&truth.coefficients)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum.sqrt())
}

/// Support-error count for a system of equations: the sum over components.
pub fn compute_gamma_system(
    estimates: &[EstimatedEquation],
    truths: &[EstimatedEquation],
) -> Result<usize> {
    if estimates.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            context: "compute_gamma_system",
            expected: truths.len(),
            actual: estimates.len(),
        });
    }
    let mut total = 0;
    for (e, t) in estimates.iter().zip(truths) {
        total += compute_gamma(e, t)?;
    }
    Ok(total)
}

/// Coefficient loss for a system: the Euclidean norm of the concatenated
/// coefficient error across all components.
pub fn compute_l2_loss_system(
    estimates: &[EstimatedEquation],
    truths: &[EstimatedEquation],
) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            context: "compute_l2_loss_system",
            expected: truths.len(),
            actual: estimates.len(),
        });
    }
    let mut sum = 0.0;
    for (e, t) in estimates.iter().zip(truths) {
        let l = compute_l2_loss(e, t)?;
        sum += l * l;
    }
    Ok(sum.sqrt())
}

/// Recovery quality of one completed run against the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Support errors (false positives + false negatives), summed over
    /// system components.
    pub gamma: usize,
    /// Euclidean norm of the coefficient error, concatenated over
    /// components.
    pub l2_beta: f64,
    /// Total observations consumed by the run.
    pub n_total: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eq(coeffs: Vec<f64>) -> EstimatedEquation {
        EstimatedEquation::from_dense(coeffs, 0.0).unwrap()
    }

    #[test]
    fn design_point_basics() {
        let p = DesignPoint::new(vec![1.0, 2.0]).unwrap();
        assert_eq!(p.dim(), 2);
        assert_eq!(p.coord(1), 2.0);
        let q = DesignPoint::new(vec![4.0, 6.0]).unwrap();
        assert_eq!(p.squared_distance(&q).unwrap(), 25.0);
        assert!(DesignPoint::new(vec![f64::NAN]).is_err());
        assert!(DesignPoint::new(vec![]).is_err());
        let r = DesignPoint::scalar(3.0).unwrap();
        assert!(p.squared_distance(&r).is_err());
    }

    #[test]
    fn observation_validation() {
        let p = DesignPoint::scalar(0.0).unwrap();
        let ok = Observation::new(
            p.clone(),
            vec![1.0, 2.0],
            vec![0.1, 0.2],
            vec![SpatialDerivative {
                orders: vec![1],
                values: vec![3.0, 4.0],
            }],
        )
        .unwrap();
        assert_eq!(ok.state_dim(), 2);
        assert_eq!(ok.spatial_derivative(&[1]).unwrap(), &[3.0, 4.0]);
        assert!(ok.spatial_derivative(&[2]).is_none());

        assert!(Observation::new(p.clone(), vec![1.0], vec![0.1, 0.2], vec![]).is_err());
        assert!(Observation::new(p.clone(), vec![f64::INFINITY], vec![0.1], vec![]).is_err());
        let bad_sd = Observation::new(
            p,
            vec![1.0],
            vec![0.1],
            vec![SpatialDerivative {
                orders: vec![1],
                values: vec![1.0, 2.0],
            }],
        );
        assert!(bad_sd.is_err());
    }

    #[test]
    fn pool_rejects_duplicates_and_tracks_availability() {
        let pts = vec![
            DesignPoint::scalar(0.0).unwrap(),
            DesignPoint::scalar(1.0).unwrap(),
            DesignPoint::scalar(0.5).unwrap(),
        ];
        let mut pool = CandidatePool::new(pts.clone()).unwrap();
        assert_eq!(pool.len(), 3);
        assert_eq!(pool.n_available(), 3);
        pool.mark_selected(1).unwrap();
        assert!(!pool.is_available(1));
        assert_eq!(pool.available_indices(), vec![0, 2]);
        // Availability is monotone: re-selecting is an error.
        assert!(pool.mark_selected(1).is_err());
        assert_eq!(pool.n_available(), 2);

        let mut dup = pts;
        dup.push(DesignPoint::scalar(0.5).unwrap());
        assert!(CandidatePool::new(dup).is_err());
    }

    #[test]
    fn pool_constructors() {
        let pool = CandidatePool::linspace(0.0, 30.0, 3000).unwrap();
        assert_eq!(pool.len(), 3000);
        assert_eq!(pool.point(0).coord(0), 0.0);
        assert!((pool.point(2999).coord(0) - 30.0).abs() < 1e-12);

        let grid = CandidatePool::grid_2d((0.0, 10.0, 32), (0.0, 10.0, 32)).unwrap();
        assert_eq!(grid.len(), 1024);
        assert_eq!(grid.dim(), 2);
        // Second coordinate varies fastest.
        assert_eq!(grid.point(1).coords()[0], 0.0);
        assert!(grid.point(1).coords()[1] > 0.0);
    }

    #[test]
    fn equation_support_and_sparse_construction() {
        let e = EstimatedEquation::from_sparse(5, &[(3, 0.01), (1, -1.0)], 0.2).unwrap();
        assert_eq!(e.support(), vec![1, 3]);
        assert_eq!(e.coefficients(), &[0.0, -1.0, 0.0, 0.01, 0.0]);
        assert!(e.is_selected(3));
        assert!(!e.is_selected(0));
        assert!(EstimatedEquation::from_sparse(5, &[(5, 1.0)], 0.0).is_err());
        assert!(EstimatedEquation::from_sparse(5, &[(2, 0.0)], 0.0).is_err());
        assert!(EstimatedEquation::from_sparse(5, &[(2, 1.0), (2, 2.0)], 0.0).is_err());
    }

    #[test]
    fn gamma_counts_support_errors() {
        // Estimate selects {1, 3}; truth is {1, 2}: one false positive and
        // one false negative.
        let est = eq(vec![0.0, 2.0, 0.0, -1.0]);
        let tru = eq(vec![0.0, 2.0, 0.5, 0.0]);
        assert_eq!(compute_gamma(&est, &tru).unwrap(), 2);
        // Perfect support, different values: gamma is zero.
        let est2 = eq(vec![0.0, 1.9, 0.6, 0.0]);
        assert_eq!(compute_gamma(&est2, &tru).unwrap(), 0);
        // Identity.
        assert_eq!(compute_gamma(&tru, &tru).unwrap(), 0);
        // Dimension mismatch.
        let short = eq(vec![1.0]);
        assert!(compute_gamma(&short, &tru).is_err());
    }

    #[test]
    fn l2_loss_is_euclidean() {
        let est = eq(vec![1.0, 0.0, 2.0]);
        let tru = eq(vec![1.0, 1.0, 0.0]);
        let l = compute_l2_loss(&est, &tru).unwrap();
        assert!((l - 5.0_f64.sqrt()).abs() < 1e-15);
        assert_eq!(compute_l2_loss(&tru, &tru).unwrap(), 0.0);
    }

    #[test]
    fn system_metrics_aggregate() {
        let e1 = eq(vec![1.0, 0.0]);
        let t1 = eq(vec![0.0, 1.0]);
        let e2 = eq(vec![0.0, 3.0]);
        let t2 = eq(vec![0.0, 1.0]);
        // Component gammas 2 and 0 sum to 2.
        assert_eq!(compute_gamma_system(&[e1.clone(), e2.clone()], &[t1.clone(), t2.clone()]).unwrap(), 2);
        // Component losses sqrt(2) and 2 combine as sqrt(2 + 4).
        let l = compute_l2_loss_system(&[e1, e2], &[t1, t2]).unwrap();
        assert!((l - 6.0_f64.sqrt()).abs() < 1e-15);
    }
}
