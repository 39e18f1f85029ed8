//! Sparse equation estimation: forward stepwise selection scored by BIC,
//! with Student-t confidence intervals for the selected coefficients.

use nalgebra::{Cholesky, DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::types::EstimatedEquation;

/// A linear regression instance: model matrix columns are candidate terms,
/// the response is one component of the observed time derivative.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    matrix: DMatrix<f64>,
    response: DVector<f64>,
}

impl RegressionProblem {
    /// Validates shapes and finiteness.
    pub fn new(matrix: DMatrix<f64>, response: DVector<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "regression needs at least one row and one column".into(),
            ));
        }
        if matrix.nrows() != response.len() {
            return Err(Error::DimensionMismatch {
                context: "regression response",
                expected: matrix.nrows(),
                actual: response.len(),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("regression matrix"));
        }
        if response.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("regression response"));
        }
        Ok(Self { matrix, response })
    }

    /// Number of observations.
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// Number of candidate terms.
    pub fn n_terms(&self) -> usize {
        self.matrix.ncols()
    }

    /// The model matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// The response vector.
    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }
}

/// Diagnostic trace of a stepwise run.
#[derive(Debug, Clone)]
pub struct StepwisePath {
    /// BIC after each accepted model, starting with the empty model.
    pub bic: Vec<f64>,
    /// Term indices in order of addition.
    pub added: Vec<usize>,
}

/// Candidate columns whose component orthogonal to the already-selected
/// span is smaller than this fraction of their norm are treated as
/// collinear and skipped.
const COLLINEARITY_TOL: f64 = 1e-6;

/// Residual sum of squares below this fraction of ‖y‖² counts as a
/// numerically exact fit: double precision leaves ~1e−32 relative
/// residual on an exact model, while any genuine signal sits many orders
/// of magnitude higher.
const EXACT_FIT_FLOOR: f64 = 1e-20;

/// A selected term whose contribution ‖β_j·col_j‖ falls below this
/// fraction of ‖y‖ is a rounding artifact, not an estimate.
const NUMERICALLY_ZERO: f64 = 1e-10;

/// Least squares of `response` on the columns `idx` of `matrix`, computed
/// on unit-normalized columns for scale-free conditioning checks.
///
/// Returns the coefficients (original scale, aligned with `idx`) and the
/// residual sum of squares, or `None` when the subset is numerically
/// collinear or contains a zero column.
fn subset_least_squares(
    matrix: &DMatrix<f64>,
    response: &DVector<f64>,
    idx: &[usize],
) -> Option<(Vec<f64>, f64)> {
    let n = matrix.nrows();
    let q = idx.len();
    let mut norms = Vec::with_capacity(q);
    let mut cols = DMatrix::zeros(n, q);
    for (c, &j) in idx.iter().enumerate() {
        let col = matrix.column(j);
        let norm = col.norm();
        if !(norm > 0.0) {
            return None;
        }
        norms.push(norm);
        for i in 0..n {
            cols[(i, c)] = col[i] / norm;
        }
    }
    // Normalized Gram matrix has a unit diagonal, so small Cholesky pivots
    // directly measure the angle between a column and the span of the
    // previous ones.
    let gram = cols.transpose() * &cols;
    let chol = Cholesky::new(gram)?;
    if chol.l().diagonal().iter().any(|&d| d < COLLINEARITY_TOL) {
        return None;
    }
    let rhs = cols.transpose() * response;
    let beta = chol.solve(&rhs);
    let residual = response - &cols * &beta;
    let rss = residual.dot(&residual);
    let coefs = (0..q).map(|c| beta[c] / norms[c]).collect();
    Some((coefs, rss.max(0.0)))
}

fn bic(n: usize, rss: f64, q: usize) -> f64 {
    let n_f = n as f64;
    n_f * (rss / n_f).ln() + q as f64 * n_f.ln()
}

/// Forward stepwise selection scored by BIC.
///
/// Starting from the empty model, each step adds the candidate term that
/// minimizes BIC (ties broken toward the lowest column index), stopping
/// when no addition strictly decreases it or when another coefficient
/// would leave no residual degrees of freedom. Collinear candidates are
/// skipped. The residual variance estimate is `RSS / (n - q)`.
pub fn forward_stepwise_bic(problem: &RegressionProblem) -> Result<EstimatedEquation> {
    forward_stepwise_bic_with_path(problem).map(|(eq, _)| eq)
}

/// Like [`forward_stepwise_bic`], also returning the acceptance trace.
pub fn forward_stepwise_bic_with_path(
    problem: &RegressionProblem,
) -> Result<(EstimatedEquation, StepwisePath)> {
    let n = problem.n();
    let k = problem.n_terms();
    let y = problem.response();

    let mut selected: Vec<usize> = Vec::new();
    let mut coefs: Vec<f64> = Vec::new();
    let scale = y.dot(y);
    let mut rss = scale;
    let mut current_bic = bic(n, rss, 0);
    let mut path = StepwisePath {
        bic: vec![current_bic],
        added: vec![],
    };

    loop {
        // A residual this far below the response's own scale is rounding,
        // not signal; BIC comparisons in that regime would chase the last
        // floating-point bits into spurious terms.
        if rss <= EXACT_FIT_FLOOR * scale {
            break;
        }
        // Adding another term must leave at least one residual degree of
        // freedom.
        if selected.len() + 1 >= n {
            break;
        }
        let mut best: Option<(usize, f64, Vec<f64>, f64)> = None;
        for j in 0..k {
            if selected.contains(&j) {
                continue;
            }
            let mut idx = selected.clone();
            idx.push(j);
            if let Some((c, r)) = subset_least_squares(problem.matrix(), y, &idx) {
                let b = bic(n, r, idx.len());
                if best.as_ref().map_or(true, |(_, bb, _, _)| b < *bb) {
                    best = Some((j, b, c, r));
                }
            }
        }
        match best {
            Some((j, b, c, r)) if b < current_bic => {
                selected.push(j);
                coefs = c;
                rss = r;
                current_bic = b;
                path.bic.push(b);
                path.added.push(j);
            }
            _ => break,
        }
    }

    // A term picked early can be zeroed out once later additions complete
    // the true model; forward selection never removes it. Terms whose
    // fitted contribution sits at the rounding floor of the response are
    // such artifacts — drop them and refit on what remains.
    let y_norm = scale.sqrt();
    let kept: Vec<usize> = selected
        .iter()
        .zip(&coefs)
        .filter(|(&j, &c)| {
            c.abs() * problem.matrix().column(j).norm() > NUMERICALLY_ZERO * y_norm
        })
        .map(|(&j, _)| j)
        .collect();
    if kept.len() < selected.len() {
        if kept.is_empty() {
            selected.clear();
            coefs.clear();
            rss = scale;
        } else if let Some((c, r)) = subset_least_squares(problem.matrix(), y, &kept) {
            selected = kept;
            coefs = c;
            rss = r;
        }
    }

    let q = selected.len();
    let sigma2 = if rss == 0.0 { 0.0 } else { rss / (n - q) as f64 };
    let mut dense = vec![0.0; k];
    for (c, &j) in coefs.iter().zip(&selected) {
        dense[j] = *c;
    }
    Ok((EstimatedEquation::from_dense(dense, sigma2)?, path))
}

/// A two-sided confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
}

impl ConfidenceInterval {
    /// Interval half-width.
    pub fn half_width(&self) -> f64 {
        (self.upper - self.lower) / 2.0
    }

    /// Interval midpoint.
    pub fn center(&self) -> f64 {
        (self.lower + self.upper) / 2.0
    }
}

/// Student-t confidence intervals for the selected coefficients of a
/// fitted equation, in ascending term-index order (matching
/// `equation.support()`).
///
/// Standard errors come from the diagonal of `sigma2 * (M_S^T M_S)^{-1}`
/// on the original column scale, with `n - q` degrees of freedom.
pub fn coefficient_confidence_intervals(
    problem: &RegressionProblem,
    equation: &EstimatedEquation,
    level: f64,
) -> Result<Vec<ConfidenceInterval>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    if equation.n_terms() != problem.n_terms() {
        return Err(Error::DimensionMismatch {
            context: "confidence intervals",
            expected: problem.n_terms(),
            actual: equation.n_terms(),
        });
    }
    let support = equation.support();
    let q = support.len();
    if q == 0 {
        return Ok(vec![]);
    }
    let n = problem.n();
    if n <= q {
        return Err(Error::InvalidArgument(format!(
            "confidence intervals need n > q (n = {n}, q = {q})"
        )));
    }
    let mut cols = DMatrix::zeros(n, q);
    for (c, &j) in support.iter().enumerate() {
        cols.set_column(c, &problem.matrix().column(j));
    }
    let gram = cols.transpose() * &cols;
    let chol = Cholesky::new(gram).ok_or_else(|| {
        Error::Conditioning("selected columns are singular; no confidence intervals".into())
    })?;
    let ginv = chol.inverse();
    let df = (n - q) as f64;
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::InvalidArgument(format!("t distribution: {e}")))?;
    let t = dist.inverse_cdf(1.0 - (1.0 - level) / 2.0);
    let out = support
        .iter()
        .enumerate()
        .map(|(c, &j)| {
            let se = (equation.sigma2() * ginv[(c, c)]).max(0.0).sqrt();
            let center = equation.coefficients()[j];
            ConfidenceInterval {
                lower: center - t * se,
                upper: center + t * se,
            }
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_problem(
        rng: &mut ChaCha8Rng,
        n: usize,
        k: usize,
        truth: &[(usize, f64)],
        noise: f64,
    ) -> RegressionProblem {
        let m = DMatrix::from_fn(n, k, |_, j| {
            if j == 0 {
                1.0
            } else {
                rng.random_range(-2.0..2.0)
            }
        });
        let mut y = DVector::zeros(n);
        for &(j, c) in truth {
            y += m.column(j) * c;
        }
        if noise > 0.0 {
            for i in 0..n {
                y[i] += rng.random_range(-noise..noise);
            }
        }
        RegressionProblem::new(m, y).unwrap()
    }

    #[test]
    fn recovers_exact_sparse_model_without_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let problem = random_problem(&mut rng, 50, 6, &[(1, 2.0), (3, -3.0)], 0.0);
        let eq = forward_stepwise_bic(&problem).unwrap();
        assert_eq!(eq.support(), vec![1, 3]);
        assert!((eq.coefficients()[1] - 2.0).abs() < 1e-10);
        assert!((eq.coefficients()[3] + 3.0).abs() < 1e-10);
        assert!(eq.sigma2() < 1e-20);
    }

    #[test]
    fn randomized_exact_support_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for case in 0..10 {
            let k = rng.random_range(4..=10);
            let n = 3 * k + rng.random_range(5..20);
            let support_size = rng.random_range(1..=3.min(k));
            let mut truth: Vec<(usize, f64)> = Vec::new();
            while truth.len() < support_size {
                let j = rng.random_range(0..k);
                if truth.iter().all(|(jj, _)| *jj != j) {
                    let mut c: f64 = rng.random_range(0.5..3.0);
                    if rng.random_range(0..2) == 0 {
                        c = -c;
                    }
                    truth.push((j, c));
                }
            }
            truth.sort_by_key(|(j, _)| *j);
            let problem = random_problem(&mut rng, n, k, &truth, 0.0);
            let eq = forward_stepwise_bic(&problem).unwrap();
            let expect: Vec<usize> = truth.iter().map(|(j, _)| *j).collect();
            assert_eq!(eq.support(), expect, "case {case}");
        }
    }

    #[test]
    fn zero_response_selects_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let problem = random_problem(&mut rng, 20, 5, &[], 0.0);
        let eq = forward_stepwise_bic(&problem).unwrap();
        assert!(eq.support().is_empty());
        assert_eq!(eq.sigma2(), 0.0);
    }

    #[test]
    fn constant_response_selects_the_intercept_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // Column 0 is all ones.
        let problem = random_problem(&mut rng, 30, 5, &[(0, 5.0)], 0.1);
        let eq = forward_stepwise_bic(&problem).unwrap();
        assert_eq!(eq.support(), vec![0]);
        assert!((eq.coefficients()[0] - 5.0).abs() < 0.1);
    }

    #[test]
    fn bic_path_strictly_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let problem = random_problem(&mut rng, 60, 8, &[(2, 1.0), (5, -2.0), (7, 0.5)], 0.05);
        let (_, path) = forward_stepwise_bic_with_path(&problem).unwrap();
        assert!(path.bic.len() >= 2, "nothing was selected");
        for w in path.bic.windows(2) {
            assert!(w[1] < w[0], "BIC did not decrease: {:?}", path.bic);
        }
        assert_eq!(path.added.len() + 1, path.bic.len());
    }

    #[test]
    fn duplicate_columns_are_skipped_and_ties_take_the_lower_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 25;
        let base = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0_f64));
        let other = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0_f64));
        let mut m = DMatrix::zeros(n, 3);
        m.set_column(0, &base);
        m.set_column(1, &base); // exact duplicate of column 0
        m.set_column(2, &other);
        let y = &base * 2.0;
        let problem = RegressionProblem::new(m, y).unwrap();
        let eq = forward_stepwise_bic(&problem).unwrap();
        // The duplicate pair ties; the lower index wins and the copy is
        // later skipped as collinear.
        assert_eq!(eq.support(), vec![0]);
        assert!((eq.coefficients()[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn residual_is_orthogonal_to_selected_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let problem = random_problem(&mut rng, 40, 6, &[(1, 1.5), (4, -0.7)], 0.3);
        let eq = forward_stepwise_bic(&problem).unwrap();
        let beta = DVector::from_column_slice(eq.coefficients());
        let residual = problem.response() - problem.matrix() * beta;
        for j in eq.support() {
            let col = problem.matrix().column(j);
            let dot = col.dot(&residual).abs();
            assert!(
                dot <= 1e-8 * col.norm() * residual.norm().max(1.0),
                "column {j} correlates with residual: {dot}"
            );
        }
    }

    #[test]
    fn sigma2_uses_residual_degrees_of_freedom() {
        // One column of ones, response with known mean and residuals.
        let m = DMatrix::from_element(4, 1, 1.0);
        let y = DVector::from_column_slice(&[1.0, 3.0, 1.0, 3.0]);
        let problem = RegressionProblem::new(m, y).unwrap();
        let eq = forward_stepwise_bic(&problem).unwrap();
        assert_eq!(eq.support(), vec![0]);
        assert!((eq.coefficients()[0] - 2.0).abs() < 1e-12);
        // RSS = 4, n - q = 3.
        assert!((eq.sigma2() - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn selection_halts_before_exhausting_degrees_of_freedom() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = DMatrix::from_fn(3, 10, |_, _| rng.random_range(-1.0..1.0_f64));
        let y = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0_f64));
        let problem = RegressionProblem::new(m, y).unwrap();
        let eq = forward_stepwise_bic(&problem).unwrap();
        assert!(eq.support().len() <= 2, "selected {:?}", eq.support());
    }

    #[test]
    fn confidence_intervals_match_hand_computation() {
        // Single regressor, n = 5: se = sqrt(sigma2 / sum(x^2)),
        // t_{0.975, 4} = 2.7764451051977987.
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let m = DMatrix::from_fn(5, 1, |i, _| x[i]);
        let y = DVector::from_column_slice(&[2.1, 3.9, 6.2, 7.8, 10.1]);
        let problem = RegressionProblem::new(m.clone(), y.clone()).unwrap();
        let eq = forward_stepwise_bic(&problem).unwrap();
        assert_eq!(eq.support(), vec![0]);
        let sum_sq: f64 = x.iter().map(|v| v * v).sum();
        let beta = x.iter().zip(y.iter()).map(|(a, b)| a * b).sum::<f64>() / sum_sq;
        assert!((eq.coefficients()[0] - beta).abs() < 1e-12);
        let ci = coefficient_confidence_intervals(&problem, &eq, 0.95).unwrap();
        assert_eq!(ci.len(), 1);
        let se = (eq.sigma2() / sum_sq).sqrt();
        let expect = 2.7764451051977987 * se;
        assert!((ci[0].half_width() - expect).abs() <= 1e-9 * expect);
        assert!((ci[0].center() - beta).abs() < 1e-12);
    }

    #[test]
    fn confidence_intervals_have_zero_width_without_residual_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let problem = random_problem(&mut rng, 30, 4, &[(2, 1.25)], 0.0);
        let eq = forward_stepwise_bic(&problem).unwrap();
        let ci = coefficient_confidence_intervals(&problem, &eq, 0.99).unwrap();
        assert_eq!(ci.len(), 1);
        assert!(ci[0].half_width() < 1e-12);
    }

    #[test]
    fn confidence_interval_input_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let problem = random_problem(&mut rng, 10, 3, &[(1, 1.0)], 0.1);
        let eq = forward_stepwise_bic(&problem).unwrap();
        assert!(coefficient_confidence_intervals(&problem, &eq, 0.0).is_err());
        assert!(coefficient_confidence_intervals(&problem, &eq, 1.0).is_err());
        let wrong = EstimatedEquation::from_sparse(7, &[(1, 1.0)], 0.1).unwrap();
        assert!(coefficient_confidence_intervals(&problem, &wrong, 0.95).is_err());
        // Empty support: no intervals.
        let empty = EstimatedEquation::from_dense(vec![0.0, 0.0, 0.0], 0.5).unwrap();
        assert!(coefficient_confidence_intervals(&problem, &empty, 0.95)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn problem_validation() {
        assert!(RegressionProblem::new(DMatrix::zeros(0, 2), DVector::zeros(0)).is_err());
        assert!(RegressionProblem::new(DMatrix::zeros(3, 2), DVector::zeros(4)).is_err());
        let mut m = DMatrix::zeros(2, 1);
        m[(0, 0)] = f64::NAN;
        assert!(RegressionProblem::new(m, DVector::zeros(2)).is_err());
    }
}
