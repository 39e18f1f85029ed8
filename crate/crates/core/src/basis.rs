//! Candidate term libraries for sparse equation discovery.
//!
//! A library is an ordered list of basis terms. Each term is a product of
//! powers of *atoms*: design-space coordinates, state components, and
//! spatial derivatives of state components. Model matrices are built by
//! evaluating every term at every observation; during active learning the
//! same terms are evaluated through Gaussian-process surrogates instead
//! (see [`eval_from_surrogate`]).

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::types::{DerivOrders, DesignPoint, Observation};

/// An indivisible factor of a basis term.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Atom {
    /// A raw design-space coordinate.
    Coord(usize),
    /// A state component.
    State(usize),
    /// A spatial derivative of a state component; `orders[s]` is the
    /// differentiation order with respect to design coordinate `s`.
    Deriv { state: usize, orders: DerivOrders },
}

impl Atom {
    fn class_rank(&self) -> u8 {
        match self {
            Atom::Coord(_) => 0,
            Atom::State(_) => 1,
            Atom::Deriv { .. } => 2,
        }
    }

    /// Total derivative order (zero for non-derivative atoms).
    pub fn derivative_order(&self) -> u32 {
        match self {
            Atom::Deriv { orders, .. } => orders.iter().sum(),
            _ => 0,
        }
    }
}

impl Ord for Atom {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        match self.class_rank().cmp(&other.class_rank()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        match (self, other) {
            (Atom::Coord(a), Atom::Coord(b)) => a.cmp(b),
            (Atom::State(a), Atom::State(b)) => a.cmp(b),
            (
                Atom::Deriv {
                    state: sa,
                    orders: oa,
                },
                Atom::Deriv {
                    state: sb,
                    orders: ob,
                },
            ) => {
                // Group derivatives of the same state, lower total order
                // first; among equal totals, weight on earlier coordinates
                // first (u_xx before u_xy before u_yy).
                sa.cmp(sb)
                    .then(self.derivative_order().cmp(&other.derivative_order()))
                    .then(oa.cmp(ob).reverse())
            }
            _ => unreachable!("class ranks already compared"),
        }
    }
}

impl PartialOrd for Atom {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// A product of powers of atoms. The empty product is the constant term.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisTerm {
    /// Factors sorted by atom, with strictly positive powers; atoms are
    /// unique within a term.
    factors: Vec<(Atom, u32)>,
}

impl BasisTerm {
    /// The constant term.
    pub fn constant() -> Self {
        Self { factors: vec![] }
    }

    /// Builds a term from factors, merging repeats and dropping zero powers.
    pub fn new(factors: Vec<(Atom, u32)>) -> Self {
        let mut map: BTreeMap<Atom, u32> = BTreeMap::new();
        for (a, p) in factors {
            if p > 0 {
                *map.entry(a).or_insert(0) += p;
            }
        }
        Self {
            factors: map.into_iter().collect(),
        }
    }

    /// Sum of factor powers (the constant term has degree zero).
    pub fn degree(&self) -> u32 {
        self.factors.iter().map(|(_, p)| p).sum()
    }

    /// Factors in canonical atom order.
    pub fn factors(&self) -> &[(Atom, u32)] {
        &self.factors
    }

    /// Highest derivative order among this term's atoms.
    pub fn max_derivative_order(&self) -> u32 {
        self.factors
            .iter()
            .map(|(a, _)| a.derivative_order())
            .max()
            .unwrap_or(0)
    }

    /// Canonical library order: degree first, then lexicographic by factor
    /// list (higher powers of earlier atoms first, so `u^2` precedes
    /// `u*u_x`).
    fn canonical_cmp(&self, other: &Self) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        let mut ia = self.factors.iter();
        let mut ib = other.factors.iter();
        loop {
            match (ia.next(), ib.next()) {
                (None, None) => return Ordering::Equal,
                (None, Some(_)) => return Ordering::Less,
                (Some(_), None) => return Ordering::Greater,
                (Some((aa, pa)), Some((ab, pb))) => {
                    match aa.cmp(ab).then(pa.cmp(pb).reverse()) {
                        Ordering::Equal => {}
                        ord => return ord,
                    }
                }
            }
        }
    }
}

/// Names for the design-space coordinates used in term display.
fn coord_letter(space_dim: usize, i: usize) -> String {
    if space_dim <= 3 {
        ["x", "y", "z"][i].to_string()
    } else {
        format!("x{}", i + 1)
    }
}

/// An ordered collection of basis terms over a fixed state and design-space
/// dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermLibrary {
    terms: Vec<BasisTerm>,
    state_dim: usize,
    space_dim: usize,
}

impl TermLibrary {
    /// Builds a library from an explicit term list (kept in the given
    /// order). Terms must be distinct and reference only valid state and
    /// coordinate indices.
    pub fn from_terms(terms: Vec<BasisTerm>, state_dim: usize, space_dim: usize) -> Result<Self> {
        if terms.is_empty() || state_dim == 0 || space_dim == 0 {
            return Err(Error::InvalidArgument(
                "library needs at least one term and positive dimensions".into(),
            ));
        }
        for t in &terms {
            for (a, _) in t.factors() {
                let ok = match a {
                    Atom::Coord(i) => *i < space_dim,
                    Atom::State(r) => *r < state_dim,
                    Atom::Deriv { state, orders } => {
                        *state < state_dim
                            && orders.len() == space_dim
                            && orders.iter().sum::<u32>() > 0
                    }
                };
                if !ok {
                    return Err(Error::InvalidArgument(format!(
                        "atom {a:?} is invalid for state_dim={state_dim}, space_dim={space_dim}"
                    )));
                }
            }
        }
        for i in 0..terms.len() {
            for j in (i + 1)..terms.len() {
                if terms[i] == terms[j] {
                    return Err(Error::InvalidArgument(format!(
                        "duplicate library term at indices {i} and {j}"
                    )));
                }
            }
        }
        Ok(Self {
            terms,
            state_dim,
            space_dim,
        })
    }

    /// Number of terms.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    /// True when the library holds no terms (never, by construction).
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Term at index `i`.
    pub fn term(&self, i: usize) -> &BasisTerm {
        &self.terms[i]
    }

    /// All terms in library order.
    pub fn terms(&self) -> &[BasisTerm] {
        &self.terms
    }

    /// Number of state components the terms may reference.
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Number of design-space coordinates.
    pub fn space_dim(&self) -> usize {
        self.space_dim
    }

    /// Highest derivative order any term requires.
    pub fn max_derivative_order(&self) -> u32 {
        self.terms
            .iter()
            .map(|t| t.max_derivative_order())
            .max()
            .unwrap_or(0)
    }

    /// Human-readable name of term `i` (e.g. `1`, `u^2`, `u*u_x`).
    pub fn term_name(&self, i: usize) -> String {
        self.display_term(&self.terms[i])
    }

    /// All term names in library order.
    pub fn term_names(&self) -> Vec<String> {
        (0..self.terms.len()).map(|i| self.term_name(i)).collect()
    }

    /// Index of the term whose display name is `name`.
    pub fn index_by_name(&self, name: &str) -> Result<usize> {
        (0..self.terms.len())
            .find(|&i| self.term_name(i) == name)
            .ok_or_else(|| Error::InvalidArgument(format!("no library term named `{name}`")))
    }

    fn display_atom(&self, atom: &Atom) -> String {
        match atom {
            Atom::Coord(i) => coord_letter(self.space_dim, *i),
            Atom::State(r) => {
                if self.state_dim == 1 {
                    "u".to_string()
                } else {
                    format!("u{}", r + 1)
                }
            }
            Atom::Deriv { state, orders } => {
                let base = if self.state_dim == 1 {
                    "u".to_string()
                } else {
                    format!("u{}", state + 1)
                };
                let mut sub = String::new();
                for (i, &o) in orders.iter().enumerate() {
                    for _ in 0..o {
                        sub.push_str(&coord_letter(self.space_dim, i));
                    }
                }
                format!("{base}_{sub}")
            }
        }
    }

    fn display_term(&self, term: &BasisTerm) -> String {
        if term.factors().is_empty() {
            return "1".to_string();
        }
        term.factors()
            .iter()
            .map(|(a, p)| {
                let s = self.display_atom(a);
                if *p == 1 {
                    s
                } else {
                    format!("{s}^{p}")
                }
            })
            .collect::<Vec<_>>()
            .join("*")
    }
}

impl fmt::Display for TermLibrary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.term_names().join(", "))
    }
}

/// All monomials in the state components up to `max_degree`, constant term
/// first, in canonical order. For `state_dim = 2`, `max_degree = 4` this
/// yields the 15-term polynomial library; for `state_dim = 1`,
/// `max_degree = 2` the 3-term library `{1, u, u^2}`.
pub fn build_monomial_library(state_dim: usize, max_degree: u32) -> Result<TermLibrary> {
    let atoms: Vec<Atom> = (0..state_dim).map(Atom::State).collect();
    build_product_library(&atoms, max_degree, state_dim, 1)
}

/// All products of the given state/derivative atoms up to total degree
/// `max_degree`, constant first, canonical order. For one state with
/// derivatives `{[1], [2]}` and degree 3 this is the 20-term library used
/// for 1-D advection–diffusion discovery; for one state with the five
/// derivatives `{[1,0], [0,1], [2,0], [0,2], [1,1]}` and degree 2 it is the
/// 28-term library used for 2-D diffusion.
pub fn build_field_library(
    state_dim: usize,
    space_dim: usize,
    derivatives: &[DerivOrders],
    max_degree: u32,
) -> Result<TermLibrary> {
    let mut atoms: Vec<Atom> = (0..state_dim).map(Atom::State).collect();
    for d in derivatives {
        if d.len() != space_dim {
            return Err(Error::InvalidArgument(format!(
                "derivative orders {d:?} do not match space_dim={space_dim}"
            )));
        }
        if d.iter().sum::<u32>() == 0 {
            return Err(Error::InvalidArgument(
                "derivative atom must have positive total order".into(),
            ));
        }
        for r in 0..state_dim {
            atoms.push(Atom::Deriv {
                state: r,
                orders: d.clone(),
            });
        }
    }
    build_product_library(&atoms, max_degree, state_dim, space_dim)
}

fn build_product_library(
    atoms: &[Atom],
    max_degree: u32,
    state_dim: usize,
    space_dim: usize,
) -> Result<TermLibrary> {
    if max_degree == 0 {
        return Err(Error::InvalidArgument(
            "library degree must be at least one".into(),
        ));
    }
    let mut sorted = atoms.to_vec();
    sorted.sort();
    sorted.dedup();
    let mut terms = vec![BasisTerm::constant()];
    let mut current: Vec<(Atom, u32)> = Vec::new();
    fn recurse(
        atoms: &[Atom],
        start: usize,
        remaining: u32,
        current: &mut Vec<(Atom, u32)>,
        out: &mut Vec<BasisTerm>,
    ) {
        for i in start..atoms.len() {
            let mut power = 1;
            while power <= remaining {
                current.push((atoms[i].clone(), power));
                out.push(BasisTerm::new(current.clone()));
                if remaining > power {
                    recurse(atoms, i + 1, remaining - power, current, out);
                }
                current.pop();
                power += 1;
            }
        }
    }
    recurse(&sorted, 0, max_degree, &mut current, &mut terms);
    terms.sort_by(|a, b| a.canonical_cmp(b));
    terms.dedup();
    TermLibrary::from_terms(terms, state_dim, space_dim)
}

/// The 20-term library for 1-D advection–diffusion discovery, in the
/// conventional reporting order: powers of `u`, powers of `u_x`, their
/// cross terms, powers of `u_xx`, and the remaining cross terms. The term
/// *set* equals `build_field_library(1, 1, &[[1], [2]], 3)`.
pub fn burgers_library() -> TermLibrary {
    let u = Atom::State(0);
    let ux = Atom::Deriv {
        state: 0,
        orders: vec![1],
    };
    let uxx = Atom::Deriv {
        state: 0,
        orders: vec![2],
    };
    let t = |factors: &[(&Atom, u32)]| {
        BasisTerm::new(factors.iter().map(|(a, p)| ((*a).clone(), *p)).collect())
    };
    let terms = vec![
        BasisTerm::constant(),
        t(&[(&u, 1)]),
        t(&[(&u, 2)]),
        t(&[(&u, 3)]),
        t(&[(&ux, 1)]),
        t(&[(&ux, 2)]),
        t(&[(&ux, 3)]),
        t(&[(&u, 1), (&ux, 1)]),
        t(&[(&u, 2), (&ux, 1)]),
        t(&[(&u, 1), (&ux, 2)]),
        t(&[(&uxx, 1)]),
        t(&[(&uxx, 2)]),
        t(&[(&uxx, 3)]),
        t(&[(&u, 1), (&uxx, 1)]),
        t(&[(&u, 2), (&uxx, 1)]),
        t(&[(&u, 1), (&uxx, 2)]),
        t(&[(&ux, 1), (&uxx, 1)]),
        t(&[(&ux, 2), (&uxx, 1)]),
        t(&[(&ux, 1), (&uxx, 2)]),
        t(&[(&u, 1), (&ux, 1), (&uxx, 1)]),
    ];
    TermLibrary::from_terms(terms, 1, 1).expect("static library is valid")
}

/// Evaluates one term at an observation using its measured state and
/// derivative data.
pub fn eval_from_observation(
    lib: &TermLibrary,
    term: &BasisTerm,
    obs: &Observation,
) -> Result<f64> {
    if obs.state_dim() != lib.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "eval_from_observation state",
            expected: lib.state_dim(),
            actual: obs.state_dim(),
        });
    }
    let mut value = 1.0;
    for (atom, power) in term.factors() {
        let base = match atom {
            Atom::Coord(i) => {
                if *i >= obs.point.dim() {
                    return Err(Error::DimensionMismatch {
                        context: "eval_from_observation coordinate",
                        expected: *i + 1,
                        actual: obs.point.dim(),
                    });
                }
                obs.point.coord(*i)
            }
            Atom::State(r) => obs.state[*r],
            Atom::Deriv { state, orders } => match obs.spatial_derivative(orders) {
                Some(values) => values[*state],
                None => {
                    return Err(Error::MissingDerivative(format!(
                        "observation lacks derivative {} required by term `{}`",
                        lib.display_atom(atom),
                        lib.display_term(term)
                    )))
                }
            },
        };
        value *= base.powi(*power as i32);
    }
    Ok(value)
}

/// Model matrix: one row per observation, one column per library term.
pub fn design_matrix(lib: &TermLibrary, observations: &[Observation]) -> Result<DMatrix<f64>> {
    let n = observations.len();
    let k = lib.len();
    let mut m = DMatrix::zeros(n, k);
    for (i, obs) in observations.iter().enumerate() {
        for j in 0..k {
            m[(i, j)] = eval_from_observation(lib, lib.term(j), obs)?;
        }
    }
    Ok(m)
}

/// Response vectors: component `r` of every observation's time derivative.
pub fn response_vectors(observations: &[Observation]) -> Result<Vec<DVector<f64>>> {
    if observations.is_empty() {
        return Err(Error::InvalidArgument("no observations".into()));
    }
    let d = observations[0].state_dim();
    let mut out = Vec::with_capacity(d);
    for r in 0..d {
        let v = DVector::from_iterator(
            observations.len(),
            observations.iter().map(|o| o.time_derivative[r]),
        );
        out.push(v);
    }
    Ok(out)
}

/// Evaluates one term at an arbitrary design point through per-component
/// Gaussian-process surrogates (`models[r]` predicts state component `r`).
///
/// State atoms use the posterior mean; derivative atoms use the analytic
/// first or second derivatives of the posterior mean. Terms needing
/// derivatives beyond second order are rejected.
pub fn eval_from_surrogate(
    lib: &TermLibrary,
    term: &BasisTerm,
    models: &[GpModel],
    point: &DesignPoint,
) -> Result<f64> {
    if models.len() != lib.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "eval_from_surrogate models",
            expected: lib.state_dim(),
            actual: models.len(),
        });
    }
    let mut value = 1.0;
    for (atom, power) in term.factors() {
        let base = eval_atom_from_surrogate(atom, models, point).map_err(|e| match e {
            Error::Unsupported(msg) => {
                Error::Unsupported(format!("{msg} (term `{}`)", lib.display_term(term)))
            }
            other => other,
        })?;
        value *= base.powi(*power as i32);
    }
    Ok(value)
}

/// Library row at a design point via surrogate evaluation.
pub fn surrogate_row(
    lib: &TermLibrary,
    models: &[GpModel],
    point: &DesignPoint,
) -> Result<DVector<f64>> {
    let mut rows = surrogate_rows(lib, models, std::slice::from_ref(point))?;
    Ok(rows.pop().expect("one row per point"))
}

/// Evaluates one atom through the surrogates at a point.
fn eval_atom_from_surrogate(atom: &Atom, models: &[GpModel], point: &DesignPoint) -> Result<f64> {
    match atom {
        Atom::Coord(i) => Ok(point.coord(*i)),
        Atom::State(r) => models[*r].predict(point),
        Atom::Deriv { state, orders } => {
            let total: u32 = orders.iter().sum();
            match total {
                1 => {
                    let j = orders.iter().position(|&o| o == 1).unwrap();
                    models[*state].predict_deriv1(point, j)
                }
                2 => {
                    if let Some(j) = orders.iter().position(|&o| o == 2) {
                        models[*state].predict_deriv2(point, j, j)
                    } else {
                        let mut dims = orders.iter().enumerate().filter(|(_, &o)| o == 1);
                        let j = dims.next().unwrap().0;
                        let l = dims.next().unwrap().0;
                        models[*state].predict_deriv2(point, j, l)
                    }
                }
                _ => Err(Error::Unsupported(format!(
                    "surrogate evaluation supports derivatives up to order 2, got order {total}"
                ))),
            }
        }
    }
}

/// Library rows at many design points via surrogate evaluation. Each
/// distinct atom is evaluated once per point and terms are assembled as
/// products, so the cost is dominated by one surrogate call per atom
/// rather than per term factor.
pub fn surrogate_rows(
    lib: &TermLibrary,
    models: &[GpModel],
    points: &[DesignPoint],
) -> Result<Vec<DVector<f64>>> {
    if models.len() != lib.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "surrogate_rows models",
            expected: lib.state_dim(),
            actual: models.len(),
        });
    }
    // Collect the distinct atoms and map each term onto indices into that
    // list.
    let mut atoms: Vec<Atom> = Vec::new();
    let mut term_factors: Vec<Vec<(usize, u32)>> = Vec::with_capacity(lib.len());
    for term in lib.terms() {
        let mut factors = Vec::with_capacity(term.factors().len());
        for (atom, power) in term.factors() {
            let idx = match atoms.iter().position(|a| a == atom) {
                Some(i) => i,
                None => {
                    atoms.push(atom.clone());
                    atoms.len() - 1
                }
            };
            factors.push((idx, *power));
        }
        term_factors.push(factors);
    }
    let mut rows = Vec::with_capacity(points.len());
    let mut values = vec![0.0; atoms.len()];
    for point in points {
        for (v, atom) in values.iter_mut().zip(&atoms) {
            *v = eval_atom_from_surrogate(atom, models, point)?;
        }
        let mut row = DVector::zeros(lib.len());
        for (j, factors) in term_factors.iter().enumerate() {
            let mut prod = 1.0;
            for &(idx, power) in factors {
                prod *= values[idx].powi(power as i32);
            }
            row[j] = prod;
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SpatialDerivative;

    #[test]
    fn monomial_library_sizes_and_order() {
        // Two states, degree <= 4: 15 monomials.
        let lib = build_monomial_library(2, 4).unwrap();
        assert_eq!(lib.len(), 15);
        let names = lib.term_names();
        assert_eq!(names[0], "1");
        assert_eq!(&names[1..3], &["u1", "u2"]);
        assert_eq!(&names[3..6], &["u1^2", "u1*u2", "u2^2"]);
        assert!(names.contains(&"u1^4".to_string()));
        // One state, degree <= 8: 9 monomials.
        let lib1 = build_monomial_library(1, 8).unwrap();
        assert_eq!(lib1.len(), 9);
        assert_eq!(lib1.term_name(0), "1");
        assert_eq!(lib1.term_name(1), "u");
        assert_eq!(lib1.term_name(2), "u^2");
        assert_eq!(lib1.term_name(8), "u^8");
        // One state, degree <= 2: {1, u, u^2}.
        let lib2 = build_monomial_library(1, 2).unwrap();
        assert_eq!(lib2.term_names(), vec!["1", "u", "u^2"]);
    }

    #[test]
    fn library_construction_is_deterministic() {
        let a = build_field_library(1, 1, &[vec![1], vec![2]], 3).unwrap();
        let b = build_field_library(1, 1, &[vec![2], vec![1], vec![1]], 3).unwrap();
        assert_eq!(a.term_names(), b.term_names());
    }

    #[test]
    fn burgers_library_matches_reporting_order_and_generated_set() {
        let lib = burgers_library();
        let expected = vec![
            "1", "u", "u^2", "u^3", "u_x", "u_x^2", "u_x^3", "u*u_x", "u^2*u_x", "u*u_x^2",
            "u_xx", "u_xx^2", "u_xx^3", "u*u_xx", "u^2*u_xx", "u*u_xx^2", "u_x*u_xx",
            "u_x^2*u_xx", "u_x*u_xx^2", "u*u_x*u_xx",
        ];
        assert_eq!(lib.term_names(), expected);

        let generated = build_field_library(1, 1, &[vec![1], vec![2]], 3).unwrap();
        assert_eq!(generated.len(), 20);
        let mut a: Vec<_> = lib.term_names();
        let mut b: Vec<_> = generated.term_names();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn diffusion_library_has_28_terms() {
        let derivs: Vec<DerivOrders> = vec![
            vec![1, 0],
            vec![0, 1],
            vec![2, 0],
            vec![0, 2],
            vec![1, 1],
        ];
        let lib = build_field_library(1, 2, &derivs, 2).unwrap();
        // Constant + 6 atoms + 21 pairwise products (with repetition).
        assert_eq!(lib.len(), 28);
        let names = lib.term_names();
        assert_eq!(names[0], "1");
        assert_eq!(&names[1..7], &["u", "u_x", "u_y", "u_xx", "u_xy", "u_yy"]);
        assert!(names.contains(&"u_xx^2".to_string()));
        assert!(names.contains(&"u_x*u_y".to_string()));
        assert!(names.contains(&"u*u_yy".to_string()));
        // Degrees never decrease along the library.
        for w in lib.terms().windows(2) {
            assert!(w[0].degree() <= w[1].degree());
        }
    }

    #[test]
    fn index_by_name_round_trips() {
        let lib = burgers_library();
        for i in 0..lib.len() {
            assert_eq!(lib.index_by_name(&lib.term_name(i)).unwrap(), i);
        }
        assert!(lib.index_by_name("u^9").is_err());
    }

    #[test]
    fn eval_from_observation_products() {
        let lib = burgers_library();
        let obs = Observation::new(
            DesignPoint::scalar(2.0).unwrap(),
            vec![3.0],
            vec![0.0],
            vec![
                SpatialDerivative {
                    orders: vec![1],
                    values: vec![-2.0],
                },
                SpatialDerivative {
                    orders: vec![2],
                    values: vec![0.5],
                },
            ],
        )
        .unwrap();
        let get = |name: &str| {
            let i = lib.index_by_name(name).unwrap();
            eval_from_observation(&lib, lib.term(i), &obs).unwrap()
        };
        assert_eq!(get("1"), 1.0);
        assert_eq!(get("u"), 3.0);
        assert_eq!(get("u^3"), 27.0);
        assert_eq!(get("u*u_x"), -6.0);
        assert_eq!(get("u_x^2*u_xx"), 2.0);
        assert_eq!(get("u*u_x*u_xx"), -3.0);
    }

    #[test]
    fn missing_derivative_is_reported_by_name() {
        let lib = burgers_library();
        let obs = Observation::new(
            DesignPoint::scalar(0.0).unwrap(),
            vec![1.0],
            vec![0.0],
            vec![],
        )
        .unwrap();
        let i = lib.index_by_name("u_xx").unwrap();
        let err = eval_from_observation(&lib, lib.term(i), &obs).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("u_xx"), "unhelpful error: {msg}");
    }

    #[test]
    fn design_matrix_shape_and_values() {
        let lib = build_monomial_library(1, 2).unwrap();
        let mk = |t: f64, u: f64, du: f64| {
            Observation::new(DesignPoint::scalar(t).unwrap(), vec![u], vec![du], vec![]).unwrap()
        };
        let obs = vec![mk(0.0, 2.0, 1.0), mk(1.0, -1.0, 0.5)];
        let m = design_matrix(&lib, &obs).unwrap();
        assert_eq!(m.nrows(), 2);
        assert_eq!(m.ncols(), 3);
        assert_eq!(m[(0, 0)], 1.0);
        assert_eq!(m[(0, 1)], 2.0);
        assert_eq!(m[(0, 2)], 4.0);
        assert_eq!(m[(1, 2)], 1.0);
        let ys = response_vectors(&obs).unwrap();
        assert_eq!(ys.len(), 1);
        assert_eq!(ys[0][0], 1.0);
        assert_eq!(ys[0][1], 0.5);
    }

    #[test]
    fn coord_atoms_evaluate_from_the_point() {
        let term = BasisTerm::new(vec![(Atom::Coord(0), 2)]);
        let lib = TermLibrary::from_terms(
            vec![BasisTerm::constant(), term.clone()],
            1,
            1,
        )
        .unwrap();
        let obs = Observation::new(
            DesignPoint::scalar(3.0).unwrap(),
            vec![7.0],
            vec![0.0],
            vec![],
        )
        .unwrap();
        assert_eq!(eval_from_observation(&lib, &term, &obs).unwrap(), 9.0);
        assert_eq!(lib.term_name(1), "x^2");
    }

    #[test]
    fn surrogate_evaluation_on_a_linear_field() {
        use crate::gp::{GpHyperparams, GpModel};
        // u(x) = x sampled densely and noiselessly: the surrogate's value
        // and slope at an off-grid point are close to 0.5 and 1.
        let inputs: Vec<DesignPoint> = (0..21)
            .map(|i| DesignPoint::scalar(i as f64 / 20.0).unwrap())
            .collect();
        let outputs: Vec<f64> = inputs.iter().map(|p| p.coord(0)).collect();
        let h = GpHyperparams {
            tau2: 1.0,
            omega: vec![0.05],
            sigma02: 1e-9,
        };
        let model = GpModel::with_hyperparams(&inputs, &outputs, h).unwrap();
        let lib = burgers_library();
        let q = DesignPoint::scalar(0.475).unwrap();
        let models = vec![model];
        let row = surrogate_row(&lib, &models, &q).unwrap();
        let at = |name: &str| row[lib.index_by_name(name).unwrap()];
        assert_eq!(at("1"), 1.0);
        assert!((at("u") - 0.475).abs() < 0.01, "u = {}", at("u"));
        assert!((at("u_x") - 1.0).abs() < 0.05, "u_x = {}", at("u_x"));
        assert!((at("u^2") - 0.475 * 0.475).abs() < 0.02);
        assert!(at("u_xx").abs() < 0.5);

        // Batch evaluation agrees with the per-point path.
        let pts: Vec<DesignPoint> = (1..10)
            .map(|i| DesignPoint::scalar(i as f64 / 10.0).unwrap())
            .collect();
        let rows = surrogate_rows(&lib, &models, &pts).unwrap();
        for (p, r) in pts.iter().zip(&rows) {
            let single = surrogate_row(&lib, &models, p).unwrap();
            assert_eq!(r, &single);
        }
    }

    #[test]
    fn surrogate_rejects_third_order_derivatives() {
        use crate::gp::{GpHyperparams, GpModel};
        let inputs: Vec<DesignPoint> = (0..5)
            .map(|i| DesignPoint::scalar(i as f64).unwrap())
            .collect();
        let outputs = vec![0.0, 1.0, 0.0, -1.0, 0.0];
        let model = GpModel::with_hyperparams(
            &inputs,
            &outputs,
            GpHyperparams {
                tau2: 1.0,
                omega: vec![1.0],
                sigma02: 0.1,
            },
        )
        .unwrap();
        let third = BasisTerm::new(vec![(
            Atom::Deriv {
                state: 0,
                orders: vec![3],
            },
            1,
        )]);
        let lib = TermLibrary::from_terms(vec![BasisTerm::constant(), third.clone()], 1, 1).unwrap();
        let q = DesignPoint::scalar(1.5).unwrap();
        let err = eval_from_surrogate(&lib, &third, &[model.clone()], &q).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
        assert!(surrogate_rows(&lib, &[model], &[q]).is_err());
    }

    #[test]
    fn from_terms_rejects_invalid_and_duplicate() {
        let bad_state = BasisTerm::new(vec![(Atom::State(2), 1)]);
        assert!(TermLibrary::from_terms(vec![bad_state], 2, 1).is_err());
        let t = BasisTerm::new(vec![(Atom::State(0), 1)]);
        assert!(TermLibrary::from_terms(vec![t.clone(), t], 1, 1).is_err());
        let bad_orders = BasisTerm::new(vec![(
            Atom::Deriv {
                state: 0,
                orders: vec![1, 0],
            },
            1,
        )]);
        assert!(TermLibrary::from_terms(vec![bad_orders], 1, 1).is_err());
    }
}
