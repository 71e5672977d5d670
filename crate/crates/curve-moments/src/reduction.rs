//! Reduction of bivariate data on `y = q(x)` or `y x^l = 1` to a partial
//! univariate sequence, and lifting of univariate measures back to the curve.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::hamburger::AtomicMeasure1D;
use crate::hankel::{HankelError, PartialUnivariateSequence};
use crate::moments::{
    apply_alt, check_curve_relations, AffineMap, AtomicMeasure2D, BivariateMomentSequence,
    CurveSpec, MomentError, Monomial,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReductionError {
    #[error("unsupported curve {0}: need deg q >= 2 or l >= 2")]
    UnsupportedCurve(String),
    #[error("degree {degree} is too low for this curve, need at least {needed}")]
    DegreeTooLow { degree: usize, needed: usize },
    #[error("curve relations fail at {0:?}")]
    RelationsViolated(Vec<Monomial>),
    #[error("gamma_{t} would depend on the undetermined gamma_{s}")]
    InternalInvariantBroken { t: i64, s: i64 },
    #[error("atom at x = 0 cannot be lifted to y x^l = 1")]
    AtomAtPole,
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Hankel(#[from] HankelError),
}

/// Ascending-coefficient product of two univariate polynomials.
pub(crate) fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if *x == 0.0 {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Coefficient of `x^s` in `x^i q(x)^j`.
pub fn structure_coefficient(q: &[f64], i: usize, j: usize, s: usize) -> f64 {
    let mut p = vec![1.0];
    for _ in 0..j {
        p = poly_mul(&p, q);
    }
    if s < i {
        return 0.0;
    }
    p.get(s - i).copied().unwrap_or(0.0)
}

/// The numbers `q_{i,j,s}` for a fixed `q`, with the powers `q^j` cached up to
/// the largest `j` requested at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureCoefficients {
    q: Vec<f64>,
    powers: Vec<Vec<f64>>,
}

impl StructureCoefficients {
    pub fn new(q: &[f64], max_power: usize) -> Self {
        let mut powers = vec![vec![1.0]];
        for j in 0..max_power {
            let next = poly_mul(&powers[j], q);
            powers.push(next);
        }
        Self { q: q.to_vec(), powers }
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn ell(&self) -> usize {
        self.q.len().saturating_sub(1)
    }

    /// `q_{i,j,s}`; powers beyond the cache are recomputed.
    pub fn get(&self, i: usize, j: usize, s: usize) -> f64 {
        match self.powers.get(j) {
            Some(p) if s >= i => p.get(s - i).copied().unwrap_or(0.0),
            Some(_) => 0.0,
            None => structure_coefficient(&self.q, i, j, s),
        }
    }

    /// Coefficients of `x^i q(x)^j`, indexed by `s - i`.
    fn row(&self, j: usize) -> std::borrow::Cow<'_, [f64]> {
        match self.powers.get(j) {
            Some(p) => std::borrow::Cow::Borrowed(p),
            None => {
                let mut p = vec![1.0];
                for _ in 0..j {
                    p = poly_mul(&p, &self.q);
                }
                std::borrow::Cow::Owned(p)
            }
        }
    }
}

/// `q(x - h)` by repeated synthetic division.
fn taylor_shift(q: &[f64], h: f64) -> Vec<f64> {
    let mut c = q.to_vec();
    let n = c.len();
    for i in 0..n {
        for j in (i..n - 1).rev() {
            c[j] -= h * c[j + 1];
        }
    }
    c
}

/// Shift `x` so the curve polynomial has no `x^{l-1}` term.
///
/// Returns the transformed data, the new coefficients and the map applied,
/// `(x, y) -> (x + q_{l-1} / (l q_l), y)`.
pub fn normalize_graph_curve(
    beta: &BivariateMomentSequence,
    q: &[f64],
) -> Result<(BivariateMomentSequence, Vec<f64>, AffineMap), ReductionError> {
    let curve = CurveSpec::graph(q.to_vec());
    if !curve.is_supported() {
        return Err(ReductionError::UnsupportedCurve(curve.to_string()));
    }
    let CurveSpec::Graph { q } = curve else { unreachable!() };
    let ell = q.len() - 1;
    let h = q[ell - 1] / (ell as f64 * q[ell]);
    if h == 0.0 {
        return Ok((beta.clone(), q, AffineMap::identity()));
    }
    let map = AffineMap { a: h, b: 1.0, c: 0.0, d: 0.0, e: 0.0, f: 1.0 };
    let mut shifted = taylor_shift(&q, h);
    shifted[ell - 1] = 0.0;
    Ok((apply_alt(beta, &map)?, shifted, map))
}

/// Which of the two univariate reductions produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Graph,
    Hyperbolic,
}

/// Outcome of [`reduce_to_univariate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionResult {
    /// Known entries from the data; the holes are the LMI unknowns.
    pub partial: PartialUnivariateSequence,
    /// The curve the sequence refers to; for graphs this is the shifted curve.
    pub curve: CurveSpec,
    /// Map taking the input data to `beta`; identity for hyperbolic curves.
    pub alt: AffineMap,
    /// The data point `(i, j)` that determined each known `gamma_t`.
    pub index_map: BTreeMap<i64, Monomial>,
    /// Range needed for a representing measure; a subrange of the full one.
    pub measure_range: (i64, i64),
    /// Data after `alt`.
    pub beta: BivariateMomentSequence,
    pub family: Family,
}

impl ReductionResult {
    pub fn known_set(&self) -> BTreeSet<i64> {
        self.partial.known().keys().copied().collect()
    }

    pub fn unknown_set(&self) -> BTreeSet<i64> {
        self.partial.unknown().into_iter().collect()
    }

    pub fn full_range(&self) -> (i64, i64) {
        (self.partial.k1(), self.partial.k2())
    }

    /// `gamma_{i + j l}` computed from the data point `(i, j)` instead of the
    /// canonical one, or `None` when it would need an unknown entry.
    pub fn gamma_via(&self, i: usize, j: usize) -> Option<f64> {
        let d = self.beta.degree();
        if i + j > d {
            return None;
        }
        match &self.curve {
            CurveSpec::Graph { q } => {
                let ell = q.len() - 1;
                let sc = StructureCoefficients::new(q, j);
                let t = i + j * ell;
                let row = sc.row(j);
                let mut acc = self.beta.at(i, j);
                for s in i..t {
                    let c = row[s - i];
                    if c == 0.0 {
                        continue;
                    }
                    acc -= c * self.partial.get(s as i64)?;
                }
                Some(acc / q[ell].powi(j as i32))
            }
            CurveSpec::Hyperbolic { ell } => {
                let t = i as i64 - (j * ell) as i64;
                self.partial.get(t).map(|_| self.beta.at(i, j))
            }
        }
    }
}

fn check_supported(beta: &BivariateMomentSequence, curve: &CurveSpec) -> Result<(), ReductionError> {
    if !curve.is_supported() {
        return Err(ReductionError::UnsupportedCurve(curve.to_string()));
    }
    let needed = curve.ell() + 1;
    if beta.degree() < needed {
        return Err(ReductionError::DegreeTooLow { degree: beta.degree(), needed });
    }
    Ok(())
}

/// Index sets of the reduction as `(known, unknown, full range)`, before any data is read.
pub fn index_sets(curve: &CurveSpec, d: usize) -> (BTreeSet<i64>, BTreeSet<i64>, (i64, i64)) {
    let ell = curve.ell() as i64;
    let d = d as i64;
    let (range, known): ((i64, i64), BTreeSet<i64>) = match curve {
        CurveSpec::Graph { .. } => {
            let top = if (d * ell) % 2 == 0 { d * ell + 2 } else { d * ell + 1 };
            let known = (0..=top).filter(|t| t % ell + t / ell <= d).collect();
            ((0, top), known)
        }
        CurveSpec::Hyperbolic { .. } => {
            let range = match (d % 2 == 0, ell % 2 == 0) {
                (true, _) => (-d * ell - 2, d + 2),
                (false, true) => (-d * ell - 2, d + 1),
                (false, false) => (-d * ell - 1, d + 1),
            };
            let known = (range.0..=range.1)
                .filter(|&t| {
                    if t >= 0 {
                        return t <= d;
                    }
                    let i = (-t + ell - 1) / ell;
                    let j = t + i * ell;
                    i + j <= d
                })
                .collect();
            (range, known)
        }
    };
    let unknown = (range.0..=range.1).filter(|t| !known.contains(t)).collect();
    (known, unknown, range)
}

/// Range of indices a representing measure must match.
pub fn measure_range(curve: &CurveSpec, d: usize) -> (i64, i64) {
    let ell = curve.ell() as i64;
    let d = d as i64;
    match curve {
        CurveSpec::Graph { .. } => (0, d * ell),
        // With d and l both odd, -d l is odd; start one lower so the shifted
        // Hankel matrix has an even power on its corner.
        CurveSpec::Hyperbolic { .. } if (d * ell) % 2 != 0 => (-d * ell - 1, d),
        CurveSpec::Hyperbolic { .. } => (-d * ell, d),
    }
}

/// Turn curve data into a partial univariate sequence.
///
/// Graph curves are first shifted so the `x^{l-1}` coefficient vanishes; the
/// known entries are then peeled off `beta_{t mod l, t div l}` in increasing `t`.
/// On `y x^l = 1` every known entry is a single data point.
pub fn reduce_to_univariate(
    beta: &BivariateMomentSequence,
    curve: &CurveSpec,
    relation_tol: f64,
) -> Result<ReductionResult, ReductionError> {
    check_supported(beta, curve)?;
    let bad = check_curve_relations(beta, curve, relation_tol);
    if !bad.is_empty() {
        return Err(ReductionError::RelationsViolated(bad));
    }
    let d = beta.degree();
    match curve {
        CurveSpec::Graph { q } => {
            let (beta_n, qn, alt) = normalize_graph_curve(beta, q)?;
            let curve_n = CurveSpec::Graph { q: qn.clone() };
            let (known_set, _, (k1, k2)) = index_sets(&curve_n, d);
            let ell = qn.len() - 1;
            let sc = StructureCoefficients::new(&qn, d);
            let mut known = BTreeMap::new();
            let mut index_map = BTreeMap::new();
            for &t in &known_set {
                let tu = t as usize;
                let (i, j) = (tu % ell, tu / ell);
                let row = sc.row(j);
                let mut acc = beta_n.at(i, j);
                for s in i..tu {
                    let c = row[s - i];
                    if c == 0.0 {
                        continue;
                    }
                    match known.get(&(s as i64)) {
                        Some(g) => acc -= c * g,
                        None => {
                            return Err(ReductionError::InternalInvariantBroken { t, s: s as i64 })
                        }
                    }
                }
                known.insert(t, acc / qn[ell].powi(j as i32));
                index_map.insert(t, (i, j));
            }
            Ok(ReductionResult {
                partial: PartialUnivariateSequence::new(k1, k2, known)?,
                measure_range: measure_range(&curve_n, d),
                curve: curve_n,
                alt,
                index_map,
                beta: beta_n,
                family: Family::Graph,
            })
        }
        CurveSpec::Hyperbolic { ell } => {
            let (known_set, _, (k1, k2)) = index_sets(curve, d);
            let l = *ell as i64;
            let mut known = BTreeMap::new();
            let mut index_map = BTreeMap::new();
            for &t in &known_set {
                let (i, j) = if t >= 0 {
                    (t as usize, 0)
                } else {
                    let c = (-t + l - 1) / l;
                    ((t + l * c) as usize, c as usize)
                };
                known.insert(t, beta.at(i, j));
                index_map.insert(t, (i, j));
            }
            Ok(ReductionResult {
                partial: PartialUnivariateSequence::new(k1, k2, known)?,
                measure_range: measure_range(curve, d),
                curve: curve.clone(),
                alt: AffineMap::identity(),
                index_map,
                beta: beta.clone(),
                family: Family::Hyperbolic,
            })
        }
    }
}

/// Monomials `x^i y^j` with `i < l, j < k`, then `y^k` and `y^k x`: a basis of
/// the column space of a recursively generated moment matrix on `y = q(x)`.
pub fn curve_basis(k: usize, ell: usize) -> Vec<Monomial> {
    let mut b = Vec::with_capacity(k * ell + 2);
    for j in 0..k {
        for i in 0..ell {
            b.push((i, j));
        }
    }
    b.push((0, k));
    b.push((1, k));
    b
}

/// Matrix `P` with `P[(i, j), s] = q_{i,j,s}` over [`curve_basis`] and `1, x, ..., x^{kl+1}`.
///
/// For `p` in the span of the basis, `P^T p` is the coefficient vector of
/// `p(x, q(x))`. On `y x^l = 1` the analogous change of basis is the identity.
pub fn basis_change_matrix(k: usize, q: &[f64]) -> DMatrix<f64> {
    let ell = q.len() - 1;
    let basis = curve_basis(k, ell);
    let sc = StructureCoefficients::new(q, k);
    let n = basis.len();
    DMatrix::from_fn(n, n, |r, s| {
        let (i, j) = basis[r];
        sc.get(i, j, s)
    })
}

/// Place a measure on the line onto the curve: `x -> (x, q(x))` or `x -> (x, x^{-l})`.
pub fn lift_measure(nu: &AtomicMeasure1D, curve: &CurveSpec) -> Result<AtomicMeasure2D, ReductionError> {
    let atoms = nu
        .atoms()
        .iter()
        .map(|&x| curve.point_at(x).ok_or(ReductionError::AtomAtPole))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AtomicMeasure2D::new(atoms, nu.densities().to_vec())?)
}
