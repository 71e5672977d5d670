//! Bivariate moment sequences, moment matrices, the Riesz functional,
//! affine changes of variables and recursive-relation checks.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exponent pair `(i, j)` standing for `x^i y^j`.
pub type Monomial = (usize, usize);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MomentError {
    #[error("monomial x^{0} y^{1} exceeds degree {2}")]
    DegreeTooHigh(usize, usize, usize),
    #[error("affine transform is singular (b*f - c*e = 0)")]
    SingularTransform,
    #[error("column relation reads undefined entries of the moment matrix")]
    UndefinedEntries,
    #[error("moment ({0}, {1}) is missing")]
    MissingMoment(usize, usize),
    #[error("moment ({0}, {1}) is given more than once")]
    DuplicateMoment(usize, usize),
    #[error("moment value at ({0}, {1}) is not finite")]
    NonFiniteMoment(usize, usize),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid tolerance configuration: {0}")]
    InvalidTolerance(String),
}

/// Position of `(i, j)` in the degree-lex enumeration `1, x, y, x^2, xy, y^2, ...`.
pub fn deglex_index(i: usize, j: usize) -> usize {
    let n = i + j;
    n * (n + 1) / 2 + j
}

/// Number of monomials of degree at most `k`.
pub fn simplex_len(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

/// Monomials of degree at most `k` in degree-lex order.
pub fn monomials_up_to(k: usize) -> Vec<Monomial> {
    let mut out = Vec::with_capacity(simplex_len(k));
    for n in 0..=k {
        for j in 0..=n {
            out.push((n - j, j));
        }
    }
    out
}

/// All moments `beta_{i,j}` with `i + j <= degree`.
#[derive(Debug, Clone, PartialEq)]
pub struct BivariateMomentSequence {
    degree: usize,
    values: Vec<f64>,
}

impl BivariateMomentSequence {
    pub fn from_fn(degree: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let values = monomials_up_to(degree).into_iter().map(|(i, j)| f(i, j)).collect();
        Self { degree, values }
    }

    /// Builds a sequence from explicit triples; every simplex entry must appear exactly once.
    pub fn from_triples(
        degree: usize,
        triples: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self, MomentError> {
        let mut slots: Vec<Option<f64>> = vec![None; simplex_len(degree)];
        for (i, j, v) in triples {
            if i + j > degree {
                return Err(MomentError::DegreeTooHigh(i, j, degree));
            }
            if !v.is_finite() {
                return Err(MomentError::NonFiniteMoment(i, j));
            }
            let slot = &mut slots[deglex_index(i, j)];
            if slot.is_some() {
                return Err(MomentError::DuplicateMoment(i, j));
            }
            *slot = Some(v);
        }
        let mut values = Vec::with_capacity(slots.len());
        for ((i, j), s) in monomials_up_to(degree).into_iter().zip(slots) {
            values.push(s.ok_or(MomentError::MissingMoment(i, j))?);
        }
        Ok(Self { degree, values })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        (i + j <= self.degree).then(|| self.values[deglex_index(i, j)])
    }

    /// Value at `(i, j)`; panics outside the simplex.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        assert!(i + j <= self.degree, "moment ({i}, {j}) outside degree {}", self.degree);
        self.values[deglex_index(i, j)]
    }

    /// `((i, j), value)` in degree-lex order.
    pub fn iter(&self) -> impl Iterator<Item = (Monomial, f64)> + '_ {
        monomials_up_to(self.degree).into_iter().zip(self.values.iter().copied())
    }

    /// Largest absolute moment.
    pub fn scale(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    /// Drops every moment of total degree above `degree`.
    pub fn truncate(&self, degree: usize) -> Self {
        let degree = degree.min(self.degree);
        Self::from_fn(degree, |i, j| self.at(i, j))
    }

    /// Largest entrywise difference divided by the larger sequence scale.
    pub fn relative_distance(&self, other: &Self) -> f64 {
        let d = self.degree.min(other.degree);
        let mut diff = 0.0_f64;
        for (i, j) in monomials_up_to(d) {
            diff = diff.max((self.at(i, j) - other.at(i, j)).abs());
        }
        let scale = self.scale().max(other.scale());
        if scale > 0.0 {
            diff / scale
        } else {
            diff
        }
    }
}

/// Sparse real polynomial in `x, y`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly2 {
    terms: BTreeMap<Monomial, f64>,
}

impl Poly2 {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::monomial(0, 0, c)
    }

    pub fn x() -> Self {
        Self::monomial(1, 0, 1.0)
    }

    pub fn y() -> Self {
        Self::monomial(0, 1, 1.0)
    }

    pub fn monomial(i: usize, j: usize, c: f64) -> Self {
        let mut p = Self::zero();
        p.add_term(i, j, c);
        p
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut p = Self::zero();
        for (i, j, c) in terms {
            p.add_term(i, j, c);
        }
        p
    }

    /// Univariate polynomial in `x` from ascending coefficients.
    pub fn from_x_coeffs(q: &[f64]) -> Self {
        Self::from_terms(q.iter().enumerate().map(|(s, c)| (s, 0, *c)))
    }

    pub fn add_term(&mut self, i: usize, j: usize, c: f64) {
        if c == 0.0 {
            return;
        }
        let e = self.terms.entry((i, j)).or_insert(0.0);
        *e += c;
        if *e == 0.0 {
            self.terms.remove(&(i, j));
        }
    }

    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        self.terms.get(&(i, j)).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (Monomial, f64)> + '_ {
        self.terms.iter().map(|(m, c)| (*m, *c))
    }

    /// Total degree; 0 for the zero polynomial.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(|(i, j)| i + j).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.terms
            .iter()
            .map(|((i, j), c)| c * x.powi(*i as i32) * y.powi(*j as i32))
            .sum()
    }

    pub fn pow(&self, n: usize) -> Self {
        let mut out = Self::constant(1.0);
        for _ in 0..n {
            out = &out * self;
        }
        out
    }
}

impl Add for &Poly2 {
    type Output = Poly2;
    fn add(self, rhs: &Poly2) -> Poly2 {
        let mut out = self.clone();
        for ((i, j), c) in rhs.terms() {
            out.add_term(i, j, c);
        }
        out
    }
}

impl Sub for &Poly2 {
    type Output = Poly2;
    fn sub(self, rhs: &Poly2) -> Poly2 {
        self + &(-rhs)
    }
}

impl Neg for &Poly2 {
    type Output = Poly2;
    fn neg(self) -> Poly2 {
        Poly2::from_terms(self.terms().map(|((i, j), c)| (i, j, -c)))
    }
}

impl Mul for &Poly2 {
    type Output = Poly2;
    fn mul(self, rhs: &Poly2) -> Poly2 {
        let mut out = Poly2::zero();
        for ((i1, j1), c1) in self.terms() {
            for ((i2, j2), c2) in rhs.terms() {
                out.add_term(i1 + i2, j1 + j2, c1 * c2);
            }
        }
        out
    }
}

impl fmt::Display for Poly2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for ((i, j), c) in self.terms() {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}")?;
            if i > 0 {
                write!(f, "*x^{i}")?;
            }
            if j > 0 {
                write!(f, "*y^{j}")?;
            }
        }
        Ok(())
    }
}

/// Moment matrix `M_k` with rows and columns labelled by degree-lex monomials.
///
/// For odd source degree the entries of total degree above `d` are masked out.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatrix {
    order: usize,
    source_degree: usize,
    entries: DMatrix<f64>,
    labels: Vec<Monomial>,
}

impl MomentMatrix {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[Monomial] {
        &self.labels
    }

    pub fn is_defined(&self, r: usize, c: usize) -> bool {
        let (a, b) = self.labels[r];
        let (p, q) = self.labels[c];
        a + b + p + q <= self.source_degree
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        self.is_defined(r, c).then(|| self.entries[(r, c)])
    }

    /// Raw entries; masked positions hold NaN.
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// True when every entry is defined (even source degree).
    pub fn is_complete(&self) -> bool {
        self.order * 2 <= self.source_degree
    }

    /// Principal submatrix on the given labels, if all its entries are defined.
    pub fn restrict(&self, labels: &[Monomial]) -> Option<DMatrix<f64>> {
        let idx: Vec<usize> = labels
            .iter()
            .map(|m| self.labels.iter().position(|l| l == m))
            .collect::<Option<_>>()?;
        let n = idx.len();
        let mut out = DMatrix::zeros(n, n);
        for (a, &r) in idx.iter().enumerate() {
            for (b, &c) in idx.iter().enumerate() {
                out[(a, b)] = self.get(r, c)?;
            }
        }
        Some(out)
    }

    /// Fully defined leading block `M_{floor(d/2)}`.
    pub fn defined_block(&self) -> DMatrix<f64> {
        let n = simplex_len(self.source_degree / 2).min(self.size());
        self.entries.view((0, 0), (n, n)).into_owned()
    }
}

pub fn build_moment_matrix(beta: &BivariateMomentSequence) -> MomentMatrix {
    let d = beta.degree();
    let order = d.div_ceil(2);
    let labels = monomials_up_to(order);
    let n = labels.len();
    let entries = DMatrix::from_fn(n, n, |r, c| {
        let (a, b) = labels[r];
        let (p, q) = labels[c];
        beta.get(a + p, b + q).unwrap_or(f64::NAN)
    });
    MomentMatrix { order, source_degree: d, entries, labels }
}

/// `L_beta(p) = sum a_{i,j} beta_{i,j}`.
pub fn riesz_eval(beta: &BivariateMomentSequence, p: &Poly2) -> Result<f64, MomentError> {
    let mut acc = 0.0;
    for ((i, j), c) in p.terms() {
        let v = beta
            .get(i, j)
            .ok_or(MomentError::DegreeTooHigh(i, j, beta.degree()))?;
        acc += c * v;
    }
    Ok(acc)
}

/// `(x, y) -> (a + b x + c y, d + e x + f y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl AffineMap {
    pub fn identity() -> Self {
        Self { a: 0.0, b: 1.0, c: 0.0, d: 0.0, e: 0.0, f: 1.0 }
    }

    pub fn determinant(&self) -> f64 {
        self.b * self.f - self.c * self.e
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (self.a + self.b * x + self.c * y, self.d + self.e * x + self.f * y)
    }

    pub fn inverse(&self) -> Result<Self, MomentError> {
        let det = self.determinant();
        if det == 0.0 || !det.is_finite() {
            return Err(MomentError::SingularTransform);
        }
        let (b, c, e, f) = (self.f / det, -self.c / det, -self.e / det, self.b / det);
        Ok(Self {
            a: -(b * self.a + c * self.d),
            b,
            c,
            d: -(e * self.a + f * self.d),
            e,
            f,
        })
    }

    fn components(&self) -> (Poly2, Poly2) {
        let p1 = Poly2::from_terms([(0, 0, self.a), (1, 0, self.b), (0, 1, self.c)]);
        let p2 = Poly2::from_terms([(0, 0, self.d), (1, 0, self.e), (0, 1, self.f)]);
        (p1, p2)
    }
}

/// Moments of the pushforward under an invertible affine map.
pub fn apply_alt(
    beta: &BivariateMomentSequence,
    map: &AffineMap,
) -> Result<BivariateMomentSequence, MomentError> {
    if map.determinant() == 0.0 {
        return Err(MomentError::SingularTransform);
    }
    let (p1, p2) = map.components();
    push_forward(beta, &p1, &p2, beta.degree())
}

/// Moments `L_beta(phi1^i phi2^j)` for `i + j <= target_degree`, for any polynomial map.
pub fn apply_polynomial_map(
    beta: &BivariateMomentSequence,
    phi1: &Poly2,
    phi2: &Poly2,
    target_degree: usize,
) -> Result<BivariateMomentSequence, MomentError> {
    push_forward(beta, phi1, phi2, target_degree)
}

fn push_forward(
    beta: &BivariateMomentSequence,
    phi1: &Poly2,
    phi2: &Poly2,
    target_degree: usize,
) -> Result<BivariateMomentSequence, MomentError> {
    let pow1: Vec<Poly2> = (0..=target_degree).scan(Poly2::constant(1.0), |acc, n| {
        let cur = acc.clone();
        if n < target_degree {
            *acc = &*acc * phi1;
        }
        Some(cur)
    }).collect();
    let pow2: Vec<Poly2> = (0..=target_degree).scan(Poly2::constant(1.0), |acc, n| {
        let cur = acc.clone();
        if n < target_degree {
            *acc = &*acc * phi2;
        }
        Some(cur)
    }).collect();
    let mut triples = Vec::with_capacity(simplex_len(target_degree));
    for (i, j) in monomials_up_to(target_degree) {
        let v = riesz_eval(beta, &(&pow1[i] * &pow2[j]))?;
        triples.push((i, j, v));
    }
    BivariateMomentSequence::from_triples(target_degree, triples)
}

/// True when the column combination `p(X, Y)` of `M` vanishes relative to the matrix scale.
pub fn check_column_relation(m: &MomentMatrix, p: &Poly2, tol: f64) -> Result<bool, MomentError> {
    let mut cols = Vec::new();
    for ((i, j), c) in p.terms() {
        if i + j > m.order() {
            return Err(MomentError::DegreeTooHigh(i, j, m.order()));
        }
        cols.push((deglex_index(i, j), c));
    }
    let mut scale = 0.0_f64;
    let mut worst = 0.0_f64;
    for r in 0..m.size() {
        let mut acc = 0.0;
        for &(col, c) in &cols {
            let v = m.get(r, col).ok_or(MomentError::UndefinedEntries)?;
            acc += c * v;
            scale = scale.max((c * v).abs());
        }
        worst = worst.max(acc.abs());
    }
    for r in 0..m.size() {
        for c in 0..m.size() {
            if let Some(v) = m.get(r, c) {
                scale = scale.max(v.abs());
            }
        }
    }
    Ok(worst <= tol * scale.max(f64::MIN_POSITIVE))
}

/// The two curve families handled by the solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CurveSpec {
    /// `y = q(x)` with ascending coefficients `q_0, ..., q_l`.
    Graph { q: Vec<f64> },
    /// `y x^l = 1`.
    Hyperbolic { ell: usize },
}

impl CurveSpec {
    /// Graph curve with trailing zero coefficients stripped.
    pub fn graph(q: Vec<f64>) -> Self {
        let mut q = q;
        while q.len() > 1 && q.last() == Some(&0.0) {
            q.pop();
        }
        CurveSpec::Graph { q }
    }

    pub fn monomial_graph(ell: usize) -> Self {
        let mut q = vec![0.0; ell + 1];
        q[ell] = 1.0;
        CurveSpec::Graph { q }
    }

    pub fn hyperbolic(ell: usize) -> Self {
        CurveSpec::Hyperbolic { ell }
    }

    /// `deg q` for graphs, `l` for hyperbolic curves.
    pub fn ell(&self) -> usize {
        match self {
            CurveSpec::Graph { q } => q.len().saturating_sub(1),
            CurveSpec::Hyperbolic { ell } => *ell,
        }
    }

    /// Supported means `l >= 2` with a nonzero, finite leading coefficient.
    pub fn is_supported(&self) -> bool {
        match self {
            CurveSpec::Graph { q } => {
                q.len() >= 3
                    && q.iter().all(|c| c.is_finite())
                    && q.last().is_some_and(|c| *c != 0.0)
            }
            CurveSpec::Hyperbolic { ell } => *ell >= 2,
        }
    }

    /// Polynomial `f` with the curve equal to `{f = 0}`.
    pub fn defining_polynomial(&self) -> Poly2 {
        match self {
            CurveSpec::Graph { q } => &Poly2::y() - &Poly2::from_x_coeffs(q),
            CurveSpec::Hyperbolic { ell } => {
                &Poly2::monomial(*ell, 1, 1.0) - &Poly2::constant(1.0)
            }
        }
    }

    /// Curve equation residual, scaled by the size of its terms.
    pub fn residual(&self, x: f64, y: f64) -> f64 {
        match self {
            CurveSpec::Graph { q } => {
                let qx = eval_univariate(q, x);
                let mag: f64 = q
                    .iter()
                    .enumerate()
                    .map(|(s, c)| (c * x.powi(s as i32)).abs())
                    .sum();
                (y - qx).abs() / (1.0 + mag.max(y.abs()))
            }
            CurveSpec::Hyperbolic { ell } => {
                let v = y * x.powi(*ell as i32);
                (v - 1.0).abs() / (1.0 + v.abs()).max(1.0)
            }
        }
    }

    /// The point of the curve above `x`, or `None` at the pole.
    pub fn point_at(&self, x: f64) -> Option<(f64, f64)> {
        match self {
            CurveSpec::Graph { q } => Some((x, eval_univariate(q, x))),
            CurveSpec::Hyperbolic { ell } => {
                (x != 0.0).then(|| (x, x.powi(-(*ell as i32))))
            }
        }
    }
}

impl fmt::Display for CurveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurveSpec::Graph { q } => {
                write!(f, "y = ")?;
                let mut first = true;
                for (s, c) in q.iter().enumerate().rev() {
                    if *c == 0.0 {
                        continue;
                    }
                    if !first {
                        write!(f, " + ")?;
                    }
                    first = false;
                    match s {
                        0 => write!(f, "{c}")?,
                        1 => write!(f, "{c}*x")?,
                        _ => write!(f, "{c}*x^{s}")?,
                    }
                }
                if first {
                    write!(f, "0")?;
                }
                Ok(())
            }
            CurveSpec::Hyperbolic { ell } => write!(f, "y*x^{ell} = 1"),
        }
    }
}

/// Horner evaluation of ascending coefficients.
pub fn eval_univariate(q: &[f64], x: f64) -> f64 {
    q.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Index pairs `(i, j)` whose curve relation fails.
///
/// Graph: `beta_{i,j} = sum_p q_p beta_{i+p,j-1}`. Hyperbolic: `beta_{i+l,j+1} = beta_{i,j}`.
pub fn check_curve_relations(
    beta: &BivariateMomentSequence,
    curve: &CurveSpec,
    tol: f64,
) -> Vec<Monomial> {
    let d = beta.degree();
    let scale = beta.scale().max(f64::MIN_POSITIVE);
    let mut bad = Vec::new();
    match curve {
        CurveSpec::Graph { q } => {
            let ell = q.len().saturating_sub(1);
            for (i, j) in monomials_up_to(d) {
                if j == 0 || i + j - 1 + ell > d {
                    continue;
                }
                let mut rhs = 0.0;
                let mut mag = beta.at(i, j).abs();
                for (p, c) in q.iter().enumerate() {
                    let t = c * beta.at(i + p, j - 1);
                    rhs += t;
                    mag = mag.max(t.abs());
                }
                if (beta.at(i, j) - rhs).abs() > tol * mag + f64::EPSILON * scale {
                    bad.push((i, j));
                }
            }
        }
        CurveSpec::Hyperbolic { ell } => {
            for (i, j) in monomials_up_to(d) {
                if i + ell + j + 1 > d {
                    continue;
                }
                let lhs = beta.at(i + ell, j + 1);
                let rhs = beta.at(i, j);
                let mag = lhs.abs().max(rhs.abs());
                if (lhs - rhs).abs() > tol * mag + f64::EPSILON * scale {
                    bad.push((i, j));
                }
            }
        }
    }
    bad
}

/// Finitely atomic positive measure in the plane.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AtomicMeasure2D {
    atoms: Vec<(f64, f64)>,
    densities: Vec<f64>,
}

impl AtomicMeasure2D {
    pub fn new(atoms: Vec<(f64, f64)>, densities: Vec<f64>) -> Result<Self, MomentError> {
        if atoms.len() != densities.len() {
            return Err(MomentError::InvalidMeasure(format!(
                "{} atoms but {} densities",
                atoms.len(),
                densities.len()
            )));
        }
        if let Some(r) = densities.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(MomentError::InvalidMeasure(format!("density {r} is not positive")));
        }
        if atoms.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(MomentError::InvalidMeasure("atom coordinate is not finite".into()));
        }
        Ok(Self { atoms, densities })
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Atoms and densities sorted by `x`, then `y`.
    pub fn sorted(&self) -> Vec<((f64, f64), f64)> {
        let mut v: Vec<_> = self.atoms.iter().copied().zip(self.densities.iter().copied()).collect();
        v.sort_by(|a, b| a.0 .0.total_cmp(&b.0 .0).then(a.0 .1.total_cmp(&b.0 .1)));
        v
    }

    /// Largest curve residual over the atoms.
    pub fn curve_residual(&self, curve: &CurveSpec) -> f64 {
        self.atoms
            .iter()
            .map(|(x, y)| curve.residual(*x, *y))
            .fold(0.0, f64::max)
    }
}

/// `beta_{i,j} = sum_p rho_p x_p^i y_p^j` for `i + j <= d`.
pub fn synth_moments(mu: &AtomicMeasure2D, d: usize) -> BivariateMomentSequence {
    BivariateMomentSequence::from_fn(d, |i, j| {
        mu.atoms
            .iter()
            .zip(&mu.densities)
            .map(|((x, y), r)| r * x.powi(i as i32) * y.powi(j as i32))
            .sum()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToleranceConfig {
    pub rank_tol: f64,
    pub psd_tol: f64,
    pub residual_tol: f64,
    pub atom_merge_tol: f64,
    pub max_iter: usize,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            rank_tol: 1e-9,
            psd_tol: 1e-9,
            residual_tol: 1e-8,
            atom_merge_tol: 1e-8,
            max_iter: 5000,
        }
    }
}

impl ToleranceConfig {
    pub fn validate(&self) -> Result<(), MomentError> {
        let named = [
            ("rank_tol", self.rank_tol),
            ("psd_tol", self.psd_tol),
            ("residual_tol", self.residual_tol),
            ("atom_merge_tol", self.atom_merge_tol),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(MomentError::InvalidTolerance(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iter == 0 {
            return Err(MomentError::InvalidTolerance("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}
