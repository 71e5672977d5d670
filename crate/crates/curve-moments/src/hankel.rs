//! Univariate sequences with possibly negative indices, partial sequences with
//! holes, their Hankel matrices, sequence rank and the prg/nrg tests.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::linalg;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HankelError {
    #[error("sequence has even length {0}; a square Hankel matrix needs odd length")]
    EvenLength(usize),
    #[error("sequence is empty")]
    Empty,
    #[error("index {0} lies outside the sequence range")]
    IndexOutOfRange(i64),
    #[error("expected {expected} values for the unknown indices, got {got}")]
    FillLength { expected: usize, got: usize },
    #[error("value at index {0} is not finite")]
    NonFinite(i64),
}

/// `gamma_{k1}, ..., gamma_{k2}` on a contiguous integer range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnivariateMomentSequence {
    k1: i64,
    values: Vec<f64>,
}

impl UnivariateMomentSequence {
    pub fn new(k1: i64, values: Vec<f64>) -> Result<Self, HankelError> {
        if values.is_empty() {
            return Err(HankelError::Empty);
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(HankelError::NonFinite(k1 + p as i64));
        }
        Ok(Self { k1, values })
    }

    /// Sequence starting at index 0.
    pub fn from_values(values: Vec<f64>) -> Result<Self, HankelError> {
        Self::new(0, values)
    }

    pub fn k1(&self) -> i64 {
        self.k1
    }

    pub fn k2(&self) -> i64 {
        self.k1 + self.values.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, t: i64) -> Option<f64> {
        let p = t - self.k1;
        (0..self.values.len() as i64)
            .contains(&p)
            .then(|| self.values[p as usize])
    }

    /// Value at index `t`; panics outside `[k1, k2]`.
    pub fn at(&self, t: i64) -> f64 {
        self.get(t)
            .unwrap_or_else(|| panic!("index {t} outside [{}, {}]", self.k1, self.k2()))
    }

    /// Same index range with the values in reverse order.
    pub fn reversed(&self) -> Self {
        let mut values = self.values.clone();
        values.reverse();
        Self { k1: self.k1, values }
    }

    /// Contiguous sub-range `[lo, hi]`.
    pub fn slice(&self, lo: i64, hi: i64) -> Result<Self, HankelError> {
        if lo < self.k1 || lo > hi {
            return Err(HankelError::IndexOutOfRange(lo));
        }
        if hi > self.k2() {
            return Err(HankelError::IndexOutOfRange(hi));
        }
        let a = (lo - self.k1) as usize;
        let b = (hi - self.k1) as usize;
        Self::new(lo, self.values[a..=b].to_vec())
    }

    pub fn scale(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }
}

/// Index range `[k1, k2]` split into known entries and holes.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialUnivariateSequence {
    k1: i64,
    k2: i64,
    known: BTreeMap<i64, f64>,
}

impl PartialUnivariateSequence {
    pub fn new(k1: i64, k2: i64, known: BTreeMap<i64, f64>) -> Result<Self, HankelError> {
        if k2 < k1 {
            return Err(HankelError::Empty);
        }
        for (&t, v) in &known {
            if t < k1 || t > k2 {
                return Err(HankelError::IndexOutOfRange(t));
            }
            if !v.is_finite() {
                return Err(HankelError::NonFinite(t));
            }
        }
        Ok(Self { k1, k2, known })
    }

    /// Partial sequence from `Option` values starting at `k1`.
    pub fn from_options(k1: i64, values: &[Option<f64>]) -> Result<Self, HankelError> {
        if values.is_empty() {
            return Err(HankelError::Empty);
        }
        let known = values
            .iter()
            .enumerate()
            .filter_map(|(p, v)| v.map(|v| (k1 + p as i64, v)))
            .collect();
        Self::new(k1, k1 + values.len() as i64 - 1, known)
    }

    pub fn k1(&self) -> i64 {
        self.k1
    }

    pub fn k2(&self) -> i64 {
        self.k2
    }

    pub fn len(&self) -> usize {
        (self.k2 - self.k1 + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn known(&self) -> &BTreeMap<i64, f64> {
        &self.known
    }

    pub fn get(&self, t: i64) -> Option<f64> {
        self.known.get(&t).copied()
    }

    pub fn is_known(&self, t: i64) -> bool {
        self.known.contains_key(&t)
    }

    /// Holes in ascending order.
    pub fn unknown(&self) -> Vec<i64> {
        (self.k1..=self.k2).filter(|t| !self.known.contains_key(t)).collect()
    }

    /// Fills the holes, in ascending index order, with `fill`.
    pub fn fill(&self, fill: &[f64]) -> Result<UnivariateMomentSequence, HankelError> {
        let holes = self.unknown();
        if holes.len() != fill.len() {
            return Err(HankelError::FillLength { expected: holes.len(), got: fill.len() });
        }
        let mut it = fill.iter();
        let values = (self.k1..=self.k2)
            .map(|t| match self.known.get(&t) {
                Some(v) => *v,
                None => *it.next().expect("length checked"),
            })
            .collect();
        UnivariateMomentSequence::new(self.k1, values)
    }

    /// The sub-range `[lo, hi]` with the same classification.
    pub fn restrict(&self, lo: i64, hi: i64) -> Result<Self, HankelError> {
        if lo < self.k1 || lo > hi {
            return Err(HankelError::IndexOutOfRange(lo));
        }
        if hi > self.k2 {
            return Err(HankelError::IndexOutOfRange(hi));
        }
        let known = self.known.range(lo..=hi).map(|(t, v)| (*t, *v)).collect();
        Self::new(lo, hi, known)
    }

    /// Moves the index `t` into the unknown set.
    pub fn forget(&mut self, t: i64) {
        self.known.remove(&t);
    }

    /// Assigns a value to `t`, which must lie in range.
    pub fn set(&mut self, t: i64, v: f64) -> Result<(), HankelError> {
        if t < self.k1 || t > self.k2 {
            return Err(HankelError::IndexOutOfRange(t));
        }
        if !v.is_finite() {
            return Err(HankelError::NonFinite(t));
        }
        self.known.insert(t, v);
        Ok(())
    }

    /// Fully known sequence, if there are no holes.
    pub fn to_complete(&self) -> Option<UnivariateMomentSequence> {
        self.unknown().is_empty().then(|| self.fill(&[]).expect("no holes"))
    }

    pub fn scale(&self) -> f64 {
        self.known.values().fold(0.0_f64, |a, v| a.max(v.abs()))
    }
}

/// Hankel matrix `(gamma_{k1+i+j})` of an odd-length sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelView {
    seq: UnivariateMomentSequence,
    matrix: DMatrix<f64>,
}

pub fn hankel_from(v: &UnivariateMomentSequence) -> Result<HankelView, HankelError> {
    if v.len() % 2 == 0 {
        return Err(HankelError::EvenLength(v.len()));
    }
    Ok(HankelView { seq: v.clone(), matrix: linalg::hankel(v.values()) })
}

impl HankelView {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn sequence(&self) -> &UnivariateMomentSequence {
        &self.seq
    }

    /// `m + 1` for a sequence of length `2m + 1`.
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    /// Upper-left corner `A(m')` of size `m' + 1`.
    pub fn upper_left(&self, m: usize) -> DMatrix<f64> {
        let n = (m + 1).min(self.size());
        self.matrix.view((0, 0), (n, n)).into_owned()
    }

    /// Lower-right corner `A[m']` of size `m' + 1`.
    pub fn lower_right(&self, m: usize) -> DMatrix<f64> {
        let n = (m + 1).min(self.size());
        let s = self.size() - n;
        self.matrix.view((s, s), (n, n)).into_owned()
    }

    pub fn reversed(&self) -> HankelView {
        hankel_from(&self.seq.reversed()).expect("reversal keeps the length odd")
    }

    /// Powers labelling the columns, `X^{k1/2}, X^{k1/2+1}, ...`, when `k1` is even.
    pub fn column_powers(&self) -> Option<Vec<i64>> {
        (self.seq.k1() % 2 == 0)
            .then(|| (0..self.size() as i64).map(|i| self.seq.k1() / 2 + i).collect())
    }
}

/// True when column `c` lies in the span of `basis`, judged relative to the column norm.
fn in_span(basis: &DMatrix<f64>, c: &DVector<f64>, tol: f64) -> bool {
    let norm = c.norm();
    if norm == 0.0 {
        return true;
    }
    if basis.ncols() == 0 {
        return false;
    }
    linalg::projection_residual(basis, c) <= tol * norm
}

/// Rank of a sequence: full size for a nonsingular Hankel matrix, otherwise the
/// first column index that depends on the columns before it.
pub fn sequence_rank(v: &UnivariateMomentSequence, tol: f64) -> Result<usize, HankelError> {
    let h = hankel_from(v)?;
    let a = h.matrix();
    let n = a.nrows();
    for i in 0..n {
        let col = a.column(i).into_owned();
        let basis = a.columns(0, i).into_owned();
        if in_span(&basis, &col, tol) {
            return Ok(i);
        }
    }
    Ok(n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrgCheck {
    pub is_prg: bool,
    pub rank: usize,
    /// Recursion coefficients `gamma_{r+s} = sum_i phi_i gamma_{s+i}`, when computed.
    pub phi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NrgCheck {
    pub is_nrg: bool,
    pub rank_rev: usize,
    /// Recursion toward lower indices, in the orientation of the reversed sequence.
    pub psi: Option<Vec<f64>>,
}

/// Positive recursive generation test.
pub fn check_prg(v: &UnivariateMomentSequence, tol: f64) -> Result<PrgCheck, HankelError> {
    let h = hankel_from(v)?;
    let r = sequence_rank(v, tol)?;
    let n = h.size();
    let vals = v.values();
    if r == 0 {
        let zero = vals.iter().all(|x| *x == 0.0);
        return Ok(PrgCheck { is_prg: zero, rank: 0, phi: zero.then(Vec::new) });
    }
    if r == n {
        let pd = linalg::is_positive_definite(h.matrix(), tol);
        return Ok(PrgCheck { is_prg: pd, rank: r, phi: None });
    }
    let corner = h.upper_left(r - 1);
    if !linalg::is_positive_definite(&corner, tol) {
        return Ok(PrgCheck { is_prg: false, rank: r, phi: None });
    }
    let rhs = DVector::from_column_slice(&vals[r..2 * r]);
    let phi = match corner.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => return Ok(PrgCheck { is_prg: false, rank: r, phi: None }),
    };
    let ok = recursion_holds(vals, phi.as_slice(), tol);
    Ok(PrgCheck { is_prg: ok, rank: r, phi: Some(phi.iter().copied().collect()) })
}

/// `vals[j] = sum_i phi_i vals[j-r+i]` for every `j >= r`, with local relative error.
pub(crate) fn recursion_holds(vals: &[f64], phi: &[f64], tol: f64) -> bool {
    let r = phi.len();
    let scale = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    (r..vals.len()).all(|j| {
        let mut acc = 0.0;
        let mut mag = vals[j].abs();
        for (i, p) in phi.iter().enumerate() {
            let t = p * vals[j - r + i];
            acc += t;
            mag = mag.max(t.abs());
        }
        (vals[j] - acc).abs() <= tol * mag + f64::EPSILON * scale
    })
}

/// Negative recursive generation test, computed on the reversed sequence.
pub fn check_nrg(v: &UnivariateMomentSequence, tol: f64) -> Result<NrgCheck, HankelError> {
    let p = check_prg(&v.reversed(), tol)?;
    Ok(NrgCheck { is_nrg: p.is_prg, rank_rev: p.rank, psi: p.phi })
}
