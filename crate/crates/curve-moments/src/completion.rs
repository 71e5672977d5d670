//! Positive semidefinite Hankel completion and the curve solvers built on it.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::hamburger::{
    gauss_rule, refine_measure, solve_sthmp, solve_thmp, AtomicMeasure1D, HamburgerError, UnivariateSolveReport,
};
use crate::hankel::{HankelError, PartialUnivariateSequence, UnivariateMomentSequence};
use crate::linalg;
use crate::moments::{
    apply_alt, build_moment_matrix, check_curve_relations, AffineMap, AtomicMeasure2D,
    BivariateMomentSequence, CurveSpec, MomentError, ToleranceConfig,
};
use crate::reduction::{
    lift_measure, normalize_graph_curve, reduce_to_univariate, Family, ReductionError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompletionError {
    #[error("the fully known corner is not positive definite")]
    CornerNotPD,
    #[error("det A(z) has no real roots (discriminant {0:e})")]
    NonrealRoots(f64),
    #[error("expected a single unknown at index {expected}, found {found:?}")]
    HolePattern { expected: i64, found: Vec<i64> },
    #[error(transparent)]
    Hankel(#[from] HankelError),
    #[error(transparent)]
    Hamburger(#[from] HamburgerError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Moment(#[from] MomentError),
}

impl From<CompletionError> for ReductionError {
    fn from(e: CompletionError) -> Self {
        match e {
            CompletionError::Reduction(r) => r,
            CompletionError::Moment(m) => ReductionError::Moment(m),
            CompletionError::Hankel(h) => ReductionError::Hankel(h),
            other => ReductionError::Moment(MomentError::InvalidMeasure(other.to_string())),
        }
    }
}

/// Dense values of a partial sequence with holes set to `fill`.
fn dense(partial: &PartialUnivariateSequence, fill: f64) -> Vec<f64> {
    (partial.k1()..=partial.k2()).map(|t| partial.get(t).unwrap_or(fill)).collect()
}

/// The two values of the single missing entry that make the Hankel matrix singular.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleEntryCompletion {
    pub index: i64,
    pub z_plus: f64,
    pub z_minus: f64,
}

impl SingleEntryCompletion {
    pub fn fill(&self, partial: &PartialUnivariateSequence, z: f64) -> Result<UnivariateMomentSequence, HankelError> {
        partial.fill(&[z])
    }
}

/// Fill the entry just below the top of an odd-length partial sequence so that
/// the Hankel matrix becomes positive semidefinite with rank one less than full.
///
/// With `C = L L^T` the known corner and `r = L^{-1} b(0)`, where `b(z)` is the
/// last row without its diagonal, `det A(z) / det C = D - (r_last + z / L_last)^2`
/// and `D = gamma_top - sum_{i < last} r_i^2`. `D` is a Schur complement of
/// known entries, so the roots come out without cancellation.
pub fn complete_single_entry(
    partial: &PartialUnivariateSequence,
    tol: &ToleranceConfig,
) -> Result<SingleEntryCompletion, CompletionError> {
    let len = partial.len();
    if len % 2 == 0 {
        return Err(HankelError::EvenLength(len).into());
    }
    let m = (len - 1) / 2;
    let expected = partial.k2() - 1;
    let holes = partial.unknown();
    if m == 0 || holes != [expected] {
        return Err(CompletionError::HolePattern { expected, found: holes });
    }
    let v = dense(partial, 0.0);
    let c = linalg::hankel(&v[..=2 * m - 2]);
    let (c_scaled, dsc) = diagonal_scaling(&c);
    // The roots only need a factorisation that stands clear of rounding, which
    // is a much weaker demand than numerical full rank at `rank_tol`.
    let floor = (64 * m) as f64 * f64::EPSILON;
    let Some(dsc) = dsc.filter(|_| linalg::is_positive_definite(&c_scaled, floor.min(tol.rank_tol))) else {
        return Err(CompletionError::CornerNotPD);
    };
    // Factor the scaled corner; the last row is scaled to match.
    let l = c_scaled.cholesky().ok_or(CompletionError::CornerNotPD)?.unpack();
    let top = v[2 * m];
    let dt = 1.0 / top.abs().sqrt().max(f64::MIN_POSITIVE);
    let b0 = DVector::from_fn(m, |i, _| if i + 1 < m { v[m + i] * dsc[i] * dt } else { 0.0 });
    let r = l.solve_lower_triangular(&b0).ok_or(CompletionError::CornerNotPD)?;
    let disc = top * dt * dt - r.rows(0, m - 1).norm_squared();
    if disc < 0.0 {
        return Err(CompletionError::NonrealRoots(disc));
    }
    let lm = l[(m - 1, m - 1)];
    // Undo the scaling of the hole entry, which sits at (m - 1, m).
    let unscale = 1.0 / (dsc[m - 1] * dt);
    let root = disc.sqrt();
    let (z1, z2) = (lm * (-r[m - 1] + root) * unscale, lm * (-r[m - 1] - root) * unscale);
    Ok(SingleEntryCompletion { index: expected, z_plus: z1.max(z2), z_minus: z1.min(z2) })
}

/// `D A D` with `D = diag(1 / sqrt(a_ii))`, or `None` when a diagonal entry is not positive.
fn diagonal_scaling(a: &DMatrix<f64>) -> (DMatrix<f64>, Option<Vec<f64>>) {
    let n = a.nrows();
    if (0..n).any(|i| !(a[(i, i)] > 0.0)) {
        return (a.clone(), None);
    }
    let d: Vec<f64> = (0..n).map(|i| 1.0 / a[(i, i)].sqrt()).collect();
    (DMatrix::from_fn(n, n, |i, j| a[(i, j)] * d[i] * d[j]), Some(d))
}

/// Principal submatrix of known entries that is not positive semidefinite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    /// Rows of the Hankel matrix, counted from 0.
    pub rows: Vec<usize>,
    /// Smallest eigenvalue after scaling the submatrix to unit diagonal
    /// (the raw entry when a diagonal entry is itself negative).
    pub min_eigenvalue: f64,
}

impl std::fmt::Display for Certificate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "known entries on rows {:?} are not positive semidefinite (scaled eigenvalue {:e})",
            self.rows, self.min_eigenvalue
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FeasibilityOutcome {
    Feasible { completed: UnivariateMomentSequence, gap: f64, iterations: usize },
    Infeasible { certificate: Certificate },
    Unknown { gap: f64, iterations: usize },
}

impl FeasibilityOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, FeasibilityOutcome::Feasible { .. })
    }
}

/// Smallest eigenvalue of a symmetric matrix after scaling to unit diagonal;
/// a zero diagonal entry with a nonzero row is reported as `-inf`.
fn scaled_min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut keep = Vec::new();
    for i in 0..n {
        let d = a[(i, i)];
        if d < 0.0 {
            return d;
        }
        if d == 0.0 {
            let row_mag = (0..n).fold(0.0_f64, |m, j| m.max(a[(i, j)].abs()));
            if row_mag > 0.0 {
                return f64::NEG_INFINITY;
            }
        } else {
            keep.push(i);
        }
    }
    if keep.is_empty() {
        return 0.0;
    }
    let sub = DMatrix::from_fn(keep.len(), keep.len(), |r, c| a[(keep[r], keep[c])]);
    let (s, _) = diagonal_scaling(&sub);
    linalg::min_eigenvalue(&s)
}

/// Look for principal submatrices built only from known entries that fail to
/// be positive semidefinite: single diagonal entries, 2x2 minors and maximal
/// blocks of consecutive fully known rows.
fn find_certificate(partial: &PartialUnivariateSequence, psd_tol: f64) -> Option<Certificate> {
    let n = partial.len().div_ceil(2);
    let k1 = partial.k1();
    let at = |i: usize, j: usize| partial.get(k1 + (i + j) as i64);
    let check = |rows: Vec<usize>| -> Option<Certificate> {
        let vals: Option<Vec<Vec<f64>>> =
            rows.iter().map(|&i| rows.iter().map(|&j| at(i, j)).collect()).collect();
        let vals = vals?;
        let a = DMatrix::from_fn(rows.len(), rows.len(), |r, c| vals[r][c]);
        let ev = scaled_min_eigenvalue(&a);
        (ev < -psd_tol).then_some(Certificate { rows, min_eigenvalue: ev })
    };
    for i in 0..n {
        if let Some(c) = check(vec![i]) {
            return Some(c);
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            if let Some(c) = check(vec![i, j]) {
                return Some(c);
            }
        }
    }
    // A block of rows a..=b is fully known when every index 2a..=2b is.
    let mut a = 0;
    while a < n {
        let mut b = a;
        if at(a, a).is_none() {
            a += 1;
            continue;
        }
        while b + 1 < n && at(b + 1, b + 1).is_some() && at(b, b + 1).is_some() {
            b += 1;
        }
        if b > a + 1 {
            if let Some(c) = check((a..=b).collect()) {
                return Some(c);
            }
        }
        a = b + 1;
    }
    None
}

/// Log-linear interpolation of the diagonal for the scaling, through the
/// positive known diagonal entries.
fn diagonal_estimates(partial: &PartialUnivariateSequence) -> Vec<f64> {
    let n = partial.len().div_ceil(2);
    let k1 = partial.k1();
    let known: Vec<(f64, f64)> = (0..n)
        .filter_map(|i| {
            partial
                .get(k1 + 2 * i as i64)
                .filter(|v| *v > 0.0)
                .map(|v| (i as f64, v.ln()))
        })
        .collect();
    (0..n)
        .map(|i| {
            if let Some(v) = partial.get(k1 + 2 * i as i64).filter(|v| *v > 0.0) {
                return v;
            }
            let x = i as f64;
            let left: Vec<&(f64, f64)> = known.iter().filter(|p| p.0 < x).collect();
            let right: Vec<&(f64, f64)> = known.iter().filter(|p| p.0 > x).collect();
            let line = |p: &(f64, f64), q: &(f64, f64)| p.1 + (q.1 - p.1) * (x - p.0) / (q.0 - p.0);
            let lv = match (left.last(), right.first()) {
                (Some(p), Some(q)) => line(p, q),
                (Some(p), None) if left.len() >= 2 => line(left[left.len() - 2], p),
                (None, Some(q)) if right.len() >= 2 => line(q, right[1]),
                (Some(p), None) => p.1,
                (None, Some(q)) => q.1,
                (None, None) => 0.0,
            };
            lv.exp()
        })
        .collect()
}

/// Positive semidefinite completion of a partial Hankel matrix.
///
/// Known-entry certificates are searched first. Otherwise a barrier method
/// minimises `s` subject to `D A(z) D + s I >= 0`, with `D` scaling an
/// estimate of the diagonal to one. The optimum is feasible when `s` reaches
/// `psd_tol`. Anything else is `Unknown`: only known entries can certify
/// infeasibility.
pub fn complete_feasibility(
    partial: &PartialUnivariateSequence,
    tol: &ToleranceConfig,
) -> Result<FeasibilityOutcome, CompletionError> {
    let len = partial.len();
    if len % 2 == 0 {
        return Err(HankelError::EvenLength(len).into());
    }
    if let Some(certificate) = find_certificate(partial, tol.psd_tol) {
        return Ok(FeasibilityOutcome::Infeasible { certificate });
    }
    let n = len.div_ceil(2);
    let holes: Vec<usize> = partial.unknown().iter().map(|t| (t - partial.k1()) as usize).collect();
    if holes.is_empty() {
        let full = partial.to_complete().expect("no holes");
        // No certificate on the whole matrix means it is positive semidefinite.
        return Ok(FeasibilityOutcome::Feasible { completed: full, gap: 0.0, iterations: 0 });
    }
    let diag = diagonal_estimates(partial);
    let d: Vec<f64> = diag.iter().map(|g| 1.0 / g.sqrt()).collect();
    let mut v = dense(partial, 0.0);
    for &o in &holes {
        if o % 2 == 0 {
            v[o] = diag[o / 2];
        }
    }
    let build = |v: &[f64]| DMatrix::from_fn(n, n, |i, j| d[i] * d[j] * v[i + j]);
    // Scaled unit anti-diagonals, one per unknown.
    let g: Vec<DMatrix<f64>> = holes
        .iter()
        .map(|&o| DMatrix::from_fn(n, n, |i, j| if i + j == o { d[i] * d[j] } else { 0.0 }))
        .collect();
    let h = holes.len();
    // Scaled unknowns stay inside |c_m v_o| < BOX; an unknown corner diagonal
    // would otherwise run off to infinity under the log-det term.
    const BOX: f64 = 1e4;
    let c: Vec<f64> = holes
        .iter()
        .map(|&o| (0..n).filter(|&i| o >= i && o - i < n).map(|i| d[i] * d[o - i]).fold(0.0, f64::max))
        .collect();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut s = (-linalg::min_eigenvalue(&build(&v))).max(0.0) + 1.0;
    let barrier = |v: &[f64], s: f64, t: f64| -> Option<f64> {
        let chol = (build(v) + &eye * s).cholesky()?;
        let logdet: f64 = chol.l().diagonal().iter().map(|x| 2.0 * x.ln()).sum();
        let mut boxed = 0.0;
        for (m, &o) in holes.iter().enumerate() {
            let room = BOX * BOX - (c[m] * v[o]).powi(2);
            if room <= 0.0 {
                return None;
            }
            boxed -= room.ln();
        }
        Some(t * s - logdet + boxed)
    };
    let feasible = |v: &[f64], iterations: usize| -> Result<Option<FeasibilityOutcome>, CompletionError> {
        let lmin = linalg::min_eigenvalue(&build(v));
        if lmin >= -tol.psd_tol {
            let completed = UnivariateMomentSequence::new(partial.k1(), v.to_vec())?;
            return Ok(Some(FeasibilityOutcome::Feasible { completed, gap: (-lmin).max(0.0), iterations }));
        }
        Ok(None)
    };
    let mut t = 1.0;
    let mut iterations = 0;
    loop {
        // Centre for the current t.
        for _ in 0..60 {
            let Some(chol) = (build(&v) + &eye * s).cholesky() else { break };
            let w = chol.inverse();
            let wg: Vec<DMatrix<f64>> = g.iter().map(|gm| &w * gm).collect();
            let mut grad = DVector::zeros(h + 1);
            let mut hess = DMatrix::zeros(h + 1, h + 1);
            for a in 0..h {
                grad[a] = -wg[a].trace();
                for b in a..h {
                    let x = (&wg[a] * &wg[b]).trace();
                    hess[(a, b)] = x;
                    hess[(b, a)] = x;
                }
                let u = c[a] * v[holes[a]];
                let room = BOX * BOX - u * u;
                grad[a] += 2.0 * c[a] * u / room;
                hess[(a, a)] += 2.0 * c[a] * c[a] * (BOX * BOX + u * u) / (room * room);
                let x = (&wg[a] * &w).trace();
                hess[(a, h)] = x;
                hess[(h, a)] = x;
            }
            grad[h] = t - w.trace();
            hess[(h, h)] = (&w * &w).trace();
            let Some((step, _)) = linalg::lu_solve(&hess, &(-&grad)) else { break };
            let decrement = -grad.dot(&step);
            if decrement < 1e-12 {
                break;
            }
            iterations += 1;
            if iterations > tol.max_iter {
                let gap = (-linalg::min_eigenvalue(&build(&v))).max(0.0);
                return Ok(FeasibilityOutcome::Unknown { gap, iterations: tol.max_iter });
            }
            let f0 = barrier(&v, s, t).expect("current point is interior");
            let mut alpha = 1.0;
            let mut moved = false;
            while alpha > 1e-12 {
                let mut cand = v.clone();
                for (a, &o) in holes.iter().enumerate() {
                    cand[o] += alpha * step[a];
                }
                let cs = s + alpha * step[h];
                if let Some(f1) = barrier(&cand, cs, t) {
                    if f1 <= f0 - 0.25 * alpha * decrement {
                        v = cand;
                        s = cs;
                        moved = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }
        // s is within n / t of its optimum. Stop deep inside the cone when
        // there is room, since extraction prefers a well conditioned matrix.
        let slack = n as f64 / t;
        if (s < 0.0 && slack <= -0.25 * s) || slack < tol.psd_tol {
            if let Some(out) = feasible(&v, iterations)? {
                return Ok(out);
            }
        }
        if slack < 1e-3 * tol.psd_tol {
            let gap = (-linalg::min_eigenvalue(&build(&v))).max(0.0);
            return Ok(FeasibilityOutcome::Unknown { gap, iterations });
        }
        t *= 8.0;
    }
}

/// SDPA sparse text for the feasibility problem `sum_m x_m F_m - F_0 >= 0`.
///
/// One variable per unknown index in ascending order, one block holding the
/// Hankel matrix. `F_0` carries the known entries with a minus sign and `F_m`
/// has a one on every upper-triangle position of its anti-diagonal.
pub fn export_sdpa(partial: &PartialUnivariateSequence) -> Result<String, CompletionError> {
    let len = partial.len();
    if len % 2 == 0 {
        return Err(HankelError::EvenLength(len).into());
    }
    let n = len.div_ceil(2);
    let k1 = partial.k1();
    let holes = partial.unknown();
    let mut out = String::new();
    let _ = writeln!(out, "* partial Hankel matrix, indices {}..{}", k1, partial.k2());
    let _ = writeln!(out, "{}", holes.len());
    let _ = writeln!(out, "1");
    let _ = writeln!(out, "{n}");
    let zeros = vec!["0"; holes.len()];
    let _ = writeln!(out, "{}", zeros.join(" "));
    for i in 0..n {
        for j in i..n {
            if let Some(v) = partial.get(k1 + (i + j) as i64) {
                if v != 0.0 {
                    let _ = writeln!(out, "0 1 {} {} {:.16e}", i + 1, j + 1, -v);
                }
            }
        }
    }
    for (m, t) in holes.iter().enumerate() {
        let o = (t - k1) as usize;
        for i in 0..n {
            if o >= i && o - i >= i && o - i < n {
                let _ = writeln!(out, "{} 1 {} {} {:.16e}", m + 1, i + 1, o - i + 1, 1.0);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    MeasureFound,
    NoMeasure,
    Unknown,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub rank_moment_matrix: Option<usize>,
    pub rank_reduced: Option<usize>,
    pub failed_condition: Option<String>,
    /// Values chosen for undetermined univariate moments.
    pub completion: Vec<(i64, f64)>,
    pub residual: Option<f64>,
    pub atom_bound: Option<usize>,
    pub within_bound: Option<bool>,
    /// Whether a measure with the least possible number of atoms exists, when decided.
    pub minimal_measure: Option<bool>,
    pub path: Option<String>,
    pub projection_gap: Option<f64>,
    pub iterations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub measure: Option<AtomicMeasure2D>,
    pub diagnostics: Diagnostics,
}

impl SolveReport {
    pub fn found(&self) -> bool {
        self.status == SolveStatus::MeasureFound
    }
}

/// Upper bound on the number of atoms a minimal representing measure needs.
pub fn atom_bound(curve: &CurveSpec, d: usize) -> usize {
    let k = d.div_ceil(2);
    let ell = curve.ell();
    match (curve, d % 2 == 0) {
        (CurveSpec::Graph { .. }, true) => k * ell,
        (CurveSpec::Graph { .. }, false) => k * ell - ell.div_ceil(2),
        (CurveSpec::Hyperbolic { .. }, true) => k * (ell + 1),
        (CurveSpec::Hyperbolic { .. }, false) => k * (ell + 1) - ell / 2 + 1,
    }
}

/// Largest entrywise error of the moments of `mu` against `beta`, relative to
/// the size of the entry or of the terms that produce it.
pub fn moment_residual(mu: &AtomicMeasure2D, beta: &BivariateMomentSequence) -> f64 {
    beta.iter()
        .map(|((i, j), b)| {
            let (mut m, mut mag) = (0.0, 0.0);
            for ((x, y), r) in mu.atoms().iter().zip(mu.densities()) {
                let term = r * x.powi(i as i32) * y.powi(j as i32);
                m += term;
                mag += term.abs();
            }
            let w = b.abs().max(mag);
            if w > 0.0 {
                (m - b).abs() / w
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// Extraction works on data that went through a change of variables and can
/// lose a few digits there. When a strict pass finds nothing, a pass with a
/// looser internal fit test runs, and then a direct fit on `prefix`, the
/// leading known block of the reduced data with its shift. A measure from the
/// later stages counts only if it passes the final check against the input.
fn with_retry(
    tol: &ToleranceConfig,
    beta: &BivariateMomentSequence,
    curve: &CurveSpec,
    prefix: Option<(Vec<f64>, f64)>,
    run: impl Fn(&ToleranceConfig) -> SolveReport,
) -> SolveReport {
    // A loose final tolerance must not let the first pass settle for a rough fit.
    let strict = ToleranceConfig { residual_tol: tol.residual_tol.min(1e-8), ..*tol };
    let first = run(&strict);
    if first.found() {
        return first;
    }
    let loose = ToleranceConfig { residual_tol: tol.residual_tol.max(1e-6), ..*tol };
    let second = run(&loose);
    if second.found() {
        return second;
    }
    let Some((prefix, x_shift)) = prefix else { return first };
    match direct_fit(&prefix, beta, curve, x_shift, tol) {
        Some((mu, residual)) => {
            let mut diagnostics = first.diagnostics;
            diagnostics.path = Some("direct fit".into());
            diagnostics.failed_condition = None;
            diagnostics.residual = Some(residual);
            diagnostics.within_bound = diagnostics.atom_bound.map(|b| mu.len() <= b);
            SolveReport { status: SolveStatus::MeasureFound, measure: Some(mu), diagnostics }
        }
        None => first,
    }
}

/// Gauss rules of increasing size on `gamma_0, gamma_1, ...`, each moved back
/// by `x_shift`, lifted, refined and checked against `beta`.
fn direct_fit(
    prefix: &[f64],
    beta: &BivariateMomentSequence,
    curve: &CurveSpec,
    x_shift: f64,
    tol: &ToleranceConfig,
) -> Option<(AtomicMeasure2D, f64)> {
    let bound = atom_bound(curve, beta.degree());
    let len = prefix.len();
    (1..=bound.min(len / 2)).find_map(|r| {
        let seq = UnivariateMomentSequence::from_values(prefix[..2 * r].to_vec()).ok()?;
        let nu = gauss_rule(&seq, r, None)?;
        let nu = AtomicMeasure1D::new(nu.atoms().iter().map(|x| x - x_shift).collect(), nu.densities().to_vec()).ok()?;
        let mu = lift_measure(&nu, curve).ok()?;
        let residual = moment_residual(&mu, beta);
        let (mu, residual) = match refine_on_curve(&mu, beta, curve) {
            Some((m, r)) if r < residual => (m, r),
            _ => (mu, residual),
        };
        (residual <= tol.residual_tol).then_some((mu, residual))
    })
}

/// Slope of the curve above `x`.
fn slope(curve: &CurveSpec, x: f64) -> f64 {
    match curve {
        CurveSpec::Graph { q } => q.iter().enumerate().skip(1).map(|(s, c)| s as f64 * c * x.powi(s as i32 - 1)).sum(),
        CurveSpec::Hyperbolic { ell } => -(*ell as f64) * x.powi(-(*ell as i32) - 1),
    }
}

/// Damped Gauss-Newton on atom abscissae and densities against the bivariate
/// data. Returns the result only if it keeps its atoms on the curve.
fn refine_on_curve(
    mu: &AtomicMeasure2D,
    beta: &BivariateMomentSequence,
    curve: &CurveSpec,
) -> Option<(AtomicMeasure2D, f64)> {
    let r = mu.len();
    let data: Vec<((usize, usize), f64)> = beta.iter().collect();
    let weights: Vec<f64> = data
        .iter()
        .map(|&((i, j), b)| {
            let mag: f64 = mu
                .atoms()
                .iter()
                .zip(mu.densities())
                .map(|((x, y), w)| (w * x.powi(i as i32) * y.powi(j as i32)).abs())
                .sum();
            b.abs().max(mag).max(f64::MIN_POSITIVE)
        })
        .collect();
    let mut xs: Vec<f64> = mu.atoms().iter().map(|p| p.0).collect();
    let mut ws = mu.densities().to_vec();
    let build = |xs: &[f64], ws: &[f64]| -> Option<AtomicMeasure2D> {
        let pts: Option<Vec<_>> = xs.iter().map(|&x| curve.point_at(x)).collect();
        AtomicMeasure2D::new(pts?, ws.to_vec()).ok().filter(|m| m.len() == r)
    };
    let mut best = moment_residual(mu, beta);
    let mut out = None;
    let mut lambda: f64 = 1e-6;
    for _ in 0..30 {
        if best <= 4.0 * f64::EPSILON {
            break;
        }
        let mut jac = DMatrix::zeros(data.len(), 2 * r);
        let mut res = DVector::zeros(data.len());
        for (p, &((i, j), b)) in data.iter().enumerate() {
            let (i, j) = (i as i32, j as i32);
            let mut m = 0.0;
            for a in 0..r {
                let (x, y) = curve.point_at(xs[a])?;
                let v = x.powi(i) * y.powi(j);
                m += ws[a] * v;
                let dv = i as f64 * x.powi(i - 1) * y.powi(j) + j as f64 * x.powi(i) * y.powi(j - 1) * slope(curve, x);
                jac[(p, a)] = ws[a] * dv / weights[p];
                jac[(p, r + a)] = v / weights[p];
            }
            res[p] = (m - b) / weights[p];
        }
        let norm = res.norm();
        let cols: Vec<f64> = (0..2 * r).map(|c| jac.column(c).norm().max(f64::MIN_POSITIVE)).collect();
        let mut improved = false;
        for _ in 0..8 {
            // Least squares on [J; sqrt(lambda) D] by QR, which avoids squaring the condition.
            let rows = data.len();
            let mut aug = DMatrix::zeros(rows + 2 * r, 2 * r);
            let mut rhs = DVector::zeros(rows + 2 * r);
            aug.view_mut((0, 0), (rows, 2 * r)).copy_from(&jac);
            rhs.rows_mut(0, rows).copy_from(&res);
            for c in 0..2 * r {
                aug[(rows + c, c)] = lambda.sqrt() * cols[c];
            }
            let qr = aug.qr();
            let step = qr.r().solve_upper_triangular(&(qr.q().transpose() * &rhs));
            if let Some(step) = step {
                let nx: Vec<f64> = (0..r).map(|k| xs[k] - step[k]).collect();
                let nw: Vec<f64> = (0..r).map(|k| ws[k] - step[r + k]).collect();
                if let Some(cand) = build(&nx, &nw) {
                    let cand_norm = weighted_norm(&cand, &data, &weights);
                    if cand_norm < norm {
                        let res_c = moment_residual(&cand, beta);
                        if res_c < best {
                            best = res_c;
                            out = Some((cand, res_c));
                        }
                        (xs, ws) = (nx, nw);
                        lambda = (lambda * 0.1).max(1e-14);
                        improved = true;
                        break;
                    }
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    out
}

fn weighted_norm(mu: &AtomicMeasure2D, data: &[((usize, usize), f64)], weights: &[f64]) -> f64 {
    data.iter()
        .zip(weights)
        .map(|(&((i, j), b), w)| {
            let m: f64 = mu
                .atoms()
                .iter()
                .zip(mu.densities())
                .map(|((x, y), r)| r * x.powi(i as i32) * y.powi(j as i32))
                .sum();
            ((m - b) / w).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Same measure of fit for a measure on the line against known univariate moments.
fn univariate_residual(mu: &AtomicMeasure1D, known: &BTreeMap<i64, f64>, lo: i64, hi: i64) -> f64 {
    known
        .range(lo..=hi)
        .map(|(&t, &g)| {
            let (mut m, mut mag) = (0.0, 0.0);
            for (x, r) in mu.atoms().iter().zip(mu.densities()) {
                let term = r * x.powi(t as i32);
                m += term;
                mag += term.abs();
            }
            let w = g.abs().max(mag);
            if w > 0.0 {
                (m - g).abs() / w
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

fn rank_of_moment_matrix(beta: &BivariateMomentSequence, tol: &ToleranceConfig) -> (usize, f64) {
    let even = beta.truncate(beta.degree() - beta.degree() % 2);
    let m = build_moment_matrix(&even);
    let a = m.entries();
    (linalg::numerical_rank(a, tol.rank_tol), scaled_min_eigenvalue(a))
}

/// Rank and positivity of the largest complete moment matrix of the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentMatrixSummary {
    /// Order `k` of `M_k`: the degree rounded down to even, halved.
    pub order: usize,
    pub rank: usize,
    /// Smallest eigenvalue after scaling to unit diagonal.
    pub min_eigenvalue: f64,
    pub positive_semidefinite: bool,
}

pub fn summarize_moment_matrix(beta: &BivariateMomentSequence, tol: &ToleranceConfig) -> MomentMatrixSummary {
    let (rank, min_eigenvalue) = rank_of_moment_matrix(beta, tol);
    MomentMatrixSummary {
        order: beta.degree() / 2,
        rank,
        min_eigenvalue,
        positive_semidefinite: min_eigenvalue >= -tol.psd_tol,
    }
}

/// Univariate outcome before lifting.
struct Extraction {
    status: SolveStatus,
    nu: Option<AtomicMeasure1D>,
    diag: Diagnostics,
}

impl Extraction {
    fn no(diag: Diagnostics, why: impl Into<String>) -> Self {
        let mut diag = diag;
        diag.failed_condition = Some(why.into());
        Self { status: SolveStatus::NoMeasure, nu: None, diag }
    }

    fn unknown(diag: Diagnostics, why: impl Into<String>) -> Self {
        let mut diag = diag;
        diag.failed_condition = Some(why.into());
        Self { status: SolveStatus::Unknown, nu: None, diag }
    }

    fn found(diag: Diagnostics, nu: AtomicMeasure1D) -> Self {
        Self { status: SolveStatus::MeasureFound, nu: Some(nu), diag }
    }
}

fn solve_range(seq: &UnivariateMomentSequence, tol: &ToleranceConfig) -> Option<UnivariateSolveReport> {
    if seq.k1() == 0 {
        solve_thmp(seq, tol).ok()
    } else if seq.k1() < 0 && seq.k2() > 0 {
        solve_sthmp(seq, tol).ok()
    } else {
        None
    }
}

/// `mu` when it reproduces the known entries in `lo..=hi`, after refining it
/// against them if it is close.
fn fit_to_known(
    mu: AtomicMeasure1D,
    known: &BTreeMap<i64, f64>,
    (lo, hi): (i64, i64),
    tol: &ToleranceConfig,
) -> Option<AtomicMeasure1D> {
    let res = univariate_residual(&mu, known, lo, hi);
    if res <= tol.residual_tol {
        return Some(mu);
    }
    if res > 1e-3 {
        return None;
    }
    let data: Vec<(i64, f64)> = known.range(lo..=hi).map(|(t, v)| (*t, *v)).collect();
    let (mu, res) = refine_measure(mu, &data);
    (res <= tol.residual_tol).then_some(mu)
}

/// A measure for the complete sequence `seq` that also reproduces every known
/// entry in `lo..=hi`, with its rank. The Hamburger solver goes first; Gauss
/// rules of increasing size are the fallback, the largest one with its last
/// recursion coefficient free when `seq` has odd length.
fn fit_known(
    seq: &UnivariateMomentSequence,
    known: &BTreeMap<i64, f64>,
    (lo, hi): (i64, i64),
    tol: &ToleranceConfig,
) -> Option<(AtomicMeasure1D, usize)> {
    let fits = |mu: Option<AtomicMeasure1D>| mu.and_then(|mu| fit_to_known(mu, known, (lo, hi), tol));
    if let Some(report) = solve_range(seq, tol) {
        if let Some(mu) = fits(report.measure) {
            return Some((mu, report.rank));
        }
    }
    let len = seq.len();
    for r in 1..=len / 2 {
        if let Some(mu) = fits(gauss_rule(seq, r, None)) {
            return Some((mu, r));
        }
    }
    if len % 2 == 1 {
        let nodes = len.div_ceil(2);
        let v = seq.values();
        let s = if v[0] != 0.0 && len > 2 { (v[2] / v[0]).abs().sqrt() } else { 1.0 };
        for a in [0.0, 1.0, -1.0, 0.5, -0.5, 2.0, -2.0] {
            if let Some(mu) = fits(gauss_rule(seq, nodes, Some(a * s))) {
                return Some((mu, nodes));
            }
        }
    }
    None
}

/// The measure forced by a singular leading block, when there is one, checked
/// against every known entry of the range.
fn flat_block(
    partial: &PartialUnivariateSequence,
    lo: i64,
    hi: i64,
    tol: &ToleranceConfig,
) -> Option<AtomicMeasure1D> {
    let first_hole = partial.unknown().into_iter().find(|t| (lo..=hi).contains(t)).unwrap_or(hi + 1);
    // An odd start would make the block the moments of a signed measure.
    let start = if lo < 0 && lo % 2 != 0 { lo + 1 } else { lo };
    let mut end = first_hole - 1;
    if (end - start) % 2 != 0 {
        end -= 1;
    }
    if end - start < 2 {
        return None;
    }
    let seq = partial.restrict(start, end).ok()?.to_complete()?;
    fit_known(&seq, partial.known(), (lo, hi), tol).map(|(mu, _)| mu)
}

/// Range `lo..=hi` with at most the entry `hi - 1` missing: choose it so the
/// Hankel matrix drops rank and extract the resulting measure.
fn single_entry_path(
    seq: &PartialUnivariateSequence,
    tol: &ToleranceConfig,
    diag: &mut Diagnostics,
) -> Result<Option<AtomicMeasure1D>, String> {
    let (lo, hi) = (seq.k1(), seq.k2());
    let corner = seq.restrict(lo, hi - 2).ok().and_then(|c| c.to_complete());
    let corner_fit = |diag: &mut Diagnostics| {
        let (mu, rank) = fit_known(corner.as_ref()?, seq.known(), (lo, hi), tol)?;
        diag.rank_reduced = Some(rank);
        Some(mu)
    };
    match complete_single_entry(seq, tol) {
        Ok(sol) => {
            for z in [sol.z_plus, sol.z_minus] {
                let Ok(full) = seq.fill(&[z]) else { continue };
                if let Some((mu, rank)) = fit_known(&full, seq.known(), (lo, hi), tol) {
                    diag.completion.push((sol.index, z));
                    diag.rank_reduced = Some(rank);
                    return Ok(Some(mu));
                }
            }
            // A corner close to singular can still carry the measure by itself.
            Ok(corner_fit(diag))
        }
        Err(CompletionError::CornerNotPD) => {
            if let Some(mu) = corner_fit(diag) {
                return Ok(Some(mu));
            }
            let Some(corner) = corner else { return Ok(None) };
            // A singular leading block has exactly one representing measure.
            match solve_range(&corner, tol).and_then(|r| r.measure.ok_or(r.diagnostic.unwrap_or_default()).ok()) {
                Some(mu) => Err(format!(
                    "the singular leading block forces a measure that misses gamma_{hi} (relative error {:e})",
                    univariate_residual(&mu, seq.known(), lo, hi)
                )),
                None => Err("the singular leading block has no representing measure".into()),
            }
        }
        Err(CompletionError::NonrealRoots(disc)) => Err(format!(
            "no value of gamma_{} makes the Hankel matrix positive semidefinite (discriminant {disc:e})",
            hi - 1
        )),
        Err(e) => Err(e.to_string()),
    }
}

/// Orientation of a partial sequence: hyperbolic data is mirrored so that the
/// entry fixed by the minimal measure sits just below the top.
fn mirrored(partial: &PartialUnivariateSequence) -> PartialUnivariateSequence {
    let known = partial.known().iter().map(|(t, v)| (-t, *v)).collect();
    PartialUnivariateSequence::new(-partial.k2(), -partial.k1(), known).expect("valid range")
}

fn unmirror(mu: AtomicMeasure1D) -> AtomicMeasure1D {
    let atoms = mu.atoms().iter().map(|x| 1.0 / x).collect();
    AtomicMeasure1D::new(atoms, mu.densities().to_vec()).expect("nonzero atoms")
}

/// Find a measure on the line for the known entries of `partial` inside
/// `lo..=hi`. With `minimal`, the entry `hi - 1` is free and is chosen last.
fn extract(
    partial: &PartialUnivariateSequence,
    (lo, hi): (i64, i64),
    minimal: bool,
    tol: &ToleranceConfig,
    mut diag: Diagnostics,
) -> Extraction {
    let holes: Vec<i64> = partial.unknown().into_iter().filter(|t| (lo..=hi).contains(t)).collect();
    let Ok(window) = partial.restrict(lo, hi) else {
        return Extraction::unknown(diag, "measure range outside the reduced sequence");
    };
    if holes.is_empty() {
        let seq = window.to_complete().expect("no holes");
        let Some(report) = solve_range(&seq, tol) else {
            return Extraction::unknown(diag, "range cannot be solved as a Hamburger problem");
        };
        diag.rank_reduced = Some(report.rank);
        diag.path = Some("direct".into());
        return match report.measure {
            Some(mu) => Extraction::found(diag, mu),
            None => Extraction::no(diag, report.diagnostic.unwrap_or_default()),
        };
    }
    if let Some(mu) = flat_block(partial, lo, hi, tol) {
        diag.path = Some("flat leading block".into());
        return Extraction::found(diag, mu);
    }
    if lo < 0 && hi > 0 && !partial.is_known(0) {
        // Mirroring needs atoms away from 0, which gamma_0 being known guarantees.
    } else if lo < 0 && hi > 0 {
        if let Some(mu) = flat_block(&mirrored(partial), -hi, -lo, tol) {
            diag.path = Some("flat trailing block".into());
            return Extraction::found(diag, unmirror(mu));
        }
    }
    if minimal && holes == [hi - 1] {
        diag.path = Some("single entry".into());
        return match single_entry_path(&window, tol, &mut diag) {
            Ok(Some(mu)) => Extraction::found(diag, mu),
            Ok(None) => Extraction::unknown(diag, "single-entry completion did not yield a measure"),
            Err(why) => Extraction::no(diag, why),
        };
    }
    let outcome = match complete_feasibility(partial, tol) {
        Ok(o) => o,
        Err(e) => return Extraction::unknown(diag, e.to_string()),
    };
    diag.path = Some("psd completion".into());
    let completed = match outcome {
        FeasibilityOutcome::Infeasible { certificate } => {
            return Extraction::no(
                diag,
                certificate.to_string(),
            )
        }
        FeasibilityOutcome::Unknown { gap, iterations } => {
            diag.projection_gap = Some(gap);
            diag.iterations = Some(iterations);
            return Extraction::unknown(diag, "positive semidefinite completion did not converge");
        }
        FeasibilityOutcome::Feasible { completed, gap, iterations } => {
            diag.projection_gap = Some(gap);
            diag.iterations = Some(iterations);
            completed
        }
    };
    let mut filled = window.clone();
    for &t in &holes {
        if !(minimal && t == hi - 1) {
            filled.set(t, completed.at(t)).expect("inside range");
            diag.completion.push((t, completed.at(t)));
        }
    }
    if minimal {
        if let Ok(Some(mu)) = single_entry_path(&filled, tol, &mut diag) {
            return Extraction::found(diag, mu);
        }
        filled.set(hi - 1, completed.at(hi - 1)).expect("inside range");
        diag.completion.push((hi - 1, completed.at(hi - 1)));
    }
    let seq = filled.to_complete().expect("all holes filled");
    if let Some((mu, rank)) = fit_known(&seq, partial.known(), (lo, hi), tol) {
        diag.rank_reduced = Some(rank);
        return Extraction::found(diag, mu);
    }
    Extraction::unknown(diag, "completion found but no measure could be extracted from it")
}

/// Map a univariate outcome to the plane and verify it against the data.
fn finalize(
    ext: Extraction,
    beta: &BivariateMomentSequence,
    curve: &CurveSpec,
    x_shift: f64,
    tol: &ToleranceConfig,
) -> SolveReport {
    let mut diag = ext.diag;
    diag.atom_bound = Some(atom_bound(curve, beta.degree()));
    let Some(nu) = ext.nu else {
        return SolveReport { status: ext.status, measure: None, diagnostics: diag };
    };
    let shifted = if x_shift == 0.0 {
        Ok(nu)
    } else {
        AtomicMeasure1D::new(nu.atoms().iter().map(|x| x - x_shift).collect(), nu.densities().to_vec())
    };
    let lifted = shifted.map_err(|e| e.to_string()).and_then(|nu| lift_measure(&nu, curve).map_err(|e| e.to_string()));
    let mut mu = match lifted {
        Ok(mu) => mu,
        Err(e) => {
            diag.failed_condition = Some(e);
            return SolveReport { status: SolveStatus::Unknown, measure: None, diagnostics: diag };
        }
    };
    let mut residual = moment_residual(&mu, beta);
    // Polish against the input itself; the univariate data lost digits on the way.
    if residual > 1e-2 * tol.residual_tol && residual < 1e-3 {
        if let Some((refined, res)) = refine_on_curve(&mu, beta, curve).filter(|r| r.1 < residual) {
            (mu, residual) = (refined, res);
        }
    }
    diag.residual = Some(residual);
    diag.within_bound = diag.atom_bound.map(|b| mu.len() <= b);
    if residual > tol.residual_tol {
        diag.failed_condition = Some(format!("recovered measure misses the data (relative residual {residual:e})"));
        return SolveReport { status: SolveStatus::Unknown, measure: None, diagnostics: diag };
    }
    SolveReport { status: SolveStatus::MeasureFound, measure: Some(mu), diagnostics: diag }
}

fn check_relations(beta: &BivariateMomentSequence, curve: &CurveSpec, tol: &ToleranceConfig) -> Result<(), ReductionError> {
    let bad = check_curve_relations(beta, curve, tol.residual_tol);
    if bad.is_empty() {
        Ok(())
    } else {
        Err(ReductionError::RelationsViolated(bad))
    }
}

/// Univariate data for `y = x^2`: `gamma_t = beta_{t mod 2, t div 2}`, `t <= 2d`.
/// `m` is the rank and scaled minimal eigenvalue of the moment matrix of the
/// data before any change of variables.
fn parabola_core(beta: &BivariateMomentSequence, m: (usize, f64), tol: &ToleranceConfig) -> Extraction {
    let d = beta.degree();
    let gamma: Vec<f64> = (0..=2 * d).map(|t| beta.at(t % 2, t / 2)).collect();
    let (rank_m, min_ev) = m;
    let mut diag = Diagnostics { rank_moment_matrix: Some(rank_m), ..Diagnostics::default() };
    if min_ev < -tol.psd_tol {
        return Extraction::no(diag, "moment matrix is not positive semidefinite");
    }
    if d % 2 == 0 {
        // The moment matrix without the column y^k is the Hankel matrix of gamma_0..gamma_{2d-2}.
        let a = linalg::hankel(&gamma[..=2 * d - 2]);
        let (scaled, ok) = diagonal_scaling(&a);
        let pd = ok.is_some() && linalg::is_positive_definite(&scaled, tol.rank_tol);
        let rank_a = linalg::numerical_rank(&a, tol.rank_tol);
        diag.rank_reduced = Some(rank_a);
        if !pd && rank_a != rank_m {
            return Extraction::no(
                diag,
                format!("parabola rank equality: rank A(2k-1) = {rank_a} != {rank_m} = rank M_k"),
            );
        }
        diag.path = Some(if pd { "parabola positive definite block" } else { "parabola rank equality" }.into());
    } else {
        diag.path = Some("parabola odd degree".into());
    }
    let seq = UnivariateMomentSequence::from_values(gamma).expect("nonempty");
    let report = match solve_thmp(&seq, tol) {
        Ok(r) => r,
        Err(e) => return Extraction::unknown(diag, e.to_string()),
    };
    if d % 2 == 1 {
        diag.rank_reduced = Some(report.rank);
    }
    diag.completion = report.free_moments.clone();
    match report.measure {
        Some(nu) => Extraction::found(diag, nu),
        None if d % 2 == 1 => Extraction::no(
            diag,
            format!(
                "parabola: reduced sequence is not positively recursively generated ({})",
                report.diagnostic.unwrap_or_default()
            ),
        ),
        None => Extraction::unknown(diag, report.diagnostic.unwrap_or_default()),
    }
}

/// Truncated moment problem on `y = q2 x^2 + q1 x + q0`.
pub fn solve_parabola(
    beta: &BivariateMomentSequence,
    q: &[f64],
    tol: &ToleranceConfig,
) -> Result<SolveReport, CompletionError> {
    tol.validate()?;
    let curve = CurveSpec::graph(q.to_vec());
    if curve.ell() != 2 || !curve.is_supported() {
        return Err(ReductionError::UnsupportedCurve(curve.to_string()).into());
    }
    if beta.degree() < 3 {
        return Err(ReductionError::DegreeTooLow { degree: beta.degree(), needed: 3 }.into());
    }
    check_relations(beta, &curve, tol)?;
    let CurveSpec::Graph { q } = &curve else { unreachable!() };
    let (q0, q1, q2) = (q[0], q[1], q[2]);
    // (x, y) -> (x, (y - q1 x - q0) / q2) carries the curve onto y = x^2.
    let map = AffineMap { a: 0.0, b: 1.0, c: 0.0, d: -q0 / q2, e: -q1 / q2, f: 1.0 / q2 };
    let reduced = apply_alt(beta, &map)?;
    let m = rank_of_moment_matrix(beta, tol);
    let gamma: Vec<f64> = (0..=2 * reduced.degree()).map(|t| reduced.at(t % 2, t / 2)).collect();
    Ok(with_retry(tol, beta, &curve, Some((gamma, 0.0)), |t| finalize(parabola_core(&reduced, m, t), beta, &curve, 0.0, tol)))
}

/// `gamma_0..gamma_{6k-5}` for odd degree `2k - 1` on `y = x^3`.
fn cubic_prefix(beta: &BivariateMomentSequence) -> Vec<f64> {
    let k = beta.degree().div_ceil(2);
    (0..=6 * k - 5).map(|t| beta.at(t % 3, t / 3)).collect()
}

/// Univariate data for odd degree `2k - 1` on `y = x^3`.
fn cubic_odd_core(beta: &BivariateMomentSequence, m: (usize, f64), tol: &ToleranceConfig) -> Extraction {
    let d = beta.degree();
    let k = d.div_ceil(2);
    let top = 6 * k - 3;
    let gamma = |t: usize| beta.at(t % 3, t / 3);
    let known: BTreeMap<i64, f64> =
        (0..=top).filter(|&t| t != 6 * k - 4).map(|t| (t as i64, gamma(t))).collect();
    let (rank_m, min_ev) = m;
    let mut diag = Diagnostics { rank_moment_matrix: Some(rank_m), ..Diagnostics::default() };
    if min_ev < -tol.psd_tol {
        return Extraction::no(diag, "moment matrix is not positive semidefinite");
    }
    let lead: Vec<f64> = (0..=6 * k - 6).map(gamma).collect();
    let a = linalg::hankel(&lead);
    let (scaled, ok) = diagonal_scaling(&a);
    let pd = ok.is_some() && linalg::is_positive_definite(&scaled, tol.rank_tol);
    let hole = 6 * k as i64 - 4;
    let fit = |vals: Vec<f64>| {
        let seq = UnivariateMomentSequence::from_values(vals).expect("nonempty");
        fit_known(&seq, &known, (0, top as i64), tol)
    };
    // Positive definite block: the measure with as many atoms as the block has
    // rows, or failing that one more atom from a larger gamma_{6k-4}.
    let definite = || -> Option<(AtomicMeasure1D, bool, f64)> {
        let first: Vec<f64> = (0..=6 * k - 5).map(gamma).collect();
        let seq = UnivariateMomentSequence::from_values(first.clone()).expect("nonempty");
        let flat = solve_thmp(&seq, tol).ok().and_then(|r| r.measure);
        if let Some((mu, _)) = fit(first) {
            let z = mu.moment(hole);
            return Some((mu, true, z));
        }
        let z_flat = flat?.moment(hole);
        let mag = z_flat.abs().max(gamma(6 * k - 6).abs()).max(f64::MIN_POSITIVE);
        [1e-1, 1.0, 1e-2, 1e-3].into_iter().find_map(|delta| {
            let z = z_flat + delta * mag;
            let vals: Vec<f64> = (0..=top).map(|t| if t as i64 == hole { z } else { gamma(t) }).collect();
            fit(vals).map(|(mu, _)| (mu, false, z))
        })
    };
    if !pd {
        diag.path = Some("cubic odd singular block".into());
        if let Some((mu, rank)) = fit(lead.clone()) {
            diag.rank_reduced = Some(rank);
            diag.minimal_measure = Some(true);
            return Extraction::found(diag, mu);
        }
        let seq = UnivariateMomentSequence::from_values(lead).expect("nonempty");
        let report = solve_thmp(&seq, tol).ok();
        diag.rank_reduced = report.as_ref().map(|r| r.rank);
        // A block that is only numerically singular may still be definite.
        if let Some((mu, minimal, z)) = definite() {
            diag.path = Some("cubic odd positive definite block".into());
            diag.minimal_measure = Some(minimal);
            diag.completion.push((hole, z));
            return Extraction::found(diag, mu);
        }
        return match report.and_then(|r| r.measure.ok_or(r.diagnostic.unwrap_or_default()).err()) {
            None => Extraction::no(diag, "cubic odd: recursion of the singular block fails on the top moments"),
            Some(why) => Extraction::no(
                diag,
                format!("cubic odd: leading block is not positively recursively generated ({why})"),
            ),
        };
    }
    diag.path = Some("cubic odd positive definite block".into());
    diag.rank_reduced = Some(a.nrows());
    match definite() {
        Some((mu, minimal, z)) => {
            diag.minimal_measure = Some(minimal);
            diag.completion.push((hole, z));
            Extraction::found(diag, mu)
        }
        None => Extraction::unknown(diag, "cubic odd: extension with one more atom could not be extracted"),
    }
}

/// Odd degree truncated moment problem on `y = x^3`.
pub fn solve_cubic_odd(beta: &BivariateMomentSequence, tol: &ToleranceConfig) -> Result<SolveReport, CompletionError> {
    tol.validate()?;
    let d = beta.degree();
    if d % 2 == 0 || d < 5 {
        return Err(ReductionError::DegreeTooLow { degree: d, needed: 5 }.into());
    }
    let curve = CurveSpec::monomial_graph(3);
    check_relations(beta, &curve, tol)?;
    let m = rank_of_moment_matrix(beta, tol);
    let prefix = cubic_prefix(beta);
    Ok(with_retry(tol, beta, &curve, Some((prefix, 0.0)), |t| finalize(cubic_odd_core(beta, m, t), beta, &curve, 0.0, tol)))
}

/// Decide the truncated moment problem for `beta` on `curve` and, when it is
/// solvable, return a representing measure.
pub fn solve_curve(
    beta: &BivariateMomentSequence,
    curve: &CurveSpec,
    tol: &ToleranceConfig,
) -> Result<SolveReport, CompletionError> {
    tol.validate()?;
    let curve = match curve {
        CurveSpec::Graph { q } => CurveSpec::graph(q.clone()),
        c => c.clone(),
    };
    if !curve.is_supported() {
        return Err(ReductionError::UnsupportedCurve(curve.to_string()).into());
    }
    let d = beta.degree();
    let needed = curve.ell() + 1;
    if d < needed {
        return Err(ReductionError::DegreeTooLow { degree: d, needed }.into());
    }
    let bad = check_curve_relations(beta, &curve, tol.residual_tol);
    if !bad.is_empty() {
        let diag = Diagnostics {
            failed_condition: Some(format!("curve relations fail at {bad:?}")),
            atom_bound: Some(atom_bound(&curve, d)),
            ..Diagnostics::default()
        };
        return Ok(SolveReport { status: SolveStatus::NoMeasure, measure: None, diagnostics: diag });
    }
    if let CurveSpec::Graph { q } = &curve {
        if q.len() == 3 {
            return solve_parabola(beta, q, tol);
        }
        if q.len() == 4 && d % 2 == 1 && d >= 5 {
            let (beta_n, qn, shift) = normalize_graph_curve(beta, q)?;
            let map = AffineMap { a: 0.0, b: 1.0, c: 0.0, d: -qn[0] / qn[3], e: -qn[1] / qn[3], f: 1.0 / qn[3] };
            let on_cubic = apply_alt(&beta_n, &map)?;
            let m = rank_of_moment_matrix(beta, tol);
            let prefix = Some((cubic_prefix(&on_cubic), shift.a));
            return Ok(with_retry(tol, beta, &curve, prefix, |t| {
                finalize(cubic_odd_core(&on_cubic, m, t), beta, &curve, shift.a, tol)
            }));
        }
    }
    let red = reduce_to_univariate(beta, &curve, tol.residual_tol)?;
    let outer = tol;
    let (rank_m, min_ev) = rank_of_moment_matrix(beta, tol);
    let diag = Diagnostics { rank_moment_matrix: Some(rank_m), ..Diagnostics::default() };
    if min_ev < -tol.psd_tol {
        let ext = Extraction::no(diag, "moment matrix is not positive semidefinite");
        return Ok(finalize(ext, beta, &curve, 0.0, tol));
    }
    let ell = curve.ell();
    let (lo, hi) = red.measure_range;
    let run = |tol: &ToleranceConfig| {
        let diag = diag.clone();
        let ext = match red.family {
            Family::Graph => {
                let minimal = d % 2 == 0 || ell % 2 == 0;
                extract(&red.partial, (lo, hi), minimal, tol, diag)
            }
            Family::Hyperbolic if d % 2 == 0 => {
                let ext = extract(&mirrored(&red.partial), (-hi, -lo), true, tol, diag);
                Extraction { nu: ext.nu.map(unmirror), ..ext }
            }
            Family::Hyperbolic => extract(&red.partial, (lo, hi), false, tol, diag),
        };
        finalize(ext, beta, &curve, red.alt.a, outer)
    };
    let prefix = match red.family {
        Family::Graph => {
            let end = red.partial.unknown().first().copied().unwrap_or(red.partial.k2() + 1);
            Some(((0..end).map(|t| red.partial.get(t).unwrap_or(0.0)).collect(), red.alt.a))
        }
        Family::Hyperbolic => None,
    };
    Ok(with_retry(outer, beta, &curve, prefix, run))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{synth_moments, tests::parabola_no_example};
    use proptest::prelude::*;

    fn partial(k1: i64, vals: &[Option<f64>]) -> PartialUnivariateSequence {
        PartialUnivariateSequence::from_options(k1, vals).unwrap()
    }

    fn measure2(pts: &[(f64, f64, f64)]) -> AtomicMeasure2D {
        AtomicMeasure2D::new(pts.iter().map(|p| (p.0, p.1)).collect(), pts.iter().map(|p| p.2).collect()).unwrap()
    }

    fn tol() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    #[test]
    fn single_entry_three_by_three() {
        // det [[1, z], [z, 1]] = 1 - z^2.
        let p = partial(0, &[Some(1.0), None, Some(1.0)]);
        let s = complete_single_entry(&p, &tol()).unwrap();
        assert_eq!(s.index, 1);
        assert!((s.z_plus - 1.0).abs() < 1e-12 && (s.z_minus + 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_entry_five() {
        // [[1,0,1],[0,1,z],[1,z,2]] has determinant 1 - z^2.
        let p = partial(0, &[Some(1.0), Some(0.0), Some(1.0), None, Some(2.0)]);
        let s = complete_single_entry(&p, &tol()).unwrap();
        assert_eq!(s.index, 3);
        assert!((s.z_plus - 1.0).abs() < 1e-12 && (s.z_minus + 1.0).abs() < 1e-12);
        for z in [s.z_plus, s.z_minus] {
            let a = linalg::hankel(p.fill(&[z]).unwrap().values());
            assert!(a.determinant().abs() < 1e-12);
        }
    }

    #[test]
    fn single_entry_singular_corner() {
        let p = partial(0, &[Some(1.0), Some(2.0), Some(1.0), None, Some(1.0)]);
        assert_eq!(complete_single_entry(&p, &tol()), Err(CompletionError::CornerNotPD));
    }

    #[test]
    fn single_entry_wrong_pattern() {
        let p = partial(0, &[Some(1.0), None, Some(1.0), Some(0.0), Some(2.0)]);
        assert!(matches!(complete_single_entry(&p, &tol()), Err(CompletionError::HolePattern { expected: 3, .. })));
    }

    #[test]
    fn single_entry_nonreal() {
        // gamma_2 - (b C^{-1} b) = 1 - (1 + z^2) < 0 for every z on [[1,1,1],[1,2,z],[1,z,1]].
        let p = partial(0, &[Some(1.0), Some(1.0), Some(2.0), None, Some(1.0)]);
        assert!(matches!(complete_single_entry(&p, &tol()), Err(CompletionError::NonrealRoots(_))));
    }

    #[test]
    fn single_entry_against_measure() {
        // Holes filled by the roots must agree with the two-atom extension at +-.
        let mu = AtomicMeasure1D::new(vec![-1.0, 0.5, 2.0], vec![0.3, 0.5, 0.2]).unwrap();
        let vals: Vec<Option<f64>> = (0..=6).map(|t| (t != 5).then(|| mu.moment(t))).collect();
        let p = partial(0, &vals);
        let s = complete_single_entry(&p, &tol()).unwrap();
        assert!(s.z_minus <= mu.moment(5) + 1e-9 || s.z_plus >= mu.moment(5) - 1e-9);
        for z in [s.z_plus, s.z_minus] {
            let a = linalg::hankel(p.fill(&[z]).unwrap().values());
            let ev = linalg::sym_eigenvalues(&a);
            assert!(ev[0].abs() < 1e-9 * ev[3], "{ev:?}");
        }
    }

    #[test]
    fn feasibility_measure_holes() {
        let mu = AtomicMeasure1D::new(vec![-1.5, -0.2, 0.7, 1.9], vec![0.1, 0.4, 0.3, 0.2]).unwrap();
        let vals: Vec<Option<f64>> = (0..=8).map(|t| (![3, 5].contains(&t)).then(|| mu.moment(t))).collect();
        let out = complete_feasibility(&partial(0, &vals), &tol()).unwrap();
        let FeasibilityOutcome::Feasible { completed, .. } = out else { panic!("{out:?}") };
        assert!(linalg::min_eigenvalue(&linalg::hankel(completed.values())) > -1e-8);
        for t in [0, 1, 2, 4, 6, 7, 8] {
            assert_eq!(completed.at(t), mu.moment(t));
        }
    }

    #[test]
    fn feasibility_negative_diagonal() {
        let p = partial(0, &[Some(1.0), None, Some(-1.0)]);
        let out = complete_feasibility(&p, &tol()).unwrap();
        let FeasibilityOutcome::Infeasible { certificate } = out else { panic!("{out:?}") };
        assert_eq!(certificate.rows, vec![1]);
    }

    #[test]
    fn feasibility_known_minor() {
        // Rows 0 and 2 give [[1, 2], [2, 1]] built from gamma_0, gamma_2, gamma_4.
        let p = partial(0, &[Some(1.0), None, Some(2.0), None, Some(1.0)]);
        let out = complete_feasibility(&p, &tol()).unwrap();
        let FeasibilityOutcome::Infeasible { certificate } = out else { panic!("{out:?}") };
        assert_eq!(certificate.rows, vec![0, 2]);
        assert!(certificate.min_eigenvalue < -0.9);
    }

    #[test]
    fn feasibility_hidden_conflict_is_unknown() {
        // [[1, 1, a], [1, a, 1], [a, 1, c]] needs a >= 1 and a <= sqrt(c); no
        // submatrix of known entries sees the conflict when c < 1.
        let p = partial(0, &[Some(1.0), Some(1.0), None, Some(1.0), Some(0.9)]);
        let out = complete_feasibility(&p, &tol()).unwrap();
        let FeasibilityOutcome::Unknown { gap, .. } = out else { panic!("{out:?}") };
        assert!(gap > 1e-3);
    }

    #[test]
    fn feasibility_boundary_unknown() {
        // c = 1 forces a = 1 exactly, a single boundary point; two Newton steps cannot reach it.
        let p = partial(0, &[Some(1.0), Some(1.0), None, Some(1.0), Some(1.0 + 1e-4)]);
        let tight = ToleranceConfig { max_iter: 2, psd_tol: 1e-12, ..ToleranceConfig::default() };
        let out = complete_feasibility(&p, &tight).unwrap();
        assert!(matches!(out, FeasibilityOutcome::Unknown { iterations: 2, .. }), "{out:?}");
        let out = complete_feasibility(&p, &tol()).unwrap();
        assert!(out.is_feasible(), "{out:?}");
    }

    #[test]
    fn sdpa_two_by_two() {
        let p = partial(0, &[Some(1.0), None, Some(2.0)]);
        let s = export_sdpa(&p).unwrap();
        let lines: Vec<&str> = s.lines().filter(|l| !l.starts_with('*')).collect();
        assert_eq!(&lines[..4], &["1", "1", "2", "0"]);
        let entries = &lines[4..];
        assert_eq!(entries.len(), 3);
        assert!(entries.contains(&"0 1 1 1 -1.0000000000000000e0"));
        assert!(entries.contains(&"0 1 2 2 -2.0000000000000000e0"));
        assert!(entries.contains(&"1 1 1 2 1.0000000000000000e0"));
    }

    #[test]
    fn sdpa_cubic_and_hyperbola() {
        let mu = measure2(&[(1.0, 1.0, 0.5), (-0.5, -0.125, 0.25), (2.0, 8.0, 0.25)]);
        let beta = synth_moments(&mu, 6);
        let red = reduce_to_univariate(&beta, &CurveSpec::monomial_graph(3), 1e-10).unwrap();
        let s = export_sdpa(&red.partial).unwrap();
        let lines: Vec<&str> = s.lines().filter(|l| !l.starts_with('*')).collect();
        assert_eq!((lines[0], lines[1], lines[2]), ("3", "1", "11"));

        let mu = measure2(&[(1.0, 1.0, 0.5), (2.0, 0.25, 0.25), (-0.5, 4.0, 0.25)]);
        let beta = synth_moments(&mu, 6);
        let red = reduce_to_univariate(&beta, &CurveSpec::hyperbolic(2), 1e-10).unwrap();
        let s = export_sdpa(&red.partial).unwrap();
        let lines: Vec<&str> = s.lines().filter(|l| !l.starts_with('*')).collect();
        assert_eq!((lines[0], lines[1], lines[2]), ("5", "1", "12"));
    }

    #[test]
    fn parabola_no_instance() {
        let beta = parabola_no_example();
        let r = solve_parabola(&beta, &[0.0, 0.0, 1.0], &tol()).unwrap();
        assert_eq!(r.status, SolveStatus::NoMeasure);
        assert_eq!(r.diagnostics.rank_moment_matrix, Some(4));
        assert_eq!(r.diagnostics.rank_reduced, Some(3));
        assert!(r.diagnostics.failed_condition.as_deref().unwrap().contains("rank"));
    }

    #[test]
    fn parabola_yes_instance() {
        let s3 = 3f64.sqrt();
        let mu = measure2(&[
            (0.0, 0.0, 1.0 / 3.0),
            (1.0, 1.0, 0.25),
            (-1.0, 1.0, 0.25),
            (s3, 3.0, 1.0 / 12.0),
            (-s3, 3.0, 1.0 / 12.0),
        ]);
        let beta = synth_moments(&mu, 6);
        // The univariate data are 1, 0, 1, 0, 2, 0, 5, 0, 14, 0, 41, 0, 122.
        assert!((beta.at(0, 6) - 122.0).abs() < 1e-9 && (beta.at(0, 5) - 41.0).abs() < 1e-9);
        let r = solve_parabola(&beta, &[0.0, 0.0, 1.0], &tol()).unwrap();
        assert!(r.found(), "{r:?}");
        let m = r.measure.unwrap();
        assert_eq!(m.len(), 5);
        assert!(moment_residual(&m, &beta) < 1e-10);
    }

    #[test]
    fn parabola_single_atom_shifted() {
        // y = 2x^2 - x + 1 through (1, 2).
        let mu = measure2(&[(1.0, 2.0, 1.0)]);
        let beta = synth_moments(&mu, 4);
        let r = solve_parabola(&beta, &[1.0, -1.0, 2.0], &tol()).unwrap();
        assert!(r.found());
        let m = r.measure.unwrap();
        assert_eq!(m.len(), 1);
        assert!((m.atoms()[0].0 - 1.0).abs() < 1e-12 && (m.atoms()[0].1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn parabola_relations_enforced() {
        let beta = parabola_no_example();
        assert!(matches!(
            solve_parabola(&beta, &[0.0, 0.0, 2.0], &tol()),
            Err(CompletionError::Reduction(ReductionError::RelationsViolated(_)))
        ));
    }

    #[test]
    fn cubic_odd_minimal_and_not() {
        // Five atoms on y = x^3 at degree 5: the block A has 7 rows, so the minimal count is 7.
        let xs = [-1.2, -0.4, 0.3, 0.9, 1.6];
        let pts: Vec<(f64, f64, f64)> = xs.iter().map(|&x| (x, x * x * x, 0.2)).collect();
        let beta = synth_moments(&measure2(&pts), 5);
        let r = solve_cubic_odd(&beta, &tol()).unwrap();
        assert!(r.found(), "{r:?}");
        assert_eq!(r.diagnostics.minimal_measure, Some(true));
        assert!(moment_residual(r.measure.as_ref().unwrap(), &beta) < 1e-9);

        let xs = [-1.3, -0.9, -0.5, -0.1, 0.2, 0.6, 0.9, 1.2, 1.5];
        let pts: Vec<(f64, f64, f64)> = xs.iter().map(|&x| (x, x * x * x, 1.0 / 9.0)).collect();
        let beta = synth_moments(&measure2(&pts), 5);
        let r = solve_cubic_odd(&beta, &tol()).unwrap();
        assert!(r.found(), "{r:?}");
        assert!(r.diagnostics.minimal_measure.is_some());
        assert!(moment_residual(r.measure.as_ref().unwrap(), &beta) < 1e-8);
    }

    #[test]
    fn solve_curve_families() {
        let cases: Vec<(CurveSpec, Vec<(f64, f64)>)> = vec![
            (CurveSpec::monomial_graph(3), vec![(-1.0, 0.0), (0.5, 0.0), (1.2, 0.0)]),
            (CurveSpec::monomial_graph(4), vec![(-1.0, 0.0), (0.4, 0.0), (1.1, 0.0)]),
            (CurveSpec::hyperbolic(3), vec![(-1.2, 0.0), (0.6, 0.0), (1.4, 0.0)]),
            (CurveSpec::hyperbolic(2), vec![(-1.5, 0.0), (0.7, 0.0), (1.3, 0.0)]),
            (CurveSpec::graph(vec![0.5, -1.0, 0.0, 2.0]), vec![(-0.8, 0.0), (0.3, 0.0), (1.1, 0.0)]),
        ];
        for (curve, xs) in cases {
            let pts: Vec<(f64, f64, f64)> = xs
                .iter()
                .enumerate()
                .map(|(n, (x, _))| {
                    let (px, py) = curve.point_at(*x).unwrap();
                    (px, py, 0.2 + 0.1 * n as f64)
                })
                .collect();
            for d in [curve.ell() + 1, 6, 7] {
                let beta = synth_moments(&measure2(&pts), d);
                let r = solve_curve(&beta, &curve, &tol()).unwrap();
                assert!(r.found(), "{curve} d={d}: {r:?}");
                assert!(r.diagnostics.residual.unwrap() < 1e-8);
            }
        }
    }

    #[test]
    fn solve_curve_rejects_off_curve() {
        let beta = synth_moments(&measure2(&[(1.0, 2.0, 1.0), (0.0, 0.0, 1.0)]), 6);
        let r = solve_curve(&beta, &CurveSpec::monomial_graph(3), &tol()).unwrap();
        assert_eq!(r.status, SolveStatus::NoMeasure);
        assert!(r.diagnostics.failed_condition.unwrap().contains("relations"));
    }

    #[test]
    fn atom_bounds() {
        assert_eq!(atom_bound(&CurveSpec::monomial_graph(3), 6), 9);
        assert_eq!(atom_bound(&CurveSpec::monomial_graph(3), 7), 10);
        assert_eq!(atom_bound(&CurveSpec::monomial_graph(4), 7), 14);
        assert_eq!(atom_bound(&CurveSpec::hyperbolic(2), 6), 9);
        assert_eq!(atom_bound(&CurveSpec::hyperbolic(3), 7), 16);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        // Dropping known entries can only turn Infeasible into something weaker.
        #[test]
        fn relaxation_monotone(vals in proptest::collection::vec(-2.0f64..2.0, 7), drop in 1usize..6) {
            let tol = ToleranceConfig { max_iter: 300, ..ToleranceConfig::default() };
            let mut full: Vec<Option<f64>> = vals.iter().map(|v| Some(*v)).collect();
            full[0] = Some(1.0 + vals[0].abs());
            let tight = partial(0, &full);
            let mut loose_vals = full.clone();
            loose_vals[drop] = None;
            let loose = partial(0, &loose_vals);
            let a = complete_feasibility(&tight, &tol).unwrap();
            let b = complete_feasibility(&loose, &tol).unwrap();
            if a.is_feasible() {
                let infeasible = matches!(b, FeasibilityOutcome::Infeasible { .. });
                prop_assert!(!infeasible);
            }
        }

        #[test]
        fn completions_are_psd(xs in proptest::collection::vec(-2.0f64..2.0, 4), hole in 1usize..7) {
            let w = [0.4, 0.3, 0.2, 0.1];
            let mu = AtomicMeasure1D::new(xs.clone(), w.to_vec());
            prop_assume!(mu.is_ok());
            let mu = mu.unwrap();
            let vals: Vec<Option<f64>> = (0..=8).map(|t| (t as usize != hole).then(|| mu.moment(t))).collect();
            let out = complete_feasibility(&partial(0, &vals), &ToleranceConfig::default()).unwrap();
            match out {
                FeasibilityOutcome::Feasible { completed, gap, .. } => {
                    prop_assert!(gap <= 1e-9);
                    let (s, _) = diagonal_scaling(&linalg::hankel(completed.values()));
                    prop_assert!(linalg::min_eigenvalue(&s) >= -1e-8);
                }
                FeasibilityOutcome::Infeasible { certificate } => prop_assert!(false, "measure data declared infeasible: {:?}", certificate),
                FeasibilityOutcome::Unknown { .. } => {}
            }
        }

        #[test]
        fn sdpa_round_trip(vals in proptest::collection::vec(proptest::option::of(-3.0f64..3.0), 1..6)) {
            let mut v = vals.clone();
            if v.len() % 2 == 0 { v.pop(); }
            prop_assume!(!v.is_empty());
            let p = partial(0, &v);
            let s = export_sdpa(&p).unwrap();
            let n = v.len().div_ceil(2);
            // Rebuild F0 and the F_m and compare to the Hankel pattern.
            let holes = p.unknown();
            let mut f = vec![DMatrix::<f64>::zeros(n, n); holes.len() + 1];
            for line in s.lines().skip(5) {
                let w: Vec<&str> = line.split_whitespace().collect();
                let (m, i, j): (usize, usize, usize) = (w[0].parse().unwrap(), w[2].parse().unwrap(), w[3].parse().unwrap());
                prop_assert!(i <= j);
                f[m][(i - 1, j - 1)] = w[4].parse().unwrap();
            }
            for i in 0..n {
                for j in i..n {
                    let t = (i + j) as i64;
                    match p.get(t) {
                        Some(g) => prop_assert_eq!(-f[0][(i, j)], g),
                        None => {
                            let m = holes.iter().position(|&h| h == t).unwrap() + 1;
                            prop_assert_eq!(f[m][(i, j)], 1.0);
                        }
                    }
                }
            }
        }
    }
}
