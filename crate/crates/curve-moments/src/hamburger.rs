//! Truncated Hamburger moment problems on the line, in even and odd degree,
//! and the strong variant with negative powers on `R \ {0}`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::hankel::{HankelError, UnivariateMomentSequence};
use crate::linalg;
use crate::moments::ToleranceConfig;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HamburgerError {
    #[error(transparent)]
    Hankel(#[from] HankelError),
    #[error("the Hamburger solver needs a sequence starting at index 0, got {0}")]
    NonZeroStart(i64),
    #[error("the strong solver needs k1 < 0 < k2, got [{0}, {1}]")]
    NotStrongRange(i64, i64),
    #[error("the strong solver needs an even first index, got {0}")]
    OddNegativeStart(i64),
    #[error("{atoms} atoms but {moments} moments")]
    LengthMismatch { atoms: usize, moments: usize },
    #[error("Vandermonde system is ill-conditioned (relative residual {0:e})")]
    IllConditioned(f64),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
}

/// Finitely atomic positive measure on the line, atoms strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AtomicMeasure1D {
    atoms: Vec<f64>,
    densities: Vec<f64>,
}

impl AtomicMeasure1D {
    pub fn new(atoms: Vec<f64>, densities: Vec<f64>) -> Result<Self, HamburgerError> {
        if atoms.len() != densities.len() {
            return Err(HamburgerError::InvalidMeasure(format!(
                "{} atoms but {} densities",
                atoms.len(),
                densities.len()
            )));
        }
        if densities.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(HamburgerError::InvalidMeasure("densities must be positive".into()));
        }
        if atoms.iter().any(|x| !x.is_finite()) {
            return Err(HamburgerError::InvalidMeasure("atoms must be finite".into()));
        }
        let mut pairs: Vec<(f64, f64)> = atoms.into_iter().zip(densities).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(HamburgerError::InvalidMeasure("atoms must be distinct".into()));
        }
        let (atoms, densities) = pairs.into_iter().unzip();
        Ok(Self { atoms, densities })
    }

    pub fn empty() -> Self {
        Self { atoms: Vec::new(), densities: Vec::new() }
    }

    pub fn atoms(&self) -> &[f64] {
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

    /// `sum rho_j x_j^t`; negative `t` is allowed when no atom is 0.
    pub fn moment(&self, t: i64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.densities)
            .map(|(x, r)| r * x.powi(t as i32))
            .sum()
    }

    pub fn moments(&self, k1: i64, k2: i64) -> UnivariateMomentSequence {
        UnivariateMomentSequence::new(k1, (k1..=k2).map(|t| self.moment(t)).collect())
            .expect("nonempty finite range")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum UnivariateStatus {
    MeasureFound,
    NoMeasure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    /// Singular Hankel matrix; the measure is unique.
    Flat,
    /// Positive definite Hankel matrix; a free top moment was chosen.
    FullRank,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnivariateSolveReport {
    pub status: UnivariateStatus,
    pub measure: Option<AtomicMeasure1D>,
    pub rank: usize,
    pub branch: Option<Branch>,
    /// `(index, value)` of moments invented beyond the data.
    pub free_moments: Vec<(i64, f64)>,
    /// Relative moment residual of the returned measure.
    pub residual: Option<f64>,
    pub diagnostic: Option<String>,
}

impl UnivariateSolveReport {
    fn rejected(rank: usize, why: impl Into<String>) -> Self {
        Self {
            status: UnivariateStatus::NoMeasure,
            measure: None,
            rank,
            branch: None,
            free_moments: Vec::new(),
            residual: None,
            diagnostic: Some(why.into()),
        }
    }

    pub fn found(&self) -> bool {
        self.status == UnivariateStatus::MeasureFound
    }
}

/// Solves `W rho = moments` with `W_{i,j} = x_j^{start_power + i}`.
pub fn vandermonde_densities(
    atoms: &[f64],
    moments: &[f64],
    start_power: i64,
    residual_tol: f64,
) -> Result<Vec<f64>, HamburgerError> {
    if atoms.len() != moments.len() {
        return Err(HamburgerError::LengthMismatch { atoms: atoms.len(), moments: moments.len() });
    }
    let n = atoms.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let w = DMatrix::from_fn(n, n, |i, j| atoms[j].powi((start_power + i as i64) as i32));
    let b = DVector::from_column_slice(moments);
    match linalg::lu_solve(&w, &b) {
        Some((rho, rel)) if rel <= residual_tol => Ok(rho.iter().copied().collect()),
        Some((_, rel)) => Err(HamburgerError::IllConditioned(rel)),
        None => Err(HamburgerError::IllConditioned(f64::INFINITY)),
    }
}

/// Scale `s` such that `w_t / s^t` has entries of comparable size.
fn moment_scale(w: &[f64]) -> f64 {
    let base = w[0].abs();
    if base == 0.0 {
        return 1.0;
    }
    let mut s = 0.0_f64;
    for (t, v) in w.iter().enumerate().skip(1) {
        if *v != 0.0 {
            s = s.max((v.abs() / base).powf(1.0 / t as f64));
        }
    }
    if s.is_finite() && s > 0.0 {
        s
    } else {
        1.0
    }
}

/// Affine frame `x = shift + scale * y` in which the solver works.
#[derive(Debug, Clone, Copy)]
struct Frame {
    shift: f64,
    scale: f64,
}

impl Frame {
    fn to_original(self, y: f64) -> f64 {
        self.shift + self.scale * y
    }
}

/// Moments of the measure translated by `-c`, `w_t = sum_i C(t, i) v_i (-c)^{t-i}`,
/// with a rounding estimate per entry. Entries at rounding level are flushed to 0.
fn binomial_shift(vals: &[f64], c: f64) -> (Vec<f64>, Vec<f64>) {
    let mut out = Vec::with_capacity(vals.len());
    let mut noise = Vec::with_capacity(vals.len());
    let mut row: Vec<f64> = Vec::with_capacity(vals.len());
    for t in 0..vals.len() {
        // Pascal row t.
        row.push(1.0);
        for i in (1..t).rev() {
            row[i] += row[i - 1];
        }
        let mut acc = 0.0;
        let mut mag = 0.0;
        for (i, v) in vals.iter().enumerate().take(t + 1) {
            let term = row[i] * v * (-c).powi((t - i) as i32);
            acc += term;
            mag += term.abs();
        }
        let eps = 8.0 * f64::EPSILON * mag;
        out.push(if acc.abs() <= 8.0 * eps { 0.0 } else { acc });
        noise.push(eps);
    }
    (out, noise)
}

/// Data in the solver frame: `u_t` are the moments of the measure pushed
/// through `x -> (x - shift) / scale`, and `noise` bounds their rounding error.
struct Normalized {
    u: Vec<f64>,
    noise: f64,
    frame: Frame,
}

fn normalize(vals: &[f64], center: bool) -> Normalized {
    let shift = if center && vals.len() > 1 && vals[0] > 0.0 { vals[1] / vals[0] } else { 0.0 };
    let (w, noise) = binomial_shift(vals, shift);
    let s = moment_scale(&w);
    let u = w.iter().enumerate().map(|(t, v)| v / s.powi(t as i32)).collect();
    let noise = noise
        .iter()
        .enumerate()
        .map(|(t, e)| e / s.powi(t as i32))
        .fold(0.0, f64::max);
    Normalized { u, noise, frame: Frame { shift, scale: s } }
}

/// Real roots of `x^r - sum phi_i x^i` from the companion matrix, or `None` if any
/// eigenvalue has a non-negligible imaginary part.
fn companion_roots(phi: &[f64]) -> Option<Vec<f64>> {
    let r = phi.len();
    if r == 0 {
        return Some(Vec::new());
    }
    let c = DMatrix::from_fn(r, r, |i, j| {
        if j == r - 1 {
            phi[i]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let ev = c.complex_eigenvalues();
    let radius = ev.iter().fold(0.0_f64, |m, z| m.max(z.norm())).max(1.0);
    let mut roots = Vec::with_capacity(r);
    for z in ev.iter() {
        if z.im.abs() > 1e-7 * radius {
            return None;
        }
        roots.push(polish_root(phi, z.re));
    }
    roots.sort_by(|a, b| a.total_cmp(b));
    Some(roots)
}

/// A few Newton steps on `x^r - sum phi_i x^i`, kept only while they help.
fn polish_root(phi: &[f64], x0: f64) -> f64 {
    let eval = |x: f64| {
        let mut p = 1.0;
        let mut dp = 0.0;
        for c in phi.iter().rev() {
            dp = dp * x + p;
            p = p * x - c;
        }
        (p, dp)
    };
    let mut x = x0;
    for _ in 0..3 {
        let (p, dp) = eval(x);
        if dp == 0.0 {
            break;
        }
        let next = x - p / dp;
        if eval(next).0.abs() < p.abs() {
            x = next;
        } else {
            break;
        }
    }
    x
}

/// Merges atoms closer than `tol`, keeping the first of each cluster.
fn merge_atoms(roots: &[f64], tol: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(roots.len());
    for &x in roots {
        match out.last() {
            Some(&y) if (x - y).abs() <= tol * (1.0 + y.abs()) => {}
            _ => out.push(x),
        }
    }
    out
}

/// How the full-rank branch fixes the invented moment.
#[derive(Debug, Clone)]
enum FreeChoice {
    /// This value, in the solver frame.
    Value(f64),
    /// The value that makes the first admissible point an atom.
    Atom(Vec<f64>),
}

/// Outcome of the even-length algorithm in the solver frame.
enum Core {
    Found { atoms: Vec<f64>, rank: usize, branch: Branch, free: Option<f64> },
    Rejected { rank: usize, reason: String },
}

/// Thresholds for a Hankel matrix with diagonal scale `scale`, never below the
/// rounding level of the data.
struct Thresholds {
    psd: f64,
    rank_rel: f64,
}

fn thresholds(n: usize, scale: f64, noise: f64, tol: &ToleranceConfig) -> Thresholds {
    let floor = 8.0 * n as f64 * noise;
    Thresholds {
        psd: (tol.psd_tol * scale).max(floor),
        rank_rel: tol.rank_tol.max(floor / scale),
    }
}

/// Even-length core on `u_0..u_{2m}`. With `forbid_zero` the representing
/// measure must not charge the origin.
fn even_core(
    u: &[f64],
    noise: f64,
    tol: &ToleranceConfig,
    forbid_zero: bool,
    choice: &FreeChoice,
) -> Core {
    let a = linalg::hankel(u);
    let n = a.nrows();
    let scale = (0..n).fold(0.0_f64, |acc, i| acc.max(a[(i, i)].abs()));
    if scale == 0.0 {
        if u.iter().all(|v| *v == 0.0) {
            return Core::Found { atoms: Vec::new(), rank: 0, branch: Branch::Flat, free: None };
        }
        return Core::Rejected { rank: 0, reason: "zero diagonal with nonzero off-diagonal moments".into() };
    }
    let th = thresholds(n, scale, noise, tol);
    let min_ev = linalg::min_eigenvalue(&a);
    if min_ev < -th.psd {
        return Core::Rejected {
            rank: linalg::pivoted_cholesky_rank(&a, th.rank_rel),
            reason: format!("Hankel matrix is not positive semidefinite (min eigenvalue {min_ev:e})"),
        };
    }
    let r = linalg::pivoted_cholesky_rank(&a, th.rank_rel);
    if r == n {
        return full_rank_core(u, &a, forbid_zero, choice, tol);
    }
    let corner = a.view((0, 0), (r, r)).into_owned();
    if r == 0 || linalg::pivoted_cholesky_rank(&corner, th.rank_rel) < r {
        return Core::Rejected {
            rank: r,
            reason: format!("not positively recursively generated: leading {r}x{r} corner is singular"),
        };
    }
    let rhs = DVector::from_column_slice(&u[r..2 * r]);
    let Some(chol) = corner.clone().cholesky() else {
        return Core::Rejected { rank: r, reason: "leading corner is not positive definite".into() };
    };
    let phi = chol.solve(&rhs);
    let rec_tol = tol.residual_tol.max(1e3 * noise / scale);
    if !crate::hankel::recursion_holds(u, phi.as_slice(), rec_tol) {
        return Core::Rejected {
            rank: r,
            reason: "not positively recursively generated: recursion fails on the top moments".into(),
        };
    }
    if forbid_zero {
        // After multiplying by x^2 the measure keeps all r atoms only if none sits at 0.
        let inner = a.view((1, 1), (r, r)).into_owned();
        if linalg::pivoted_cholesky_rank(&inner, th.rank_rel) < r {
            return Core::Rejected {
                rank: r,
                reason: "inner column condition fails: the unique measure charges 0".into(),
            };
        }
    }
    match companion_roots(phi.as_slice()) {
        Some(roots) => Core::Found { atoms: roots, rank: r, branch: Branch::Flat, free: None },
        None => Core::Rejected { rank: r, reason: "generating polynomial has non-real roots".into() },
    }
}

/// Positive definite case: append a free moment `z` and its flat continuation, so the
/// generating polynomial is `x^n - sum phi_i x^i` with `phi = A^{-1}(u_{m+1}, .., u_{2m}, z)`.
fn full_rank_core(
    u: &[f64],
    a: &DMatrix<f64>,
    forbid_zero: bool,
    choice: &FreeChoice,
    tol: &ToleranceConfig,
) -> Core {
    let n = a.nrows();
    let m = n - 1;
    let Some(chol) = a.clone().cholesky() else {
        return Core::Rejected { rank: n, reason: "Cholesky factorization failed".into() };
    };
    let mut b = DVector::zeros(n);
    for i in 0..m {
        b[i] = u[m + 1 + i];
    }
    let phi0 = chol.solve(&b);
    let mut e = DVector::zeros(n);
    e[m] = 1.0;
    let w = chol.solve(&e);

    let candidates: Vec<f64> = match choice {
        FreeChoice::Value(z) => vec![*z],
        FreeChoice::Atom(points) => points
            .iter()
            .filter_map(|&xi| {
                // P(xi) = 0 is linear in z; it fails only when xi is a root of the
                // degree m orthogonal polynomial.
                let pows: Vec<f64> = (0..=n).map(|i| xi.powi(i as i32)).collect();
                let den: f64 = (0..n).map(|i| w[i] * pows[i]).sum();
                let den_mag: f64 = (0..n).map(|i| (w[i] * pows[i]).abs()).sum();
                if den.abs() <= 1e-8 * den_mag {
                    return None;
                }
                let num = pows[n] - (0..n).map(|i| phi0[i] * pows[i]).sum::<f64>();
                Some(num / den)
            })
            .collect(),
    };
    for z in candidates {
        let phi = &phi0 + &w * z;
        let Some(roots) = companion_roots(phi.as_slice()) else {
            continue;
        };
        if forbid_zero && roots.iter().any(|x| x.abs() <= tol.atom_merge_tol) {
            continue;
        }
        return Core::Found { atoms: roots, rank: n, branch: Branch::FullRank, free: Some(z) };
    }
    Core::Rejected { rank: n, reason: "no admissible free moment produced real atoms".into() }
}

/// Densities fitting every moment `u` (powers from `start`) in the least-squares
/// sense. With `r` atoms and exact data this agrees with the square Vandermonde
/// solve on the first `r` moments, but it is far better conditioned.
fn least_squares_densities(atoms: &[f64], u: &[f64], start: i64) -> Option<Vec<f64>> {
    let r = atoms.len();
    if r == 0 {
        return Some(Vec::new());
    }
    let rows = u.len();
    let mut w = DMatrix::from_fn(rows, r, |i, j| atoms[j].powi((start + i as i64) as i32));
    let mut b = DVector::from_column_slice(u);
    for i in 0..rows {
        let m = w.row(i).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if m > 0.0 {
            w.row_mut(i).scale_mut(1.0 / m);
            b[i] /= m;
        }
    }
    let qr = w.qr();
    let rhs = qr.q().transpose() * b;
    let rho = qr.r().solve_upper_triangular(&rhs)?;
    rho.iter().all(|v| v.is_finite()).then(|| rho.iter().copied().collect())
}

/// Largest entrywise error relative to `max(|gamma_t|, sum rho |x|^t)`.
fn relative_residual(mu: &AtomicMeasure1D, orig: &[f64], start: i64) -> f64 {
    residual_on(mu, &indexed(orig, start))
}

fn indexed(orig: &[f64], start: i64) -> Vec<(i64, f64)> {
    orig.iter().enumerate().map(|(p, v)| (start + p as i64, *v)).collect()
}

fn residual_on(mu: &AtomicMeasure1D, data: &[(i64, f64)]) -> f64 {
    data.iter()
        .map(|&(t, v)| {
            let (mut m, mut mag) = (0.0, 0.0);
            for (x, r) in mu.atoms().iter().zip(mu.densities()) {
                let term = r * x.powi(t as i32);
                m += term;
                mag += term.abs();
            }
            let w = v.abs().max(mag);
            if w > 0.0 {
                (m - v).abs() / w
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

fn polish(mu: AtomicMeasure1D, orig: &[f64], start: i64) -> (AtomicMeasure1D, f64) {
    refine_measure(mu, &indexed(orig, start))
}

/// Damped Gauss-Newton refinement of atoms and densities against the moments
/// `(t, gamma_t)`, weighted entrywise. Steps are kept only when the worst
/// relative error drops, so this never makes the fit worse. Returns the
/// refined measure and its residual.
pub fn refine_measure(mu: AtomicMeasure1D, data: &[(i64, f64)]) -> (AtomicMeasure1D, f64) {
    let mut best = residual_on(&mu, data);
    let mut mu = mu;
    let r = mu.len();
    if r == 0 || data.is_empty() {
        return (mu, best);
    }
    let negative = data.iter().any(|(t, _)| *t < 0);
    let weights: Vec<f64> = data
        .iter()
        .map(|&(t, v)| {
            let mag: f64 = mu.atoms().iter().zip(mu.densities()).map(|(x, d)| (d * x.powi(t as i32)).abs()).sum();
            v.abs().max(mag).max(f64::MIN_POSITIVE)
        })
        .collect();
    let mut lambda = 1e-6;
    for _ in 0..20 {
        if best <= 4.0 * f64::EPSILON {
            break;
        }
        let (xs, ds) = (mu.atoms().to_vec(), mu.densities().to_vec());
        let rows = data.len();
        let mut jac = DMatrix::zeros(rows, 2 * r);
        let mut res = DVector::zeros(rows);
        for (p, &(t, v)) in data.iter().enumerate() {
            let mut m = 0.0;
            for j in 0..r {
                let xt = xs[j].powi(t as i32);
                m += ds[j] * xt;
                jac[(p, j)] = t as f64 * ds[j] * xs[j].powi(t as i32 - 1) / weights[p];
                jac[(p, r + j)] = xt / weights[p];
            }
            res[p] = (m - v) / weights[p];
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &res;
        let mut improved = false;
        for _ in 0..6 {
            let mut a = jtj.clone();
            for i in 0..2 * r {
                a[(i, i)] += lambda * jtj[(i, i)].max(f64::MIN_POSITIVE);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&g)) else {
                lambda *= 10.0;
                continue;
            };
            let nx: Vec<f64> = (0..r).map(|j| xs[j] - step[j]).collect();
            let nd: Vec<f64> = (0..r).map(|j| ds[j] - step[r + j]).collect();
            let crosses_zero = negative && nx.iter().zip(&xs).any(|(a, b)| a * b <= 0.0);
            if !crosses_zero {
                if let Ok(cand) = AtomicMeasure1D::new(nx, nd) {
                    let res_c = residual_on(&cand, data);
                    if cand.len() == r && res_c < best {
                        mu = cand;
                        best = res_c;
                        lambda = (lambda * 0.1).max(1e-12);
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
    (mu, best)
}

/// Turns a core outcome into a report: densities from the first moments of `u`
/// (powers from `start`), then verification against the original data `orig`.
#[allow(clippy::too_many_arguments)]
fn finish(
    core: Core,
    u: &[f64],
    start: i64,
    frame: Frame,
    orig: &[f64],
    orig_start: i64,
    tol: &ToleranceConfig,
    free_index: i64,
) -> UnivariateSolveReport {
    let (roots, rank, branch, free) = match core {
        Core::Rejected { rank, reason } => return UnivariateSolveReport::rejected(rank, reason),
        Core::Found { atoms, rank, branch, free } => (atoms, rank, branch, free),
    };
    let atoms = merge_atoms(&roots, tol.atom_merge_tol);
    if start < 0 && atoms.iter().any(|x| x.abs() <= tol.atom_merge_tol) {
        return UnivariateSolveReport::rejected(rank, "atom at the origin");
    }
    let dens = match least_squares_densities(&atoms, u, start) {
        Some(d) => d,
        None => return UnivariateSolveReport::rejected(rank, "density solve failed: atoms coincide"),
    };
    if let Some(p) = dens.iter().position(|r| !(*r > 0.0)) {
        return UnivariateSolveReport::rejected(
            rank,
            format!(
                "numerical inconsistency: density {:e} at atom {:e}",
                dens[p],
                frame.to_original(atoms[p])
            ),
        );
    }
    let mapped: Vec<f64> = atoms.iter().map(|y| frame.to_original(*y)).collect();
    let measure = match AtomicMeasure1D::new(mapped, dens) {
        Ok(mu) => mu,
        Err(e) => return UnivariateSolveReport::rejected(rank, e.to_string()),
    };
    let (measure, residual) = polish(measure, orig, orig_start);
    if residual > tol.residual_tol {
        return UnivariateSolveReport::rejected(
            rank,
            format!("recovered measure misses the data (relative residual {residual:e})"),
        );
    }
    UnivariateSolveReport {
        status: UnivariateStatus::MeasureFound,
        free_moments: free
            .map(|_| vec![(free_index, measure.moment(free_index))])
            .unwrap_or_default(),
        measure: Some(measure),
        rank,
        branch: Some(branch),
        residual: Some(residual),
        diagnostic: None,
    }
}

/// Hamburger problem for `gamma_0..gamma_{k2}`.
///
/// In the full-rank even case the invented moment is chosen so that the mean of
/// the data becomes an atom, which keeps every atom inside the data's spread.
pub fn solve_thmp(
    gamma: &UnivariateMomentSequence,
    tol: &ToleranceConfig,
) -> Result<UnivariateSolveReport, HamburgerError> {
    thmp(gamma, tol, None)
}

/// As [`solve_thmp`], with `free_top` (original units) as the invented moment
/// `gamma_{k2+1}` in the full-rank even case.
pub fn solve_thmp_with_free(
    gamma: &UnivariateMomentSequence,
    tol: &ToleranceConfig,
    free_top: f64,
) -> Result<UnivariateSolveReport, HamburgerError> {
    thmp(gamma, tol, Some(free_top))
}

fn thmp(
    gamma: &UnivariateMomentSequence,
    tol: &ToleranceConfig,
    free_top: Option<f64>,
) -> Result<UnivariateSolveReport, HamburgerError> {
    if gamma.k1() != 0 {
        return Err(HamburgerError::NonZeroStart(gamma.k1()));
    }
    let vals = gamma.values();
    // The scaled frame is tried first. Centering at the mean helps clustered data
    // but amplifies rounding in high moments, so it only serves as a fallback.
    let first = thmp_in_frame(&normalize(vals, false), vals, tol, free_top);
    if first.found() || vals.len() < 3 || vals[0] <= 0.0 {
        return Ok(first);
    }
    let second = thmp_in_frame(&normalize(vals, true), vals, tol, free_top);
    Ok(if second.found() { second } else { first })
}

fn thmp_in_frame(
    norm: &Normalized,
    vals: &[f64],
    tol: &ToleranceConfig,
    free_top: Option<f64>,
) -> UnivariateSolveReport {
    let len = vals.len();
    if len % 2 == 0 {
        return solve_odd(norm, vals, tol, 0);
    }
    let top = len as i64;
    let u = &norm.u;
    let choice = match free_top {
        Some(z) => {
            let mut ext = vals.to_vec();
            ext.push(z);
            let (w, _) = binomial_shift(&ext, norm.frame.shift);
            FreeChoice::Value(w[len] / norm.frame.scale.powi(top as i32))
        }
        None => {
            // Points around the mean, in units of the standard deviation.
            let (mean, var) = if len >= 3 && u[0] > 0.0 {
                let mean = u[1] / u[0];
                (mean, (u[2] / u[0] - mean * mean).max(0.0))
            } else {
                (0.0, 1.0)
            };
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            let offsets = [0.0, 0.5, -0.5, 1.0, -1.0, 0.25, -0.25, 2.0, -2.0];
            FreeChoice::Atom(offsets.iter().map(|o| mean + o * sd).collect())
        }
    };
    let core = even_core(u, norm.noise, tol, false, &choice);
    finish(core, u, 0, norm.frame, vals, 0, tol, top)
}

/// Odd number of moments `u_0..u_{2k+1}` with powers starting at `start`.
///
/// The top moment is extended by the value that keeps the rank, when the last
/// column lies in the range of the Hankel matrix. For `start < 0` a measure
/// with an atom at 0 is not allowed; if the flat extension produces one, the
/// extension is pushed inside the cone instead and one more atom is invented.
fn solve_odd(norm: &Normalized, vals: &[f64], tol: &ToleranceConfig, start: i64) -> UnivariateSolveReport {
    let u = &norm.u;
    let forbid_zero = start < 0;
    let s = norm.frame.scale;
    let shifted = |w: &[f64]| -> Vec<f64> { w.iter().map(|v| v / s.powi(start as i32)).collect() };
    let k = (u.len() - 2) / 2;
    let a = linalg::hankel(&u[..=2 * k]);
    let n = k + 1;
    let scale = (0..n).fold(0.0_f64, |acc, i| acc.max(a[(i, i)].abs()));
    let b = DVector::from_column_slice(&u[k + 1..=2 * k + 1]);
    if scale == 0.0 {
        if u.iter().all(|v| *v == 0.0) {
            let core = Core::Found { atoms: Vec::new(), rank: 0, branch: Branch::Flat, free: None };
            return finish(core, &shifted(u), start, norm.frame, vals, start, tol, 0);
        }
        return UnivariateSolveReport::rejected(0, "zero diagonal with nonzero moments");
    }
    let th = thresholds(n, scale, norm.noise, tol);
    let min_ev = linalg::min_eigenvalue(&a);
    let rank = linalg::pivoted_cholesky_rank(&a, th.rank_rel);
    if min_ev < -th.psd {
        return UnivariateSolveReport::rejected(
            rank,
            format!("Hankel matrix is not positive semidefinite (min eigenvalue {min_ev:e})"),
        );
    }
    let x = linalg::sym_pseudo_inverse(&a, th.rank_rel) * &b;
    let res = (&a * &x - &b).norm() / b.norm().max(scale);
    if res > tol.residual_tol.max(8.0 * n as f64 * norm.noise / scale) {
        return UnivariateSolveReport::rejected(
            rank,
            format!("last column is not in the range of the Hankel matrix (relative residual {res:e})"),
        );
    }
    let top = b.dot(&x);
    let mut ext = u.to_vec();
    ext.push(top);
    let core = even_core(&ext, norm.noise, tol, forbid_zero, &FreeChoice::Value(0.0));
    let mut report = finish(core, &shifted(&ext), start, norm.frame, vals, start, tol, 0);
    report.free_moments.clear();
    if report.found() {
        if report.rank == n {
            report.branch = Some(Branch::FullRank);
        }
        return report;
    }
    if !forbid_zero || rank < n {
        return report;
    }
    // Any larger value of the extension keeps the matrix positive definite.
    ext[2 * k + 2] = top + 0.1 * scale;
    let points = vec![1.0, -1.0, 0.5, -0.5, 2.0, -2.0, 0.25, -0.25];
    let core = even_core(&ext, norm.noise, tol, true, &FreeChoice::Atom(points));
    let top_index = start + ext.len() as i64;
    let mut second = finish(core, &shifted(&ext), start, norm.frame, vals, start, tol, top_index);
    if !second.found() {
        return report;
    }
    if let Some(mu) = &second.measure {
        second.free_moments.insert(0, (top_index - 1, mu.moment(top_index - 1)));
    }
    second
}

/// Strong Hamburger problem for `gamma_{k1}..gamma_{k2}` with `k1 < 0 < k2`,
/// solved on `R \ {0}` through the shifted sequence `gamma_{k1+i}`.
pub fn solve_sthmp(
    gamma: &UnivariateMomentSequence,
    tol: &ToleranceConfig,
) -> Result<UnivariateSolveReport, HamburgerError> {
    let (k1, k2) = (gamma.k1(), gamma.k2());
    if !(k1 < 0 && k2 > 0) {
        return Err(HamburgerError::NotStrongRange(k1, k2));
    }
    if k1 % 2 != 0 {
        return Err(HamburgerError::OddNegativeStart(k1));
    }
    let vals = gamma.values();
    if gamma.len() % 2 == 0 {
        return Ok(solve_odd(&normalize(vals, false), vals, tol, k1));
    }
    // The shifted data are moments of x^{k1} mu, a positive measure since k1 is even.
    // Only scaling is allowed here: translation would move the excluded point.
    let norm = normalize(vals, false);
    let s = norm.frame.scale;
    let points = vec![1.0, -1.0, 0.5, -0.5, 2.0, -2.0, 0.25, -0.25];
    let core = even_core(&norm.u, norm.noise, tol, true, &FreeChoice::Atom(points));
    let shifted: Vec<f64> = norm.u.iter().map(|v| v / s.powi(k1 as i32)).collect();
    Ok(finish(core, &shifted, k1, norm.frame, vals, k1, tol, k2 + 1))
}

/// Gauss rule with `nodes` atoms for the data `gamma_{k1 + t}`, read as
/// moments of the positive measure `x^{k1} mu` (so `k1` must be even).
///
/// The Jacobi matrix comes from the Cholesky factor of the scaled Hankel block
/// of order `nodes`, which uses `gamma_{k1}..gamma_{k1 + 2 nodes - 1}`. With
/// `last_alpha` the final diagonal entry is set to that value instead, and the
/// rule only needs data up to `gamma_{k1 + 2 nodes - 2}`. The result is polished
/// against the whole sequence.
pub fn gauss_rule(
    gamma: &UnivariateMomentSequence,
    nodes: usize,
    last_alpha: Option<f64>,
) -> Option<AtomicMeasure1D> {
    let k1 = gamma.k1();
    let vals = gamma.values();
    let need = if last_alpha.is_some() { 2 * nodes - 1 } else { 2 * nodes };
    if nodes == 0 || k1 % 2 != 0 || vals.len() < need {
        return None;
    }
    let s = moment_scale(&vals[..need.max(2).min(vals.len())]);
    let u: Vec<f64> = vals[..need].iter().enumerate().map(|(t, v)| v / s.powi(t as i32)).collect();
    if !(u[0] > 0.0) {
        return None;
    }
    // Upper factor R of the Hankel block, plus the column that gives the last alpha.
    let cols = if last_alpha.is_some() { nodes } else { nodes + 1 };
    let h = |i: usize, j: usize| u[i + j];
    let mut r = DMatrix::<f64>::zeros(nodes, cols);
    for j in 0..cols {
        for i in 0..nodes.min(j + 1) {
            let acc: f64 = (0..i).map(|p| r[(p, i)] * r[(p, j)]).sum();
            if i == j {
                let piv = h(i, i) - acc;
                if !(piv > 0.0) {
                    return None;
                }
                r[(i, i)] = piv.sqrt();
            } else {
                r[(i, j)] = (h(i, j) - acc) / r[(i, i)];
            }
        }
    }
    let mut jac = DMatrix::<f64>::zeros(nodes, nodes);
    for j in 0..nodes {
        let prev = if j == 0 { 0.0 } else { r[(j - 1, j)] / r[(j - 1, j - 1)] };
        jac[(j, j)] = match last_alpha {
            Some(a) if j == nodes - 1 => a / s,
            _ => r[(j, j + 1)] / r[(j, j)] - prev,
        };
        if j + 1 < nodes {
            let b = r[(j + 1, j + 1)] / r[(j, j)];
            jac[(j, j + 1)] = b;
            jac[(j + 1, j)] = b;
        }
    }
    let eig = nalgebra::SymmetricEigen::new(jac);
    let mut atoms = Vec::with_capacity(nodes);
    let mut dens = Vec::with_capacity(nodes);
    for i in 0..nodes {
        let x = eig.eigenvalues[i] * s;
        let w = u[0] * eig.eigenvectors[(0, i)].powi(2);
        // Back from x^{k1} mu to mu.
        let rho = w / x.powi(k1 as i32);
        if !(rho.is_finite() && rho > 0.0) || (k1 != 0 && x == 0.0) {
            return None;
        }
        atoms.push(x);
        dens.push(rho);
    }
    let mu = AtomicMeasure1D::new(atoms, dens).ok()?;
    // Polishing only pays off when the rule is already close.
    let res = relative_residual(&mu, vals, k1);
    if res > 1e-13 && res < 1e-3 {
        return Some(polish(mu, vals, k1).0);
    }
    Some(mu)
}
