//! Small dense helpers shared by the solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Rank of a symmetric matrix: eigenvalues above `rel_tol` times the largest magnitude.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let ev = sym_eigenvalues(m);
    let top = ev.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if top == 0.0 {
        return 0;
    }
    ev.iter().filter(|v| v.abs() > rel_tol * top).count()
}

/// Positive definiteness judged by the smallest eigenvalue relative to the largest.
pub fn is_positive_definite(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if m.nrows() == 0 {
        return true;
    }
    let ev = sym_eigenvalues(m);
    let top = ev.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    top > 0.0 && ev[0] > rel_tol * top
}

/// Pseudoinverse of a symmetric matrix, dropping eigenvalues below `rel_tol` times the largest.
///
/// Eigendecomposition is used rather than SVD, which loses accuracy on exactly
/// rank-deficient Hankel matrices.
pub fn sym_pseudo_inverse(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let top = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut out = DMatrix::zeros(n, n);
    for (i, l) in eig.eigenvalues.iter().enumerate() {
        if l.abs() > rel_tol * top {
            let v = eig.eigenvectors.column(i);
            out += (v * v.transpose()) / *l;
        }
    }
    out
}

/// Residual norm of `c` after projecting out the span of the columns of `basis`,
/// using Gram-Schmidt with one reorthogonalization pass.
pub fn projection_residual(basis: &DMatrix<f64>, c: &DVector<f64>) -> f64 {
    let mut q: Vec<DVector<f64>> = Vec::new();
    let bscale = basis.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    for j in 0..basis.ncols() {
        let mut v = basis.column(j).into_owned();
        for _ in 0..2 {
            for u in &q {
                let p = u.dot(&v);
                v -= u * p;
            }
        }
        let nv = v.norm();
        if nv > 1e-13 * bscale * (basis.nrows() as f64).sqrt() {
            q.push(v / nv);
        }
    }
    let mut r = c.clone();
    for _ in 0..2 {
        for u in &q {
            let p = u.dot(&r);
            r -= u * p;
        }
    }
    r.norm()
}

/// Hankel matrix `(v[i+j])` of an odd-length slice.
pub fn hankel(values: &[f64]) -> DMatrix<f64> {
    let n = values.len().div_ceil(2);
    DMatrix::from_fn(n, n, |i, j| values[i + j])
}

/// Rank from symmetric pivoted Cholesky: pivots stop once the largest remaining
/// diagonal falls to `rel_tol` times the largest diagonal of `a`.
pub fn pivoted_cholesky_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let n = a.nrows();
    let scale = (0..n).fold(0.0_f64, |m, i| m.max(a[(i, i)].abs()));
    if scale == 0.0 {
        return 0;
    }
    let mut s = a.clone();
    let mut active: Vec<usize> = (0..n).collect();
    let mut rank = 0;
    while !active.is_empty() {
        let (pos, &p) = active
            .iter()
            .enumerate()
            .max_by(|x, y| s[(*x.1, *x.1)].total_cmp(&s[(*y.1, *y.1)]))
            .expect("nonempty");
        let piv = s[(p, p)];
        if piv <= rel_tol * scale {
            break;
        }
        rank += 1;
        active.swap_remove(pos);
        for &i in &active {
            let f = s[(i, p)] / piv;
            for &j in &active {
                s[(i, j)] -= f * s[(p, j)];
            }
        }
    }
    rank
}

/// Relative residual `|a x - b|_2 / |b|_2` after an LU solve, or `None` if singular.
pub fn lu_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let x = a.clone().lu().solve(b)?;
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let r = (a * &x - b).norm();
    let bn = b.norm();
    Some((x, if bn > 0.0 { r / bn } else { r }))
}
