//! Small dense linear-algebra helpers shared across the crate.
//!
//! Everything here targets matrices that are tiny compared to the ambient
//! problem dimension (subproblem blocks, Gram matrices, simplex weights), so
//! plain dense O(n^3) routines are used throughout.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Solve `A x = b` by LU factorization with partial pivoting.
///
/// Returns `None` when a pivot underflows (singular to working precision).
pub fn lu_solve(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = b.len();
    assert_eq!(a.nrows(), n);
    assert_eq!(a.ncols(), n);
    let mut lu = a.clone();
    let mut x = b.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let mut piv = k;
        let mut best = lu[(perm[k], k)].abs();
        for (r, &pr) in perm.iter().enumerate().skip(k + 1) {
            let v = lu[(pr, k)].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if !best.is_finite() || best < f64::MIN_POSITIVE * 16.0 {
            return None;
        }
        perm.swap(k, piv);
        let pk = perm[k];
        let diag = lu[(pk, k)];
        for &pr in perm.iter().skip(k + 1) {
            let factor = lu[(pr, k)] / diag;
            lu[(pr, k)] = factor;
            for j in k + 1..n {
                let upd = factor * lu[(pk, j)];
                lu[(pr, j)] -= upd;
            }
        }
    }
    // forward substitution on the permuted right-hand side
    let mut y = Array1::<f64>::zeros(n);
    for k in 0..n {
        let mut s = x[perm[k]];
        for j in 0..k {
            s -= lu[(perm[k], j)] * y[j];
        }
        y[k] = s;
    }
    // back substitution
    for k in (0..n).rev() {
        let mut s = y[k];
        for j in k + 1..n {
            s -= lu[(perm[k], j)] * x[j];
        }
        x[k] = s / lu[(perm[k], k)];
    }
    Some(x)
}

/// LU factorization with partial pivoting, reusable across right-hand sides.
pub struct LuFactors {
    lu: Array2<f64>,
    perm: Vec<usize>,
}

impl LuFactors {
    pub fn factor(a: &Array2<f64>) -> Option<Self> {
        let n = a.nrows();
        assert_eq!(a.ncols(), n);
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut piv = k;
            let mut best = lu[(perm[k], k)].abs();
            for (r, &pr) in perm.iter().enumerate().skip(k + 1) {
                let v = lu[(pr, k)].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if !best.is_finite() || best < f64::MIN_POSITIVE * 16.0 {
                return None;
            }
            perm.swap(k, piv);
            let pk = perm[k];
            let diag = lu[(pk, k)];
            for &pr in perm.iter().skip(k + 1) {
                let factor = lu[(pr, k)] / diag;
                lu[(pr, k)] = factor;
                for j in k + 1..n {
                    let upd = factor * lu[(pk, j)];
                    lu[(pr, j)] -= upd;
                }
            }
        }
        Some(Self { lu, perm })
    }

    pub fn solve(&self, b: &Array1<f64>) -> Array1<f64> {
        let n = b.len();
        let mut y = Array1::<f64>::zeros(n);
        for k in 0..n {
            let mut s = b[self.perm[k]];
            for j in 0..k {
                s -= self.lu[(self.perm[k], j)] * y[j];
            }
            y[k] = s;
        }
        let mut x = Array1::<f64>::zeros(n);
        for k in (0..n).rev() {
            let mut s = y[k];
            for j in k + 1..n {
                s -= self.lu[(self.perm[k], j)] * x[j];
            }
            x[k] = s / self.lu[(self.perm[k], k)];
        }
        x
    }
}

/// Solve `A x = b` for symmetric positive definite `A` via Cholesky.
///
/// Returns `None` if a pivot is not strictly positive.
pub fn cholesky_solve(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let chol = cholesky_factor(a)?;
    let n = b.len();
    let mut y = b.clone();
    for i in 0..n {
        let mut s = y[i];
        for j in 0..i {
            s -= chol[(i, j)] * y[j];
        }
        y[i] = s / chol[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for j in i + 1..n {
            s -= chol[(j, i)] * y[j];
        }
        y[i] = s / chol[(i, i)];
    }
    Some(y)
}

/// Lower-triangular Cholesky factor, or `None` if `a` is not numerically PD.
pub fn cholesky_factor(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[(i, j)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Some(l)
}

/// True when `a` is numerically positive definite relative to `floor`.
///
/// The probe runs Cholesky and requires every pivot square to stay above
/// `floor`; it is the cheap rank gate used before the full eigensolver.
pub fn is_positive_definite(a: &Array2<f64>, floor: f64) -> bool {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if !(s > floor) || !s.is_finite() {
                    return false;
                }
                l[(i, j)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    true
}

/// Rank-revealing factorization of a symmetric PSD matrix by diagonally
/// pivoted Cholesky: stops when the largest remaining diagonal falls below
/// `rel_tol` times the largest initial diagonal.
///
/// Returns the numerical rank and an orthonormal basis of the range (as
/// columns), from which null-space projections follow by complementation.
/// Much cheaper than a full eigendecomposition when the rank is low.
pub fn psd_range_basis(a: &Array2<f64>, rel_tol: f64) -> (usize, Vec<Array1<f64>>) {
    let p = a.nrows();
    assert_eq!(a.ncols(), p);
    let mut m = a.clone();
    let mut perm: Vec<usize> = (0..p).collect();
    let d0 = m.diag().iter().cloned().fold(0.0f64, f64::max);
    if d0 <= 0.0 {
        return (0, Vec::new());
    }
    let tol = rel_tol * d0;
    let mut rank = 0usize;
    for k in 0..p {
        let mut piv = k;
        let mut best = m[(k, k)];
        for j in k + 1..p {
            if m[(j, j)] > best {
                best = m[(j, j)];
                piv = j;
            }
        }
        if !(best > tol) {
            break;
        }
        if piv != k {
            swap_sym(&mut m, k, piv);
            perm.swap(k, piv);
        }
        let root = m[(k, k)].sqrt();
        m[(k, k)] = root;
        for i in k + 1..p {
            m[(i, k)] /= root;
        }
        for j in k + 1..p {
            for i in j..p {
                let upd = m[(i, k)] * m[(j, k)];
                m[(i, j)] -= upd;
            }
        }
        rank += 1;
    }
    // columns of the (unpermuted) factor span the range
    let mut cols: Vec<Array1<f64>> = Vec::with_capacity(rank);
    for k in 0..rank {
        let mut col = Array1::<f64>::zeros(p);
        for i in k..p {
            col[perm[i]] = m[(i, k)];
        }
        cols.push(col);
    }
    let basis = orthonormal_basis(&cols, 1e-12);
    (rank, basis)
}

fn swap_sym(m: &mut Array2<f64>, i: usize, j: usize) {
    let p = m.nrows();
    for k in 0..p {
        let a = m[(i, k)];
        let b = m[(j, k)];
        m[(i, k)] = b;
        m[(j, k)] = a;
    }
    for k in 0..p {
        let a = m[(k, i)];
        let b = m[(k, j)];
        m[(k, i)] = b;
        m[(k, j)] = a;
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors as columns,
/// unsorted. Intended for small matrices; panics if `a` is not square.
pub fn jacobi_eigen(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    if n <= 1 {
        return (m.diag().to_owned(), v);
    }
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        let scale: f64 = m.diag().iter().map(|d| d * d).sum::<f64>() + off;
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    (m.diag().to_owned(), v)
}

/// Outcome of the spectral-norm power iteration.
#[derive(Debug, Clone, Copy)]
pub struct PowerIterationResult {
    /// Best estimate of the largest eigenvalue of `AᵀA`.
    pub lambda_max: f64,
    /// Whether the relative tolerance was met before the iteration cap.
    pub converged: bool,
    pub iterations: usize,
}

/// Largest eigenvalue of `AᵀA` by power iteration on `v ↦ Aᵀ(A v)`.
///
/// Deterministic: the start vector is a fixed full-support pattern.
pub fn gram_lambda_max(a: ArrayView2<f64>, rel_tol: f64, max_iters: usize) -> PowerIterationResult {
    let d = a.ncols();
    if d == 0 || a.nrows() == 0 {
        return PowerIterationResult { lambda_max: 0.0, converged: true, iterations: 0 };
    }
    let mut v = Array1::from_shape_fn(d, |i| 1.0 + ((i as f64) * 0.754_877_666).sin());
    let norm = norm2(v.view());
    v.mapv_inplace(|x| x / norm);
    let mut lambda = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..max_iters {
        iterations = it + 1;
        let w = a.t().dot(&a.dot(&v));
        let new_lambda = v.dot(&w);
        let wn = norm2(w.view());
        if wn <= f64::MIN_POSITIVE {
            // A v vanished; the matrix is (numerically) zero on this vector
            return PowerIterationResult { lambda_max: 0.0, converged: true, iterations };
        }
        v = w / wn;
        if (new_lambda - lambda).abs() <= rel_tol * new_lambda.abs().max(f64::MIN_POSITIVE) {
            lambda = new_lambda;
            converged = true;
            break;
        }
        lambda = new_lambda;
    }
    PowerIterationResult { lambda_max: lambda.max(0.0), converged, iterations }
}

/// Euclidean norm.
pub fn norm2(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// Euclidean projection onto the probability simplex, via the sort-based
/// water-filling rule.
pub fn project_simplex(v: ArrayView1<f64>) -> Array1<f64> {
    let n = v.len();
    assert!(n > 0, "cannot project an empty vector onto the simplex");
    let mut u: Vec<f64> = v.iter().copied().collect();
    u.sort_by(|a, b| b.partial_cmp(a).expect("non-finite entry in simplex projection"));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    let mut rho = 0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            rho = j + 1;
            theta = t;
        }
    }
    debug_assert!(rho > 0);
    v.mapv(|x| (x - theta).max(0.0))
}

/// Orthonormalize `cols` by modified Gram-Schmidt with one re-orthogonalization
/// pass, dropping directions whose residual falls below `tol` times the
/// original norm.
pub fn orthonormal_basis(cols: &[Array1<f64>], tol: f64) -> Vec<Array1<f64>> {
    let mut basis: Vec<Array1<f64>> = Vec::new();
    for c in cols {
        if let Some(q) = orthogonal_residual(c, &basis, tol) {
            basis.push(q);
        }
    }
    basis
}

/// Component of `v` orthogonal to `basis`, normalized; `None` if it is
/// (numerically) contained in the span.
pub fn orthogonal_residual(
    v: &Array1<f64>,
    basis: &[Array1<f64>],
    tol: f64,
) -> Option<Array1<f64>> {
    let original = norm2(v.view());
    if original <= f64::MIN_POSITIVE {
        return None;
    }
    let mut r = v.clone();
    for _ in 0..2 {
        for q in basis {
            let coeff = r.dot(q);
            r.scaled_add(-coeff, q);
        }
    }
    let rn = norm2(r.view());
    if rn <= tol * original {
        return None;
    }
    Some(r / rn)
}

/// Norm of the component of `v` lying outside the span of `basis`
/// (basis assumed orthonormal).
pub fn residual_outside_span(v: &Array1<f64>, basis: &[Array1<f64>]) -> f64 {
    let mut r = v.clone();
    for q in basis {
        let coeff = r.dot(q);
        r.scaled_add(-coeff, q);
    }
    norm2(r.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn lu_solves_small_system() {
        let a = array![[4.0, 1.0], [2.0, 3.0]];
        let b = array![1.0, 5.0];
        let x = lu_solve(&a, &b).unwrap();
        let r = a.dot(&x) - &b;
        assert!(norm2(r.view()) < 1e-12);
    }

    #[test]
    fn lu_detects_singularity() {
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        let b = array![1.0, 2.0];
        assert!(lu_solve(&a, &b).is_none());
    }

    #[test]
    fn cholesky_matches_lu_on_spd() {
        let a = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let b = array![1.0, -2.0, 0.5];
        let x1 = cholesky_solve(&a, &b).unwrap();
        let x2 = lu_solve(&a, &b).unwrap();
        assert!(norm2((&x1 - &x2).view()) < 1e-12);
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let (vals, vecs) = jacobi_eigen(&a);
        let mut sorted: Vec<f64> = vals.to_vec();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert!((sorted[0] - 1.0).abs() < 1e-12);
        assert!((sorted[1] - 3.0).abs() < 1e-12);
        // columns are orthonormal
        let gram = vecs.t().dot(&vecs);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn power_iteration_identity() {
        let a = Array2::<f64>::eye(8);
        let res = gram_lambda_max(a.view(), 1e-10, 1000);
        assert!(res.converged);
        assert!((res.lambda_max - 1.0).abs() < 1e-9);
    }

    #[test]
    fn simplex_projection_basics() {
        let p = project_simplex(array![0.3, 0.3].view());
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        let p = project_simplex(array![2.0, -1.0].view());
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] == 0.0);
        let p = project_simplex(array![0.2, 0.5, 0.3].view());
        assert!((p.sum() - 1.0).abs() < 1e-15);
        assert!((p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn orthonormal_basis_drops_dependent_columns() {
        let cols = vec![array![1.0, 0.0, 0.0], array![2.0, 0.0, 0.0], array![1.0, 1.0, 0.0]];
        let basis = orthonormal_basis(&cols, 1e-12);
        assert_eq!(basis.len(), 2);
        assert!(residual_outside_span(&array![3.0, 4.0, 0.0], &basis) < 1e-12);
        assert!((residual_outside_span(&array![0.0, 0.0, 2.0], &basis) - 2.0).abs() < 1e-12);
    }
}
