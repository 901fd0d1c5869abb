//! Small dense linear-algebra helpers shared across modules.
//!
//! The SVD and symmetric eigensolver are bridged to nalgebra (pure Rust, so
//! results are deterministic for a fixed input on every platform). Cholesky
//! factorizations are hand-rolled because callers need the pivot values to
//! drive ridge escalation.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

pub(crate) fn to_dmatrix(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Thin SVD `X = U diag(d) Vt` with `d` sorted descending.
///
/// `U` is `n x r`, `d` has length `r`, `Vt` is `r x p` with `r = min(n, p)`.
pub(crate) fn thin_svd(x: ArrayView2<'_, f64>) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let (n, p) = (x.nrows(), x.ncols());
    let r = n.min(p);
    let svd = to_dmatrix(x).svd(true, true);
    let u = svd.u.expect("svd requested u");
    let vt = svd.v_t.expect("svd requested v_t");
    let d = &svd.singular_values;

    // nalgebra returns singular values in descending order, but that is not
    // documented as a guarantee; sort defensively with a stable permutation.
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| d[b].partial_cmp(&d[a]).expect("singular values are finite"));

    let mut u_out = Array2::zeros((n, r));
    let mut vt_out = Array2::zeros((r, p));
    let mut d_out = Array1::zeros(r);
    for (dst, &src) in order.iter().enumerate() {
        d_out[dst] = d[src];
        for i in 0..n {
            u_out[[i, dst]] = u[(i, src)];
        }
        for j in 0..p {
            vt_out[[dst, j]] = vt[(src, j)];
        }
    }
    (u_out, d_out, vt_out)
}

/// Smallest eigenvalue of a symmetric matrix.
pub(crate) fn sym_eigen_min(a: ArrayView2<'_, f64>) -> f64 {
    let eig = to_dmatrix(a).symmetric_eigen();
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Upper Cholesky factor `R` with `A = R' R`, returning the smallest pivot
/// encountered. Fails with the offending pivot if one is not strictly
/// positive.
pub(crate) fn cholesky_upper(a: ArrayView2<'_, f64>) -> Result<(Array2<f64>, f64), f64> {
    let k = a.nrows();
    debug_assert_eq!(k, a.ncols());
    let mut r = Array2::<f64>::zeros((k, k));
    let mut min_pivot = f64::INFINITY;
    for j in 0..k {
        let mut pivot = a[[j, j]];
        for i in 0..j {
            pivot -= r[[i, j]] * r[[i, j]];
        }
        if pivot <= 0.0 || !pivot.is_finite() {
            return Err(pivot);
        }
        min_pivot = min_pivot.min(pivot);
        let rjj = pivot.sqrt();
        r[[j, j]] = rjj;
        for l in (j + 1)..k {
            let mut s = a[[j, l]];
            for i in 0..j {
                s -= r[[i, j]] * r[[i, l]];
            }
            r[[j, l]] = s / rjj;
        }
    }
    Ok((r, min_pivot))
}

/// Solves `R x = b` in place for upper-triangular `R`.
pub(crate) fn solve_upper_inplace(r: ArrayView2<'_, f64>, b: &mut Array1<f64>) {
    let k = b.len();
    for i in (0..k).rev() {
        let mut s = b[i];
        for j in (i + 1)..k {
            s -= r[[i, j]] * b[j];
        }
        b[i] = s / r[[i, i]];
    }
}

/// Solves `R' x = b` in place for upper-triangular `R` (forward substitution).
pub(crate) fn solve_upper_transpose_inplace(r: ArrayView2<'_, f64>, b: &mut Array1<f64>) {
    let k = b.len();
    for i in 0..k {
        let mut s = b[i];
        for j in 0..i {
            s -= r[[j, i]] * b[j];
        }
        b[i] = s / r[[i, i]];
    }
}

/// Solves the SPD system `A x = b` via Cholesky; `None` if `A` is not
/// numerically positive definite.
pub(crate) fn spd_solve(a: ArrayView2<'_, f64>, b: ArrayView1<'_, f64>) -> Option<Array1<f64>> {
    let (r, _) = cholesky_upper(a).ok()?;
    let mut x = b.to_owned();
    solve_upper_transpose_inplace(r.view(), &mut x);
    solve_upper_inplace(r.view(), &mut x);
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn thin_svd_reconstructs() {
        let x = array![[1.0, 2.0, 0.5], [3.0, -4.0, 1.0], [0.0, 1.0, 2.0], [2.0, 2.0, 2.0]];
        let (u, d, vt) = thin_svd(x.view());
        assert_eq!(u.dim(), (4, 3));
        assert_eq!(vt.dim(), (3, 3));
        let recon = u.dot(&Array2::from_diag(&d)).dot(&vt);
        let err = (&recon - &x).mapv(|v| v * v).sum().sqrt();
        assert!(err < 1e-12, "reconstruction error {err}");
        assert!(d[0] >= d[1] && d[1] >= d[2]);
    }

    #[test]
    fn cholesky_round_trip() {
        let a = array![[4.0, 2.0, 0.5], [2.0, 5.0, 1.0], [0.5, 1.0, 3.0]];
        let (r, min_pivot) = cholesky_upper(a.view()).unwrap();
        let back = r.t().dot(&r);
        assert!((&back - &a).mapv(f64::abs).sum() < 1e-12);
        assert!(min_pivot > 0.0);

        let mut b = array![1.0, 2.0, 3.0];
        let x = spd_solve(a.view(), b.view()).unwrap();
        let resid = &a.dot(&x) - &b;
        assert!(resid.mapv(f64::abs).sum() < 1e-12);

        solve_upper_inplace(r.view(), &mut b);
        let back_b = r.dot(&b);
        assert!((&back_b - &array![1.0, 2.0, 3.0]).mapv(f64::abs).sum() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky_upper(a.view()).is_err());
    }
}
