//! Spectral transforms of the covariate matrix and factor-count estimation.
//!
//! A spectral transform is `Q = U diag(dt_1, ..., dt_r, 1, ..., 1) U'` where
//! `U` holds the left singular vectors of `X` and `dt_l` shrinks the leading
//! singular directions. The trim transform caps singular values at the
//! `floor(rho * r)`-th largest (`dt_l = min(d_k / d_l, 1)`); the PCA variant
//! removes the top `q` directions outright (`dt_l = 0` for `l <= q`), which
//! makes `Q` the orthogonal projector onto their complement.
//!
//! `Q` is never materialized: with `s_l = 1 - dt_l` nonzero only on a leading
//! prefix, `Q M = M - U_a (s_a . (U_a' M))` for the active prefix `U_a`, so
//! applications cost `O(n * a * m)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use thiserror::Error;

use crate::linalg;

/// Relative floor under which singular values are treated as zero, scaled by
/// the largest singular value.
const SV_REL_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("input matrix is numerically zero; no spectral transform exists")]
    ZeroMatrix,
    #[error("trim fraction rho = {rho} is invalid: need rho in (0, 1) with floor(rho * r) >= 1 (spectrum length r = {r})")]
    InvalidRho { rho: f64, r: usize },
    #[error("pca level q = {q} must satisfy q < r = {r}")]
    InvalidQ { q: usize, r: usize },
    #[error("spectrum of length {r} is too short for the eigenvalue-ratio estimator (need r >= 2)")]
    RankDeficient { r: usize },
    #[error("transform was built for {expected} rows but was applied to {got} rows")]
    RowMismatch { expected: usize, got: usize },
}

/// Thin singular value decomposition `X = U diag(d) Vt`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// Left singular vectors, `n x r` with orthonormal columns.
    pub u: Array2<f64>,
    /// Singular values in descending order, length `r = min(n, p)`.
    pub d: Array1<f64>,
    /// Right singular vectors transposed, `r x p`.
    pub vt: Array2<f64>,
}

impl SvdResult {
    pub fn r(&self) -> usize {
        self.d.len()
    }
}

/// Computes the thin SVD of `x` (deterministic for a fixed input).
pub fn thin_svd(x: ArrayView2<'_, f64>) -> SvdResult {
    let (u, d, vt) = linalg::thin_svd(x);
    SvdResult { u, d, vt }
}

/// Which shrinkage rule a [`SpectralTransform`] encodes.
#[derive(Debug, Clone, PartialEq)]
pub enum TransformKind {
    Trim { rho: f64 },
    Pca { q: usize },
    Identity,
}

/// A factored spectral transform `Q = I - U_a diag(s_a) U_a'`.
///
/// `U_a` holds the singular directions with shrinkage below one, so identity
/// transforms and untouched directions cost nothing to apply.
#[derive(Debug, Clone)]
pub struct SpectralTransform {
    kind: TransformKind,
    n: usize,
    /// Shrink multipliers `dt_l` for the full spectrum (empty for identity).
    shrink: Array1<f64>,
    /// Leading singular vectors with `dt_l < 1`, `n x a`.
    u_active: Array2<f64>,
    /// `1 - dt_l` on the active prefix, length `a`.
    s_active: Array1<f64>,
}

impl SpectralTransform {
    fn from_svd(kind: TransformKind, n: usize, u: &Array2<f64>, shrink: Array1<f64>) -> Self {
        let active = shrink.iter().take_while(|&&s| s < 1.0).count();
        let u_active = u.slice(ndarray::s![.., ..active]).to_owned();
        let s_active = shrink.slice(ndarray::s![..active]).mapv(|s| 1.0 - s);
        SpectralTransform { kind, n, shrink, u_active, s_active }
    }

    /// The identity transform on `n` rows (the naive estimator's choice).
    pub fn identity(n: usize) -> Self {
        SpectralTransform {
            kind: TransformKind::Identity,
            n,
            shrink: Array1::zeros(0),
            u_active: Array2::zeros((n, 0)),
            s_active: Array1::zeros(0),
        }
    }

    pub fn kind(&self) -> &TransformKind {
        &self.kind
    }

    /// Number of rows the transform acts on.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Shrink multipliers over the full spectrum (empty for identity).
    pub fn shrink(&self) -> &Array1<f64> {
        &self.shrink
    }

    /// Applies `Q` to a matrix without materializing it.
    pub fn apply(&self, m: ArrayView2<'_, f64>) -> Result<Array2<f64>, SpectralError> {
        if m.nrows() != self.n {
            return Err(SpectralError::RowMismatch { expected: self.n, got: m.nrows() });
        }
        let mut out = m.to_owned();
        if self.s_active.is_empty() {
            return Ok(out);
        }
        // w = s . (U_a' M), out = M - U_a w
        let mut w = self.u_active.t().dot(&m);
        for (mut row, &s) in w.axis_iter_mut(Axis(0)).zip(self.s_active.iter()) {
            row.mapv_inplace(|v| v * s);
        }
        out -= &self.u_active.dot(&w);
        Ok(out)
    }

    /// Applies `Q` to a vector.
    pub fn apply_vec(&self, v: ArrayView1<'_, f64>) -> Result<Array1<f64>, SpectralError> {
        if v.len() != self.n {
            return Err(SpectralError::RowMismatch { expected: self.n, got: v.len() });
        }
        let mut out = v.to_owned();
        if self.s_active.is_empty() {
            return Ok(out);
        }
        let mut w = self.u_active.t().dot(&v);
        for (wi, &s) in w.iter_mut().zip(self.s_active.iter()) {
            *wi *= s;
        }
        out -= &self.u_active.dot(&w);
        Ok(out)
    }
}

/// Builds the trim transform: singular values above the `floor(rho * r)`-th
/// largest are shrunk down to it, the rest are untouched.
pub fn trim_transform(x: ArrayView2<'_, f64>, rho: f64) -> Result<SpectralTransform, SpectralError> {
    let svd = thin_svd(x);
    trim_from_svd(&svd, x.nrows(), rho)
}

/// Trim transform from a precomputed SVD (avoids refactorizing `x`).
pub fn trim_from_svd(svd: &SvdResult, n: usize, rho: f64) -> Result<SpectralTransform, SpectralError> {
    let r = svd.r();
    if !(rho > 0.0 && rho < 1.0) {
        return Err(SpectralError::InvalidRho { rho, r });
    }
    let k = (rho * r as f64).floor() as usize; // 1-indexed trim position
    if k < 1 {
        return Err(SpectralError::InvalidRho { rho, r });
    }
    let d = &svd.d;
    if d[0] <= 0.0 {
        return Err(SpectralError::ZeroMatrix);
    }
    let eps = SV_REL_FLOOR * d[0];
    let dk = d[k - 1];
    let shrink = d.mapv(|dl| if dl <= eps { 1.0 } else { (dk / dl).min(1.0) });
    Ok(SpectralTransform::from_svd(TransformKind::Trim { rho }, n, &svd.u, shrink))
}

/// Builds the PCA transform removing the top `q` singular directions
/// (`q = 0` leaves the identity behavior on a full-rank spectrum).
pub fn pca_transform(x: ArrayView2<'_, f64>, q: usize) -> Result<SpectralTransform, SpectralError> {
    let svd = thin_svd(x);
    let r = svd.r();
    if q >= r {
        return Err(SpectralError::InvalidQ { q, r });
    }
    if svd.d[0] <= 0.0 {
        return Err(SpectralError::ZeroMatrix);
    }
    let shrink = Array1::from_shape_fn(r, |l| if l < q { 0.0 } else { 1.0 });
    Ok(SpectralTransform::from_svd(TransformKind::Pca { q }, x.nrows(), &svd.u, shrink))
}

/// Estimates the number of hidden factors by the eigenvalue-ratio rule:
/// `q_hat = argmax_{1 <= l <= ceil(r/2)} d_l^2 / d_{l+1}^2`.
pub fn eigenvalue_ratio_q(x: ArrayView2<'_, f64>) -> Result<usize, SpectralError> {
    let svd = thin_svd(x);
    eigenvalue_ratio_from_spectrum(svd.d.view())
}

/// Eigenvalue-ratio rule on a precomputed descending spectrum.
///
/// `d_{l+1}` below the absolute floor `1e-12 * d_1` makes the ratio `+inf`;
/// the smallest such `l` wins. Ties in finite ratios also resolve to the
/// smallest `l`.
pub fn eigenvalue_ratio_from_spectrum(d: ArrayView1<'_, f64>) -> Result<usize, SpectralError> {
    let r = d.len();
    if r < 2 {
        return Err(SpectralError::RankDeficient { r });
    }
    let eps = SV_REL_FLOOR * d[0];
    let upper = r.div_ceil(2); // ceil(r/2) <= r - 1 for r >= 2
    let mut best_l = 1usize;
    let mut best_ratio = f64::NEG_INFINITY;
    for l in 1..=upper {
        let ratio = if d[l] <= eps {
            f64::INFINITY
        } else {
            (d[l - 1] / d[l]).powi(2)
        };
        if ratio > best_ratio {
            best_ratio = ratio;
            best_l = l;
            if ratio.is_infinite() {
                break;
            }
        }
    }
    Ok(best_l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_transform_is_noop() {
        let q = SpectralTransform::identity(3);
        let m = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let out = q.apply(m.view()).unwrap();
        assert_eq!(out, m);
        let v = array![1.0, -2.0, 0.5];
        assert_eq!(q.apply_vec(v.view()).unwrap(), v);
    }

    #[test]
    fn trim_rejects_bad_rho() {
        let x = Array2::<f64>::eye(4);
        assert!(matches!(trim_transform(x.view(), 0.0), Err(SpectralError::InvalidRho { .. })));
        assert!(matches!(trim_transform(x.view(), 1.0), Err(SpectralError::InvalidRho { .. })));
        assert!(matches!(trim_transform(x.view(), -0.3), Err(SpectralError::InvalidRho { .. })));
        // r = 1: floor(rho * 1) = 0 for any rho in (0, 1)
        let col = array![[1.0], [2.0], [0.5]];
        assert!(matches!(trim_transform(col.view(), 0.5), Err(SpectralError::InvalidRho { .. })));
    }

    #[test]
    fn trim_rejects_zero_matrix() {
        let x = Array2::<f64>::zeros((4, 3));
        assert!(matches!(trim_transform(x.view(), 0.5), Err(SpectralError::ZeroMatrix)));
    }

    #[test]
    fn pca_is_projector_complement() {
        let x = array![
            [1.0, 0.5, 0.0],
            [0.0, 2.0, 1.0],
            [1.0, 1.0, 1.0],
            [0.5, 0.0, 2.0]
        ];
        let q = pca_transform(x.view(), 1).unwrap();
        let qx = q.apply(x.view()).unwrap();
        // top singular direction of X is annihilated: Q X has rank r - 1
        let d = thin_svd(qx.view()).d;
        assert!(d[d.len() - 1].abs() < 1e-10 || d[2] < 1e-10);
        // applying twice equals applying once (projector)
        let qqx = q.apply(qx.view()).unwrap();
        assert!((&qqx - &qx).mapv(f64::abs).sum() < 1e-10);
    }

    #[test]
    fn pca_rejects_large_q() {
        let x = Array2::<f64>::eye(3);
        assert!(matches!(pca_transform(x.view(), 3), Err(SpectralError::InvalidQ { .. })));
    }

    #[test]
    fn apply_checks_row_count() {
        let x = Array2::<f64>::eye(4);
        let q = trim_transform(x.view(), 0.5).unwrap();
        let bad = Array2::<f64>::zeros((3, 2));
        assert!(matches!(q.apply(bad.view()), Err(SpectralError::RowMismatch { .. })));
    }

    #[test]
    fn ratio_estimator_rejects_short_spectrum() {
        let d = array![1.0];
        assert!(matches!(
            eigenvalue_ratio_from_spectrum(d.view()),
            Err(SpectralError::RankDeficient { r: 1 })
        ));
    }

    #[test]
    fn ratio_estimator_injected_spectrum() {
        // ratios: l=1 -> (10/9)^2, l=2 -> 81, l=3 -> (1/0.9)^2, ...
        let d = array![10.0, 9.0, 1.0, 0.9, 0.8, 0.7, 0.6, 0.5];
        assert_eq!(eigenvalue_ratio_from_spectrum(d.view()).unwrap(), 2);
    }

    #[test]
    fn ratio_estimator_all_equal_picks_smallest() {
        // X = I: every ratio is exactly 1; the first l wins
        let x = Array2::<f64>::eye(4);
        assert_eq!(eigenvalue_ratio_q(x.view()).unwrap(), 1);
    }

    #[test]
    fn ratio_estimator_infinite_guard_prefers_smallest() {
        let d = array![5.0, 3.0, 2.0, 0.0, 0.0, 0.0];
        assert_eq!(eigenvalue_ratio_from_spectrum(d.view()).unwrap(), 3);
    }
}
