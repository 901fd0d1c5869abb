//! Cubic B-spline bases with empirical-quantile knots.
//!
//! Each covariate gets a clamped cubic basis of `K >= 5` functions: boundary
//! knots at the column minimum and maximum repeated `degree + 1 = 4` times,
//! and `K - 4` interior knots at type-7 empirical quantiles of the column at
//! levels `i / (K - 3)`. Evaluation clamps out-of-range inputs to the
//! boundary, which yields constant extrapolation of fitted components.
//!
//! For the group-lasso solver the raw design `B` is mapped to orthonormal
//! coordinates `Bt = B R^{-1}` with `R' R = (1/n) B' B`, so that
//! `(1/n) Bt' Bt = I`. Nearly singular Grams are ridged before factoring.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

/// Spline degree is fixed: cubic.
pub const DEGREE: usize = 3;

/// Smallest admissible basis size.
pub const MIN_K: usize = 5;

/// Relative separation enforced between perturbed duplicate interior knots.
const KNOT_EPS_REL: f64 = 1e-9;

/// Gram ridge ladder, scaled by `trace(gram) / K`.
const RIDGE_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Pivots at or below this relative threshold count as Cholesky failures.
const PIVOT_REL_FLOOR: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("basis size k = {k} is invalid: need k >= {MIN_K}")]
    InvalidK { k: usize },
    #[error("{n} samples are too few for a basis of size k = {k}")]
    TooFewSamples { n: usize, k: usize },
    #[error("column range {range:.3e} is numerically zero; no spline basis exists")]
    DegenerateColumn { range: f64 },
    #[error("basis Gram matrix is singular even after ridge escalation")]
    SingularGram,
}

/// A fixed cubic B-spline basis: `k` functions over a padded knot vector of
/// length `k + 4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    k: usize,
    knots: Vec<f64>,
}

/// Builds a basis of `k` functions from the empirical distribution of `x`.
///
/// Interior knots sit at type-7 quantiles; exact duplicates are perturbed
/// into a strictly increasing sequence by `1e-9 * range` steps.
pub fn quantile_knots(x: ArrayView1<'_, f64>, k: usize) -> Result<BasisSpec, BasisError> {
    if k < MIN_K {
        return Err(BasisError::InvalidK { k });
    }
    let n = x.len();
    if n < k {
        return Err(BasisError::TooFewSamples { n, k });
    }
    let mut sorted: Vec<f64> = x.iter().cloned().collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let (lo, hi) = (sorted[0], sorted[n - 1]);
    let range = hi - lo;
    if range <= 1e-12 * f64::max(1.0, lo.abs().max(hi.abs())) {
        return Err(BasisError::DegenerateColumn { range });
    }

    let interior_count = k - 4;
    let mut interior = Vec::with_capacity(interior_count);
    for i in 1..=interior_count {
        let level = i as f64 / (k - 3) as f64;
        interior.push(type7_quantile(&sorted, level));
    }

    // Enforce strict monotonicity inside (lo, hi): forward pass pushes
    // duplicates up by eps, a backward pass pulls any overflow off the upper
    // boundary.
    let eps = KNOT_EPS_REL * range;
    let mut prev = lo;
    for v in interior.iter_mut() {
        if *v <= prev {
            *v = prev + eps;
        }
        prev = *v;
    }
    let mut next = hi;
    for v in interior.iter_mut().rev() {
        if *v >= next {
            *v = next - eps;
        }
        next = *v;
    }
    if interior.first().is_some_and(|&v| v <= lo) {
        return Err(BasisError::DegenerateColumn { range });
    }

    let mut knots = Vec::with_capacity(k + 4);
    knots.extend(std::iter::repeat(lo).take(4));
    knots.extend(interior);
    knots.extend(std::iter::repeat(hi).take(4));
    Ok(BasisSpec { k, knots })
}

/// Type-7 quantile of presorted data: `h = (n - 1) * level`, linear
/// interpolation between the bracketing order statistics.
fn type7_quantile(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * level;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n || frac == 0.0 {
        sorted[lo.min(n - 1)]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

impl BasisSpec {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Full padded knot vector of length `k + 4`.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn lower(&self) -> f64 {
        self.knots[0]
    }

    pub fn upper(&self) -> f64 {
        self.knots[self.k + 3]
    }

    /// Knot span index for clamped `x`: the largest `i` in `[3, k - 1]` with
    /// `knots[i] <= x` (the top span is closed on the right).
    fn find_span(&self, x: f64) -> usize {
        let t = &self.knots;
        if x >= self.upper() {
            return self.k - 1;
        }
        let (mut lo, mut hi) = (3usize, self.k - 1);
        while lo < hi {
            let mid = (lo + hi + 1) / 2;
            if t[mid] <= x {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo
    }

    /// Evaluates the at most four basis functions that are nonzero at `x`
    /// (after clamping), returning the index of the first one.
    pub fn eval_local(&self, x: f64) -> (usize, [f64; 4]) {
        let x = x.clamp(self.lower(), self.upper());
        let t = &self.knots;
        let span = self.find_span(x);
        let mut vals = [0.0f64; 4];
        vals[0] = 1.0;
        let mut left = [0.0f64; 4];
        let mut right = [0.0f64; 4];
        for j in 1..=DEGREE {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = vals[r] / (right[r + 1] + left[j - r]);
                vals[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            vals[j] = saved;
        }
        (span - DEGREE, vals)
    }
}

/// Evaluates all `k` basis functions at `x` (clamped to the knot range).
pub fn eval_basis(spec: &BasisSpec, x: f64) -> Array1<f64> {
    let mut out = Array1::zeros(spec.k);
    let (offset, vals) = spec.eval_local(x);
    for (i, v) in vals.iter().enumerate() {
        out[offset + i] = *v;
    }
    out
}

/// Stacks basis evaluations into the `n x k` design matrix.
pub fn design_matrix(x: ArrayView1<'_, f64>, spec: &BasisSpec) -> Array2<f64> {
    let n = x.len();
    let mut b = Array2::zeros((n, spec.k));
    for (i, &xi) in x.iter().enumerate() {
        let (offset, vals) = spec.eval_local(xi);
        for (l, v) in vals.iter().enumerate() {
            b[[i, offset + l]] = *v;
        }
    }
    b
}

/// A design mapped to orthonormal coordinates.
#[derive(Debug, Clone)]
pub struct OrthoBasis {
    /// `Bt = B R^{-1}` with `(1/n) Bt' Bt = I` (with respect to the ridged
    /// Gram when `ridge > 0`).
    pub b_tilde: Array2<f64>,
    /// Upper-triangular factor with `R' R = (1/n) B' B + ridge * I`.
    pub r: Array2<f64>,
    /// Ridge that was actually applied (0 on well-conditioned input).
    pub ridge: f64,
}

/// Cholesky-orthonormalizes a design block, escalating a scaled ridge up to
/// twice before reporting the Gram as singular.
pub fn orthonormalize(b: &Array2<f64>) -> Result<OrthoBasis, BasisError> {
    let (n, k) = b.dim();
    if n == 0 || k == 0 {
        return Err(BasisError::SingularGram);
    }
    let gram = b.t().dot(b) / n as f64;
    let scale = gram.diag().sum() / k as f64;
    if !(scale > 0.0) {
        return Err(BasisError::SingularGram);
    }
    for rel in RIDGE_LADDER {
        let ridge = rel * scale;
        let mut g = gram.clone();
        for i in 0..k {
            g[[i, i]] += ridge;
        }
        if let Ok((r, min_pivot)) = linalg::cholesky_upper(g.view()) {
            if min_pivot > PIVOT_REL_FLOOR * scale {
                let mut b_tilde = b.clone();
                // row-wise solve of R' bt_i = b_i
                for mut row in b_tilde.rows_mut() {
                    let mut tmp = row.to_owned();
                    linalg::solve_upper_transpose_inplace(r.view(), &mut tmp);
                    row.assign(&tmp);
                }
                return Ok(OrthoBasis { b_tilde, r, ridge });
            }
        }
    }
    Err(BasisError::SingularGram)
}
