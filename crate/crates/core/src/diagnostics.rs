//! Computable theory checks on simulated designs.
//!
//! Two quantities certify, on data with known truth, the mechanisms the
//! deconfounded estimator relies on:
//!
//! - a population compatibility lower bound: the smallest eigenvalue of
//!   `A = L Sigma_E L` with `L = diag((||Psi_j||^2 + (Sigma_E)_jj)^{-1/2})`,
//!   which lies in (0, 1] and stays away from 0 when the idiosyncratic
//!   noise is not drowned out by the confounding loadings;
//! - confounding leakage: the best linear approximation of the hidden
//!   confounding term regresses through `b = E[X X']^{-1} Psi' psi`, and
//!   the trim transform should shrink `||X b||^2 / n` sharply. Both the
//!   untransformed and transformed averages are returned.
//!
//! All inputs are truth parameters (never estimates), so these functions
//! live on the simulation side of the workflow.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use thiserror::Error;

use crate::linalg;
use crate::simgen::SigmaE;
use crate::spectral::{self, SpectralError};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("covariance is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: f64 },
    #[error("covariance solve failed (pivot {pivot})")]
    SingularCovariance { pivot: f64 },
    #[error("shape mismatch: {detail}")]
    Shape { detail: String },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Smallest eigenvalue of `L Sigma_E L` where
/// `L_jj = (||Psi_j||^2 + (Sigma_E)_jj)^{-1/2}` and `Psi_j` is the j-th
/// loading column. Lies in (0, 1] for positive definite `Sigma_E`.
pub fn compatibility_lower_bound(
    psi_mat: ArrayView2<'_, f64>,
    sigma_e: ArrayView2<'_, f64>,
) -> Result<f64, DiagnosticsError> {
    let p = sigma_e.nrows();
    if sigma_e.ncols() != p {
        return Err(DiagnosticsError::Shape {
            detail: format!("covariance is {}x{}", p, sigma_e.ncols()),
        });
    }
    if psi_mat.ncols() != p {
        return Err(DiagnosticsError::Shape {
            detail: format!("loadings have {} columns, covariance has {}", psi_mat.ncols(), p),
        });
    }
    // positive definiteness check up front so the eigensolve sees a valid A
    if let Err(pivot) = linalg::cholesky_upper(sigma_e) {
        return Err(DiagnosticsError::NotPositiveDefinite { pivot });
    }
    let mut lam = Array1::zeros(p);
    for j in 0..p {
        let col = psi_mat.column(j);
        let denom = col.dot(&col) + sigma_e[[j, j]];
        if !(denom.is_finite() && denom > 0.0) {
            return Err(DiagnosticsError::Shape {
                detail: format!("scaling entry {j} is not finite and positive: {denom}"),
            });
        }
        lam[j] = denom.powf(-0.5);
    }
    let a = Array2::from_shape_fn((p, p), |(i, j)| lam[i] * sigma_e[[i, j]] * lam[j]);
    Ok(linalg::sym_eigen_min(a.view()))
}

/// Remark-style closed form for diagonal covariance:
/// `min_j sigma_j^2 / (||Psi_j||^2 + sigma_j^2)`.
pub fn compatibility_diagonal(
    psi_mat: ArrayView2<'_, f64>,
    sigma_diag: ArrayView1<'_, f64>,
) -> f64 {
    let mut best = f64::INFINITY;
    for j in 0..sigma_diag.len() {
        let col = psi_mat.column(j);
        best = best.min(sigma_diag[j] / (col.dot(&col) + sigma_diag[j]));
    }
    best
}

/// Solves `(Psi' Psi + Sigma_E) b = Psi' psi` through the Woodbury identity
/// `b = Sigma_E^{-1} Psi' (I_q + Psi Sigma_E^{-1} Psi')^{-1} psi`, so only a
/// q x q system and structured covariance solves are needed.
pub fn best_linear_confounding(
    psi_mat: ArrayView2<'_, f64>,
    psi_vec: ArrayView1<'_, f64>,
    sigma_e: &SigmaE,
) -> Result<Array1<f64>, DiagnosticsError> {
    let (q, p) = psi_mat.dim();
    if psi_vec.len() != q {
        return Err(DiagnosticsError::Shape {
            detail: format!("psi has {} entries for {} factor rows", psi_vec.len(), q),
        });
    }
    if psi_vec.iter().all(|&v| v == 0.0) {
        return Ok(Array1::zeros(p));
    }
    // W = Sigma^{-1} Psi', p x q
    let w = match sigma_e {
        SigmaE::Identity => psi_mat.t().to_owned(),
        SigmaE::Toeplitz { .. } => {
            let cov = sigma_e.materialize(p);
            let (r, _) = linalg::cholesky_upper(cov.view())
                .map_err(|pivot| DiagnosticsError::SingularCovariance { pivot })?;
            let mut w = psi_mat.t().to_owned();
            for mut col in w.columns_mut() {
                let mut v = col.to_owned();
                linalg::solve_upper_transpose_inplace(r.view(), &mut v);
                linalg::solve_upper_inplace(r.view(), &mut v);
                col.assign(&v);
            }
            w
        }
    };
    // core = I_q + Psi W, q x q
    let mut core = psi_mat.dot(&w);
    for l in 0..q {
        core[[l, l]] += 1.0;
    }
    let z = linalg::spd_solve(core.view(), psi_vec)
        .ok_or(DiagnosticsError::SingularCovariance { pivot: 0.0 })?;
    Ok(w.dot(&z))
}

/// `(||X b||^2 / n, ||Q X b||^2 / n)` for the trim transform of `x` at
/// quantile `rho`; the second number is what deconfounding suppresses.
pub fn confounding_leakage(
    x: ArrayView2<'_, f64>,
    psi_mat: ArrayView2<'_, f64>,
    psi_vec: ArrayView1<'_, f64>,
    sigma_e: &SigmaE,
    rho: f64,
) -> Result<(f64, f64), DiagnosticsError> {
    let (n, p) = x.dim();
    if psi_mat.ncols() != p {
        return Err(DiagnosticsError::Shape {
            detail: format!("loadings have {} columns, design has {}", psi_mat.ncols(), p),
        });
    }
    let b = best_linear_confounding(psi_mat, psi_vec, sigma_e)?;
    let xb = x.dot(&b);
    let before = xb.dot(&xb) / n as f64;
    let q = spectral::trim_transform(x, rho)?;
    let qxb = q.apply_vec(xb.view())?;
    let after = qxb.dot(&qxb) / n as f64;
    Ok((before, after))
}

/// Nonincreasing singular values of `x` (spectrum inspection/export).
pub fn singular_values(x: ArrayView2<'_, f64>) -> Array1<f64> {
    spectral::thin_svd(x).d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{self, Influence, SimConfig};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn no_confounding_gives_unit_bound() {
        let psi = Array2::zeros((2, 4));
        let v = compatibility_lower_bound(psi.view(), Array2::eye(4).view()).unwrap();
        assert!((v - 1.0).abs() < 1e-12, "bound {v}");
    }

    #[test]
    fn hand_instance_is_one_half() {
        let psi = array![[1.0, 1.0]];
        let v = compatibility_lower_bound(psi.view(), Array2::eye(2).view()).unwrap();
        assert!((v - 0.5).abs() < 1e-12, "bound {v}");
    }

    #[test]
    fn diagonal_covariance_matches_closed_form() {
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        for _ in 0..5 {
            let (q, p) = (3, 8);
            let psi = Array2::from_shape_fn((q, p), |_| rng.gen_range(-1.0..1.0));
            let diag = Array1::from_shape_fn(p, |_| rng.gen_range(0.2..2.0f64));
            let mut sigma = Array2::zeros((p, p));
            for j in 0..p {
                sigma[[j, j]] = diag[j];
            }
            let general = compatibility_lower_bound(psi.view(), sigma.view()).unwrap();
            let closed = compatibility_diagonal(psi.view(), diag.view());
            assert!((general - closed).abs() < 1e-10, "{general} vs {closed}");
            assert!(general > 0.0 && general <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn indefinite_covariance_rejected() {
        let psi = Array2::zeros((1, 2));
        let sigma = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(matches!(
            compatibility_lower_bound(psi.view(), sigma.view()),
            Err(DiagnosticsError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn woodbury_matches_dense_solve() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        for sigma_e in [SigmaE::Identity, SigmaE::Toeplitz { rho: 0.6 }] {
            let (q, p) = (3, 12);
            let psi = Array2::from_shape_fn((q, p), |_| rng.gen_range(-1.0..1.0));
            let v = Array1::from_shape_fn(q, |_| rng.gen_range(0.0..2.0));
            let b = best_linear_confounding(psi.view(), v.view(), &sigma_e).unwrap();
            // dense reference: (Psi' Psi + Sigma) b = Psi' psi
            let a = psi.t().dot(&psi) + sigma_e.materialize(p);
            let rhs = psi.t().dot(&v);
            let b_ref = crate::linalg::spd_solve(a.view(), rhs.view()).unwrap();
            for j in 0..p {
                assert!((b[j] - b_ref[j]).abs() < 1e-10, "{sigma_e:?} entry {j}");
            }
        }
    }

    #[test]
    fn zero_psi_leaks_nothing() {
        let cfg = SimConfig { n: 40, p: 10, q: 2, cs: 0.0, seed: 4, ..SimConfig::default() };
        let d = simgen::gen_dataset(&cfg).unwrap();
        let c = &d.truth.coefficients;
        let (before, after) = confounding_leakage(
            d.x.view(),
            c.psi_mat.view(),
            c.psi_vec.view(),
            &cfg.sigma_e,
            0.5,
        )
        .unwrap();
        assert_eq!((before, after), (0.0, 0.0));
    }

    #[test]
    fn transform_contracts_leakage() {
        let cfg = SimConfig {
            n: 60,
            p: 40,
            q: 3,
            influence: Influence::Equal,
            seed: 12,
            ..SimConfig::default()
        };
        let d = simgen::gen_dataset(&cfg).unwrap();
        let c = &d.truth.coefficients;
        let (before, after) = confounding_leakage(
            d.x.view(),
            c.psi_mat.view(),
            c.psi_vec.view(),
            &cfg.sigma_e,
            0.5,
        )
        .unwrap();
        assert!(before > 0.0);
        assert!(after <= before, "{after} vs {before}");
    }

    #[test]
    fn trim_at_first_position_changes_nothing() {
        // floor(rho * r) = 1 shrinks by d_1/d_l >= 1, so Q is the identity
        let cfg = SimConfig { n: 3, p: 10, q: 2, seed: 6, ..SimConfig::default() };
        let d = simgen::gen_dataset(&cfg).unwrap();
        let c = &d.truth.coefficients;
        let (before, after) = confounding_leakage(
            d.x.view(),
            c.psi_mat.view(),
            c.psi_vec.view(),
            &cfg.sigma_e,
            0.5, // r = 3, floor(1.5) = 1
        )
        .unwrap();
        assert_eq!(after, before);
    }

    #[test]
    fn spectrum_is_nonincreasing() {
        let d = simgen::gen_dataset(&SimConfig { n: 20, p: 15, q: 2, seed: 2, ..SimConfig::default() })
            .unwrap();
        let sv = singular_values(d.x.view());
        assert_eq!(sv.len(), 15);
        assert!(sv.windows(2).into_iter().all(|w| w[0] >= w[1]));
        let eye = singular_values(Array2::eye(3).view());
        for v in eye.iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }
}
