//! Verifies the factored spectral transforms against dense
//! materializations and hand-computable spectra.

mod common;

use ndarray::{Array1, Array2};
use specdeconf::spectral::{
    eigenvalue_ratio_from_spectrum, pca_transform, thin_svd, trim_transform, SpectralError,
};

use common::{gauss_mat, seeded_rng};

/// Dense trim operator `Q = I - U diag(1 - shrink) U'` built from scratch.
fn dense_trim(x: &Array2<f64>, rho: f64) -> Array2<f64> {
    let svd = thin_svd(x.view());
    let r = svd.d.len();
    let k = ((rho * r as f64).floor() as usize).max(1);
    let d_k = svd.d[k - 1];
    let n = x.nrows();
    let mut q = Array2::eye(n);
    for l in 0..r {
        let shrink = (d_k / svd.d[l]).min(1.0);
        let u_l = svd.u.column(l);
        for i in 0..n {
            for j in 0..n {
                q[[i, j]] -= (1.0 - shrink) * u_l[i] * u_l[j];
            }
        }
    }
    q
}

#[test]
fn trim_apply_matches_dense_materialization() {
    let mut rng = seeded_rng(31);
    for &(n, p) in &[(8, 5), (6, 12), (15, 15)] {
        let x = gauss_mat(&mut rng, n, p);
        let q_dense = dense_trim(&x, 0.5);
        let transform = trim_transform(x.view(), 0.5).unwrap();

        let m = gauss_mat(&mut rng, n, 3);
        let got = transform.apply(m.view()).unwrap();
        let want = q_dense.dot(&m);
        for (a, b) in got.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12, "{n}x{p}: {a} vs {b}");
        }

        let v = gauss_mat(&mut rng, n, 1).column(0).to_owned();
        let got = transform.apply_vec(v.view()).unwrap();
        let want = q_dense.dot(&v);
        for (a, b) in got.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn trim_hand_instance_caps_the_top_singular_value() {
    // spectrum (4, 2, 2, 1), rho = 0.5 -> reference index 2, d_ref = 2:
    // only the leading direction shrinks, giving spectrum (2, 2, 2, 1)
    let x = Array2::from_diag(&Array1::from(vec![4.0, 2.0, 2.0, 1.0]));
    let transform = trim_transform(x.view(), 0.5).unwrap();
    let qx = transform.apply(x.view()).unwrap();
    let d = thin_svd(qx.view()).d;
    let want = [2.0, 2.0, 2.0, 1.0];
    for (a, b) in d.iter().zip(want.iter()) {
        assert!((a - b).abs() < 1e-12, "spectrum {d} vs (2,2,2,1)");
    }
}

#[test]
fn trim_reference_at_first_position_is_identity() {
    // r = 3 and floor(0.5 * 3) = 1: the reference is the largest singular
    // value, so no direction shrinks and the operator is exactly identity
    let mut rng = seeded_rng(32);
    let x = gauss_mat(&mut rng, 3, 40);
    let transform = trim_transform(x.view(), 0.5).unwrap();
    let m = gauss_mat(&mut rng, 3, 7);
    let got = transform.apply(m.view()).unwrap();
    assert_eq!(got, m, "identity case must reproduce the input bit for bit");
}

#[test]
fn trim_never_expands() {
    let mut rng = seeded_rng(33);
    let x = gauss_mat(&mut rng, 20, 30);
    let transform = trim_transform(x.view(), 0.5).unwrap();
    for _ in 0..20 {
        let v = common::gauss_vec(&mut rng, 20);
        let qv = transform.apply_vec(v.view()).unwrap();
        let (nv, nqv) = (v.dot(&v).sqrt(), qv.dot(&qv).sqrt());
        assert!(nqv <= nv * (1.0 + 1e-12), "||Qv|| = {nqv} > ||v|| = {nv}");
    }
}

#[test]
fn pca_transform_projects_idempotently() {
    let mut rng = seeded_rng(34);
    let x = gauss_mat(&mut rng, 12, 9);
    let transform = pca_transform(x.view(), 3).unwrap();
    let m = gauss_mat(&mut rng, 12, 4);
    let once = transform.apply(m.view()).unwrap();
    let twice = transform.apply(once.view()).unwrap();
    for (a, b) in once.iter().zip(twice.iter()) {
        assert!((a - b).abs() < 1e-12, "projection must be idempotent");
    }

    // the first q singular directions of X are annihilated
    let svd = thin_svd(x.view());
    let qx = transform.apply(x.view()).unwrap();
    let top_removed = thin_svd(qx.view()).d[0];
    assert!((top_removed - svd.d[3]).abs() < 1e-10 * svd.d[0]);
}

#[test]
fn eigenvalue_ratio_picks_the_largest_gap() {
    let d = Array1::from(vec![10.0, 9.0, 8.0, 1.0, 0.9, 0.8]);
    // candidate ratios (l <= ceil(6/2) = 3): 1.23, 1.27, 64 -> q = 3
    assert_eq!(eigenvalue_ratio_from_spectrum(d.view()).unwrap(), 3);

    let d = Array1::from(vec![100.0, 1.0, 0.99, 0.98]);
    assert_eq!(eigenvalue_ratio_from_spectrum(d.view()).unwrap(), 1);

    let d = Array1::from(vec![5.0]);
    assert!(matches!(
        eigenvalue_ratio_from_spectrum(d.view()),
        Err(SpectralError::RankDeficient { r: 1 })
    ));
}

#[test]
fn transform_rejects_wrong_row_count() {
    let mut rng = seeded_rng(35);
    let x = gauss_mat(&mut rng, 10, 6);
    let transform = trim_transform(x.view(), 0.5).unwrap();
    let m = gauss_mat(&mut rng, 11, 2);
    assert!(matches!(
        transform.apply(m.view()),
        Err(SpectralError::RowMismatch { expected: 10, got: 11 })
    ));
}
