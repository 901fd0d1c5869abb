//! Independent reference implementations used to verify the library from
//! the outside: an accelerated proximal-gradient solver for the group
//! lasso, the textbook B-spline recursion, and a Jacobi eigensolver. All
//! are written against the mathematical definitions, sharing no code with
//! the implementations under test.

#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use specdeconf::spectral::thin_svd;

pub fn seeded_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn gauss_mat(rng: &mut ChaCha20Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| StandardNormal.sample(rng))
}

pub fn gauss_vec(rng: &mut ChaCha20Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| StandardNormal.sample(rng))
}

pub fn uniform_vec(rng: &mut ChaCha20Rng, n: usize, lo: f64, hi: f64) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| rng.gen_range(lo..hi))
}

/// Scales a block so that `(1/n) B' B` has top eigenvalue exactly 1,
/// matching the majorization precondition of the coordinate solver.
pub fn unit_block_scale(b: &Array2<f64>) -> Array2<f64> {
    let top = thin_svd(b.view()).d[0];
    let n = b.nrows() as f64;
    b * (n.sqrt() / top)
}

/// Reference group-lasso solution from monotone FISTA.
pub struct RefSolution {
    pub objective: f64,
    /// Unpenalized coefficients (same column order as `zu`).
    pub a: Array1<f64>,
    /// Penalized blocks.
    pub b: Vec<Array1<f64>>,
}

fn ref_objective(
    zu: &Array2<f64>,
    zg: &[Array2<f64>],
    y: &Array1<f64>,
    lambda: f64,
    a: &Array1<f64>,
    b: &[Array1<f64>],
) -> f64 {
    let mut r = y.clone();
    r -= &zu.dot(a);
    for (g, c) in zg.iter().zip(b) {
        r -= &g.dot(c);
    }
    let n = y.len() as f64;
    r.dot(&r) / n + lambda * b.iter().map(|c| c.dot(c).sqrt()).sum::<f64>()
}

/// Solves `min (1/n)||y - zu a - sum_j zg_j b_j||^2 + lambda sum_j ||b_j||`
/// by accelerated proximal gradient with adaptive restart, tracking the
/// best iterate seen. The matrices are taken as given (already transformed
/// when the problem has a spectral transform).
pub fn fista_group_lasso(
    zu: &Array2<f64>,
    zg: &[Array2<f64>],
    y: &Array1<f64>,
    lambda: f64,
    max_iter: usize,
) -> RefSolution {
    let n = y.len();
    let nf = n as f64;
    let total = zu.ncols() + zg.iter().map(|g| g.ncols()).sum::<usize>();
    let mut z = Array2::zeros((n, total));
    z.slice_mut(ndarray::s![.., ..zu.ncols()]).assign(zu);
    let mut offset = zu.ncols();
    for g in zg {
        z.slice_mut(ndarray::s![.., offset..offset + g.ncols()]).assign(g);
        offset += g.ncols();
    }
    let top = thin_svd(z.view()).d[0];
    let lip = 2.0 * top * top / nf;
    let step = 1.0 / lip;

    let mut a = Array1::zeros(zu.ncols());
    let mut b: Vec<Array1<f64>> = zg.iter().map(|g| Array1::zeros(g.ncols())).collect();
    let mut a_prev = a.clone();
    let mut b_prev = b.clone();
    let mut t = 1.0f64;
    let mut best = RefSolution {
        objective: ref_objective(zu, zg, y, lambda, &a, &b),
        a: a.clone(),
        b: b.clone(),
    };
    let mut stall = 0usize;

    for _ in 0..max_iter {
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let w = (t - 1.0) / t_next;
        let ya = &a + &((&a - &a_prev) * w);
        let yb: Vec<Array1<f64>> =
            b.iter().zip(&b_prev).map(|(c, p)| c + &((c - p) * w)).collect();

        let mut r = y.clone();
        r -= &zu.dot(&ya);
        for (g, c) in zg.iter().zip(&yb) {
            r -= &g.dot(c);
        }

        a_prev = a;
        b_prev = b;
        a = &ya + &(zu.t().dot(&r) * (2.0 / nf * step));
        b = zg
            .iter()
            .zip(&yb)
            .map(|(g, c)| {
                let v = c + &(g.t().dot(&r) * (2.0 / nf * step));
                let norm = v.dot(&v).sqrt();
                let thr = step * lambda;
                if norm <= thr {
                    Array1::zeros(v.len())
                } else {
                    v * (1.0 - thr / norm)
                }
            })
            .collect();
        t = t_next;

        let obj = ref_objective(zu, zg, y, lambda, &a, &b);
        if obj < best.objective {
            best = RefSolution { objective: obj, a: a.clone(), b: b.clone() };
            stall = 0;
        } else {
            // momentum restart when acceleration overshoots
            t = 1.0;
            stall += 1;
            if stall > 500 {
                break;
            }
        }
    }
    best
}

/// Cox-de Boor recursion: value of the `i`-th degree-`d` B-spline over
/// `knots` at `x` (half-open interval convention).
pub fn deboor_basis(knots: &[f64], i: usize, d: usize, x: f64) -> f64 {
    if d == 0 {
        return if knots[i] <= x && x < knots[i + 1] { 1.0 } else { 0.0 };
    }
    let mut v = 0.0;
    let left_den = knots[i + d] - knots[i];
    if left_den > 0.0 {
        v += (x - knots[i]) / left_den * deboor_basis(knots, i, d - 1, x);
    }
    let right_den = knots[i + d + 1] - knots[i + 1];
    if right_den > 0.0 {
        v += (knots[i + d + 1] - x) / right_den * deboor_basis(knots, i + 1, d - 1, x);
    }
    v
}

/// Smallest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_min_eigenvalue(a: ArrayView2<'_, f64>) -> f64 {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    let mut m = a.to_owned();
    let scale = m.iter().fold(0.0f64, |acc, &v| acc.max(v.abs())).max(1.0);
    for _ in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(m[[p, q]].abs());
            }
        }
        if off < 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (m[[k, p]], m[[k, q]]);
                    m[[k, p]] = c * akp - s * akq;
                    m[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (m[[p, k]], m[[q, k]]);
                    m[[p, k]] = c * apk - s * aqk;
                    m[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| m[[i, i]]).fold(f64::INFINITY, f64::min)
}
