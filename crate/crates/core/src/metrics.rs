//! Evaluation of fitted models against a known signal.
//!
//! The headline number is a Monte-Carlo estimate of the squared L2
//! distance between a fitted regression function and the true additive
//! signal, integrated over the covariate distribution the training data
//! came from: fresh covariate rows are drawn from the same loadings and
//! noise law (regenerated deterministically from the stored configuration),
//! and the mean squared gap is averaged over them. The fitted function
//! includes its intercept; the true signal has none.
//!
//! The remaining metrics are set-valued: the screening indicator, a
//! strength ranking of components, and intersection-over-union of top-l
//! sets from two rankings.

use ndarray::{Array1, Array2, ArrayView2};
use thiserror::Error;

use crate::hdam::FittedHDAM;
use crate::simgen::{self, SimConfig, SimError, StreamTag};

/// Default number of Monte-Carlo rows.
pub const DEFAULT_N_MC: usize = 10_000;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("shape mismatch: {detail}")]
    Shape { detail: String },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseEstimate {
    pub value: f64,
    pub se: f64,
    pub n_mc: usize,
}

/// Squared-L2 distance of a fitted model from the true signal of `config`,
/// over fresh covariates drawn with `seed`.
pub fn mse_l2(
    fit: &FittedHDAM,
    config: &SimConfig,
    n_mc: usize,
    seed: u64,
) -> Result<MseEstimate, MetricsError> {
    if fit.p() != config.p {
        return Err(MetricsError::Shape {
            detail: format!("model has {} covariates, config has {}", fit.p(), config.p),
        });
    }
    let f = |x: ArrayView2<'_, f64>| fit.predict(x).expect("width checked above");
    mse_l2_fn(f, config, n_mc, seed)
}

/// Same estimate for an arbitrary prediction function (used to check the
/// estimator itself against injected ground truth).
pub fn mse_l2_fn<F>(
    predict: F,
    config: &SimConfig,
    n_mc: usize,
    seed: u64,
) -> Result<MseEstimate, MetricsError>
where
    F: Fn(ArrayView2<'_, f64>) -> Array1<f64>,
{
    if n_mc == 0 {
        return Err(MetricsError::Shape { detail: "n_mc must be at least 1".into() });
    }
    let x = fresh_covariates(config, n_mc, seed)?;
    let fhat = predict(x.view());
    if fhat.len() != n_mc {
        return Err(MetricsError::Shape {
            detail: format!("prediction returned {} values for {} rows", fhat.len(), n_mc),
        });
    }
    let mut gaps = Array1::zeros(n_mc);
    for i in 0..n_mc {
        let d = fhat[i] - simgen::f0(x.row(i));
        gaps[i] = d * d;
    }
    let value = gaps.sum() / n_mc as f64;
    let se = if n_mc > 1 {
        let var =
            gaps.iter().map(|&g| (g - value) * (g - value)).sum::<f64>() / (n_mc as f64 - 1.0);
        (var / n_mc as f64).sqrt()
    } else {
        0.0
    };
    Ok(MseEstimate { value, se, n_mc })
}

/// Fresh covariate rows from the training distribution: the loadings
/// regenerate from `config` (bit-identical to training), while the factor
/// and noise draws come from a dedicated evaluation stream of `seed`.
pub fn fresh_covariates(
    config: &SimConfig,
    rows: usize,
    seed: u64,
) -> Result<Array2<f64>, MetricsError> {
    let coef = simgen::gen_coefficients(config)?;
    let mut rng = simgen::substream(seed, StreamTag::McEval);
    let h = simgen::standard_normal_matrix(&mut rng, rows, config.q);
    let e = simgen::covariate_noise(&mut rng, rows, config.p, &config.sigma_e);
    let mut x = h.dot(&coef.psi_mat);
    if config.alpha != 0.0 {
        x.mapv_inplace(|t| simgen::eta(t, config.alpha));
    }
    x += &e;
    Ok(x)
}

/// True iff the model's active set contains every index in `truth_active`
/// (indices are zero-based).
pub fn screening(fit: &FittedHDAM, truth_active: &[usize]) -> bool {
    let active = fit.active_set();
    truth_active.iter().all(|j| active.contains(j))
}

/// Components ordered by descending strength; ties order by smaller index.
pub fn strength_ranking(fit: &FittedHDAM) -> Vec<(usize, f64)> {
    let mut pairs: Vec<(usize, f64)> =
        fit.components.iter().enumerate().map(|(j, c)| (j, c.strength)).collect();
    pairs.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite strengths").then(a.0.cmp(&b.0)));
    pairs
}

/// Intersection-over-union of the first `l` indices of two rankings
/// (`l` is clipped to each ranking's length; two empty sets count as 1).
pub fn jaccard_topl(rank_a: &[usize], rank_b: &[usize], l: usize) -> f64 {
    let a: std::collections::BTreeSet<usize> =
        rank_a.iter().take(l).copied().collect();
    let b: std::collections::BTreeSet<usize> =
        rank_b.iter().take(l).copied().collect();
    let inter = a.intersection(&b).count();
    let union = a.union(&b).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}
