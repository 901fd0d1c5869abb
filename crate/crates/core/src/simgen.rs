//! Seeded generators for the confounded additive-model designs.
//!
//! The data-generating process: hidden factors `H` (`n x q`, standard
//! normal) act on the covariates through a loading matrix `Psi` (`q x p`)
//! and on the response through a vector `psi` (`q`):
//!
//! ```text
//!   X = eta_alpha(H Psi) + E,          E rows ~ N(0, Sigma_E)
//!   Y = f0(X) + eta_beta(H psi) + e,   e ~ N(0, noise_sd^2)
//! ```
//!
//! `f0` is the sparse additive signal over the first four covariates and
//! `eta_c(t) = (1 - c) t + c |t|` interpolates from the linear factor model
//! (`c = 0`) to a fully misspecified absolute-value link (`c = 1`).
//!
//! Loadings: row `l` of `Psi` is `Uniform[-a_l, a_l] * Bernoulli(prop)`
//! elementwise with `a_l = 1` (equal influence) or `a_l = 1/l` (decreasing
//! influence); `psi ~ Uniform[0, cs]`.
//!
//! Reproducibility: every component draws from its own ChaCha20 stream,
//! keyed by `(seed, component tag)` via `set_stream`, so e.g. coefficients
//! are identical whether drawn standalone or as part of a full dataset.
//! Replicate seeds are derived from a base seed by a splitmix64 mix.

use ndarray::{Array1, Array2, ArrayView1};
use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::io::{self, serde_array1, serde_array2};
use crate::linalg;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid dimensions n = {n}, p = {p}, q = {q}: need n >= 1, p >= 1, q <= min(n, p)")]
    InvalidDim { n: usize, p: usize, q: usize },
    #[error("sparsity proportion {prop} must lie in [0, 1]")]
    InvalidProp { prop: f64 },
    #[error("Toeplitz correlation {rho} must satisfy |rho| < 1")]
    InvalidToeplitz { rho: f64 },
    #[error("confounding strength cs = {cs} must be a finite nonnegative number")]
    InvalidCs { cs: f64 },
    #[error("nonlinearity mix {name} = {value} must lie in [0, 1]")]
    InvalidMix { name: &'static str, value: f64 },
    #[error("noise standard deviation {sd} must be a finite nonnegative number")]
    InvalidNoiseSd { sd: f64 },
}

/// Confounder influence profile on the covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Influence {
    /// Every factor loads with amplitude 1.
    Equal,
    /// Factor `l` loads with amplitude `1 / l`, so the factor spectrum decays.
    Decreasing,
}

/// Idiosyncratic covariate noise covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SigmaE {
    Identity,
    /// `Sigma[i, j] = rho^|i - j|`.
    Toeplitz { rho: f64 },
}

impl SigmaE {
    /// Materializes the covariance as a dense matrix.
    pub fn materialize(&self, p: usize) -> Array2<f64> {
        match self {
            SigmaE::Identity => Array2::eye(p),
            SigmaE::Toeplitz { rho } => {
                Array2::from_shape_fn((p, p), |(i, j)| rho.powi((i as i64 - j as i64).unsigned_abs() as i32))
            }
        }
    }
}

/// Full simulation design. Serializable so configurations can live in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub influence: Influence,
    /// Confounding strength on the response: `psi ~ Uniform[0, cs]`.
    pub cs: f64,
    /// Probability that a loading entry is nonzero.
    pub prop: f64,
    pub sigma_e: SigmaE,
    pub noise_sd: f64,
    /// Covariate-equation nonlinearity mix in `[0, 1]`.
    pub alpha: f64,
    /// Confounding-term nonlinearity mix in `[0, 1]`.
    pub beta: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 100,
            p: 300,
            q: 5,
            influence: Influence::Equal,
            cs: 2.0,
            prop: 1.0,
            sigma_e: SigmaE::Identity,
            noise_sd: 0.5,
            alpha: 0.0,
            beta: 0.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n < 1 || self.p < 1 || self.q > self.n.min(self.p) {
            return Err(SimError::InvalidDim { n: self.n, p: self.p, q: self.q });
        }
        if !(0.0..=1.0).contains(&self.prop) || !self.prop.is_finite() {
            return Err(SimError::InvalidProp { prop: self.prop });
        }
        if let SigmaE::Toeplitz { rho } = self.sigma_e {
            if !(rho.is_finite() && rho.abs() < 1.0) {
                return Err(SimError::InvalidToeplitz { rho });
            }
        }
        if !(self.cs.is_finite() && self.cs >= 0.0) {
            return Err(SimError::InvalidCs { cs: self.cs });
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(SimError::InvalidNoiseSd { sd: self.noise_sd });
        }
        for (name, value) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&value) || !value.is_finite() {
                return Err(SimError::InvalidMix { name, value });
            }
        }
        Ok(())
    }
}

/// Component tags keying the per-seed ChaCha20 sub-streams.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum StreamTag {
    Coefficients = 1,
    LatentFactors = 2,
    CovariateNoise = 3,
    ResponseNoise = 4,
    /// Reserved for Monte-Carlo evaluation draws in the metrics module.
    McEval = 5,
}

/// RNG for one component of one draw.
pub fn substream(seed: u64, tag: StreamTag) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(tag as u64);
    rng
}

/// Derives the seed of replicate `idx` from a base seed (splitmix64 mix, so
/// nearby indices give unrelated streams).
pub fn replicate_seed(base: u64, idx: u64) -> u64 {
    splitmix64(base ^ idx.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Confounder loadings for one draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    /// `q x p` covariate loadings.
    #[serde(with = "serde_array2")]
    pub psi_mat: Array2<f64>,
    /// Length-`q` response loadings.
    #[serde(with = "serde_array1")]
    pub psi_vec: Array1<f64>,
}

/// Ground truth stored next to a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    /// Zero-based indices of the truly active covariates.
    pub active: Vec<usize>,
    pub coefficients: Coefficients,
    pub config: SimConfig,
}

/// One simulated dataset with everything needed to reconstruct it.
#[derive(Debug, Clone)]
pub struct SimDraw {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub h: Array2<f64>,
    pub e_mat: Array2<f64>,
    /// Response noise vector `e`.
    pub noise: Array1<f64>,
    pub truth: SimTruth,
}

/// Draws the loadings `Psi`, `psi` for `config` (deterministic in the seed;
/// the same values appear inside [`gen_dataset`] for the same config).
pub fn gen_coefficients(config: &SimConfig) -> Result<Coefficients, SimError> {
    config.validate()?;
    let mut rng = substream(config.seed, StreamTag::Coefficients);
    let (q, p) = (config.q, config.p);
    let mut psi_mat = Array2::zeros((q, p));
    for l in 0..q {
        let amp = match config.influence {
            Influence::Equal => 1.0,
            Influence::Decreasing => 1.0 / (l + 1) as f64,
        };
        let unif = Uniform::new_inclusive(-amp, amp);
        for j in 0..p {
            let value: f64 = unif.sample(&mut rng);
            let keep: f64 = rng.gen();
            psi_mat[[l, j]] = if keep < config.prop { value } else { 0.0 };
        }
    }
    let mut psi_vec = Array1::zeros(q);
    if config.cs > 0.0 {
        let unif = Uniform::new_inclusive(0.0, config.cs);
        for l in 0..q {
            psi_vec[l] = unif.sample(&mut rng);
        }
    }
    Ok(Coefficients { psi_mat, psi_vec })
}

/// The nonlinearity mix `eta_c(t) = (1 - c) t + c |t|`.
pub fn eta(t: f64, c: f64) -> f64 {
    (1.0 - c) * t + c * t.abs()
}

/// Additive signal component `j` (zero-based) of the first four covariates.
pub fn f0_component(j: usize, x: f64) -> f64 {
    match j {
        0 => -(2.0 * x).sin(),
        1 => 2.0 - 2.0 * (x + 0.5).tanh(),
        2 => x,
        3 => 4.0 / (x.exp() + (-x).exp()),
        _ => 0.0,
    }
}

/// The full additive signal `f0(x) = sum_{j < 4} f0_component(j, x_j)`
/// (no intercept). Designs with fewer than four covariates truncate the sum.
pub fn f0(x_row: ArrayView1<'_, f64>) -> f64 {
    (0..x_row.len().min(4)).map(|j| f0_component(j, x_row[j])).sum()
}

pub(crate) fn standard_normal_matrix(rng: &mut ChaCha20Rng, n: usize, p: usize) -> Array2<f64> {
    let mut out = Array2::zeros((n, p));
    for i in 0..n {
        for j in 0..p {
            out[[i, j]] = StandardNormal.sample(rng);
        }
    }
    out
}

/// Draws covariate noise rows from `N(0, Sigma_E)` via the upper Cholesky
/// factor of the materialized covariance (`E = Z R` with `Sigma = R' R`).
pub(crate) fn covariate_noise(rng: &mut ChaCha20Rng, n: usize, p: usize, sigma: &SigmaE) -> Array2<f64> {
    let z = standard_normal_matrix(rng, n, p);
    match sigma {
        SigmaE::Identity => z,
        SigmaE::Toeplitz { .. } => {
            let cov = sigma.materialize(p);
            let (r, _) = linalg::cholesky_upper(cov.view())
                .expect("Toeplitz(|rho| < 1) covariance is positive definite");
            z.dot(&r)
        }
    }
}

/// Generates a complete dataset plus its ground truth.
pub fn gen_dataset(config: &SimConfig) -> Result<SimDraw, SimError> {
    let coefficients = gen_coefficients(config)?;
    let (n, p, q) = (config.n, config.p, config.q);

    let mut rng_h = substream(config.seed, StreamTag::LatentFactors);
    let h = standard_normal_matrix(&mut rng_h, n, q);

    let mut rng_e = substream(config.seed, StreamTag::CovariateNoise);
    let e_mat = covariate_noise(&mut rng_e, n, p, &config.sigma_e);

    let mut x = h.dot(&coefficients.psi_mat);
    if config.alpha != 0.0 {
        x.mapv_inplace(|t| eta(t, config.alpha));
    }
    x += &e_mat;

    let mut rng_y = substream(config.seed, StreamTag::ResponseNoise);
    let mut noise = Array1::zeros(n);
    for v in noise.iter_mut() {
        let draw: f64 = StandardNormal.sample(&mut rng_y);
        *v = config.noise_sd * draw;
    }

    let conf_term = h.dot(&coefficients.psi_vec);
    let mut y = Array1::zeros(n);
    for i in 0..n {
        y[i] = f0(x.row(i)) + eta(conf_term[i], config.beta) + noise[i];
    }

    let truth =
        SimTruth { active: (0..p.min(4)).collect(), coefficients, config: config.clone() };
    Ok(SimDraw { x, y, h, e_mat, noise, truth })
}

impl SimDraw {
    /// Writes `X.csv`, `Y.csv` (headerless numeric) and `truth.json` into
    /// `dir`.
    pub fn export(&self, dir: &Path) -> Result<(), io::IoError> {
        io::write_matrix_csv(&dir.join("X.csv"), &self.x)?;
        io::write_vector_csv(&dir.join("Y.csv"), &self.y)?;
        let truth = serde_json::to_string_pretty(&self.truth).map_err(io::IoError::from_json)?;
        std::fs::write(dir.join("truth.json"), truth).map_err(io::IoError::from)?;
        Ok(())
    }
}
