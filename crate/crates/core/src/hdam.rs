//! High-dimensional additive model fitting.
//!
//! Each covariate gets its own cubic B-spline expansion; the expansions
//! enter a group lasso whose loss is measured after a spectral transform
//! of the regression system. Three estimators share the pipeline:
//!
//! - **deconfounded**: trim transform of the (centered) design, shrinking
//!   the leading singular directions that hidden confounders inflate;
//! - **naive**: identity transform, the plain sparse additive fit;
//! - **estimated factors**: identity transform, but the unpenalized block
//!   is augmented with scaled leading left singular vectors of the design
//!   standing in for the hidden factors.
//!
//! A fitted model stores raw-coordinate spline coefficients per covariate
//! with the knots used to build them, so prediction needs nothing but the
//! model file. Factor coefficients are training-sample-specific and are
//! excluded from prediction on new rows.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::basis::{self, BasisError, BasisSpec, OrthoBasis};
use crate::grouplasso::{self, GroupLassoError, GroupProblem, SolveOpts};
use crate::io::serde_array1;
use crate::linalg;
use crate::spectral::{self, SpectralError, SpectralTransform};

/// Version stamp written into every model file.
pub const SCHEMA_VERSION: u32 = 1;

/// A component is reported active when its strength exceeds this fraction
/// of the largest strength.
pub const ACTIVE_REL_THRESHOLD: f64 = 1e-10;

/// Default trim quantile for the deconfounded method.
pub const DEFAULT_RHO: f64 = 0.5;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("covariate {column}: {source}")]
    Basis {
        column: usize,
        #[source]
        source: BasisError,
    },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("shape mismatch: {detail}")]
    Shape { detail: String },
    #[error("solver did not converge within {iterations} sweeps")]
    NotConverged { iterations: usize },
    #[error(transparent)]
    Solver(GroupLassoError),
    #[error("model file: {detail}")]
    Model { detail: String },
}

/// Estimator choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitMethod {
    /// Spectral trim transform at quantile `rho` before the group lasso.
    Deconfounded { rho: f64 },
    /// No transform.
    Naive,
    /// Unpenalized estimated-factor block; `q = None` picks the number of
    /// factors by the eigenvalue-ratio rule. A fitted model records the
    /// resolved count.
    EstimatedFactors { q: Option<usize> },
}

impl Default for FitMethod {
    fn default() -> Self {
        FitMethod::Deconfounded { rho: DEFAULT_RHO }
    }
}

/// Knobs shared by all fit entry points.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Subtract column means from the design before knots, transform and
    /// bases; stored in the model and re-applied at prediction.
    pub center_columns: bool,
    /// Return the final iterate instead of an error when the sweep budget
    /// runs out (`fit_info.converged` records what happened).
    pub allow_nonconverged: bool,
    pub solver: SolveOpts,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { center_columns: true, allow_nonconverged: false, solver: SolveOpts::default() }
    }
}

/// One covariate's fitted spline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentFit {
    pub basis: BasisSpec,
    /// Raw-coordinate spline coefficients, length `k`.
    #[serde(with = "serde_array1")]
    pub beta: Array1<f64>,
    /// Component size `(1/sqrt(n)) || B_j beta_j ||` on the training rows.
    pub strength: f64,
}

/// Solver summary stored with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub kkt_residual: f64,
}

/// A fitted sparse additive model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedHDAM {
    pub schema_version: u32,
    pub method: FitMethod,
    /// Spline functions per covariate.
    pub k: usize,
    pub lambda: f64,
    pub beta0: f64,
    /// Column means subtracted before basis evaluation (empty when column
    /// centering was disabled).
    pub centering: Vec<f64>,
    /// Coefficients of the estimated-factor block (empty otherwise). Not
    /// used by prediction.
    pub gamma: Vec<f64>,
    pub components: Vec<ComponentFit>,
    pub fit_info: FitInfo,
}

/// Fits with the spectral trim transform at quantile `rho`.
pub fn fit_deconfounded(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    k: usize,
    lambda: f64,
    rho: f64,
    opts: &FitOptions,
) -> Result<FittedHDAM, FitError> {
    fit(x, y, &FitMethod::Deconfounded { rho }, k, lambda, opts)
}

/// Fits without any transform.
pub fn fit_naive(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    k: usize,
    lambda: f64,
    opts: &FitOptions,
) -> Result<FittedHDAM, FitError> {
    fit(x, y, &FitMethod::Naive, k, lambda, opts)
}

/// Fits with an unpenalized estimated-factor block of `q` columns
/// (eigenvalue-ratio estimate when `None`).
pub fn fit_estimated_factors(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    k: usize,
    lambda: f64,
    q: Option<usize>,
    opts: &FitOptions,
) -> Result<FittedHDAM, FitError> {
    fit(x, y, &FitMethod::EstimatedFactors { q }, k, lambda, opts)
}

/// Shared fitting pipeline.
pub fn fit(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    method: &FitMethod,
    k: usize,
    lambda: f64,
    opts: &FitOptions,
) -> Result<FittedHDAM, FitError> {
    let (n, p) = x.dim();
    if n == 0 || p == 0 {
        return Err(FitError::Shape { detail: format!("design is {n}x{p}") });
    }
    if y.len() != n {
        return Err(FitError::Shape {
            detail: format!("y has {} entries for a design with {} rows", y.len(), n),
        });
    }

    let (xc, centering) = center_design(x, opts.center_columns);
    let built = build_bases(&xc, k)?;
    let (transform, extra, resolved_method) = resolve_method(&xc, method)?;

    let groups: Vec<Array2<f64>> = built.iter().map(|(_, o)| o.b_tilde.clone()).collect();
    let problem =
        GroupProblem::with_unpenalized(&transform, y, &groups, extra.as_ref().map(|e| e.view()), lambda)
            .map_err(FitError::Solver)?;
    drop(groups);

    let solution = match grouplasso::solve(&problem, &opts.solver) {
        Ok(s) => s,
        Err(GroupLassoError::NotConverged { solution, .. }) if opts.allow_nonconverged => *solution,
        Err(GroupLassoError::NotConverged { iterations, .. }) => {
            return Err(FitError::NotConverged { iterations })
        }
        Err(e) => return Err(FitError::Solver(e)),
    };
    let kkt_residual = grouplasso::kkt_residual(&problem, &solution);

    let sqrt_n = (n as f64).sqrt();
    let components = built
        .iter()
        .zip(solution.beta_tilde.iter())
        .map(|((spec, ortho), bt)| {
            let strength = if bt.iter().all(|&v| v == 0.0) {
                0.0
            } else {
                let fitted = ortho.b_tilde.dot(bt);
                fitted.dot(&fitted).sqrt() / sqrt_n
            };
            let mut beta = bt.clone();
            linalg::solve_upper_inplace(ortho.r.view(), &mut beta);
            ComponentFit { basis: spec.clone(), beta, strength }
        })
        .collect();

    Ok(FittedHDAM {
        schema_version: SCHEMA_VERSION,
        method: resolved_method,
        k,
        lambda,
        beta0: solution.beta0,
        centering,
        gamma: solution.gamma.to_vec(),
        components,
        fit_info: FitInfo {
            iterations: solution.iterations,
            converged: solution.converged,
            objective: solution.objective,
            kkt_residual,
        },
    })
}

pub(crate) fn center_design(x: ArrayView2<'_, f64>, center: bool) -> (Array2<f64>, Vec<f64>) {
    let mut xc = x.to_owned();
    if !center {
        return (xc, Vec::new());
    }
    let means = x.mean_axis(Axis(0)).expect("n >= 1");
    for (j, mut col) in xc.columns_mut().into_iter().enumerate() {
        let m = means[j];
        col.mapv_inplace(|v| v - m);
    }
    (xc, means.to_vec())
}

fn build_bases(xc: &Array2<f64>, k: usize) -> Result<Vec<(BasisSpec, OrthoBasis)>, FitError> {
    (0..xc.ncols())
        .into_par_iter()
        .map(|j| {
            let col = xc.column(j);
            let spec =
                basis::quantile_knots(col, k).map_err(|source| FitError::Basis { column: j, source })?;
            let b = basis::design_matrix(col, &spec);
            let ortho =
                basis::orthonormalize(&b).map_err(|source| FitError::Basis { column: j, source })?;
            Ok((spec, ortho))
        })
        .collect()
}

/// Builds the transform and optional unpenalized factor block; returns the
/// method with an estimated factor count resolved to a concrete value.
pub(crate) fn resolve_method(
    xc: &Array2<f64>,
    method: &FitMethod,
) -> Result<(SpectralTransform, Option<Array2<f64>>, FitMethod), FitError> {
    let n = xc.nrows();
    match *method {
        FitMethod::Deconfounded { rho } => {
            Ok((spectral::trim_transform(xc.view(), rho)?, None, method.clone()))
        }
        FitMethod::Naive => Ok((SpectralTransform::identity(n), None, FitMethod::Naive)),
        FitMethod::EstimatedFactors { q } => {
            let svd = spectral::thin_svd(xc.view());
            let r = svd.r();
            let q_hat = match q {
                Some(v) => {
                    if v == 0 || v >= r {
                        return Err(FitError::Spectral(SpectralError::InvalidQ { q: v, r }));
                    }
                    v
                }
                None => spectral::eigenvalue_ratio_from_spectrum(svd.d.view())?,
            };
            let h_hat = svd.u.slice(ndarray::s![.., ..q_hat]).to_owned() * (n as f64).sqrt();
            Ok((SpectralTransform::identity(n), Some(h_hat), FitMethod::EstimatedFactors { q: Some(q_hat) }))
        }
    }
}

impl FittedHDAM {
    /// Number of covariates the model was trained on.
    pub fn p(&self) -> usize {
        self.components.len()
    }

    /// Per-covariate component strengths.
    pub fn strengths(&self) -> Array1<f64> {
        Array1::from_iter(self.components.iter().map(|c| c.strength))
    }

    /// Indices whose strength exceeds [`ACTIVE_REL_THRESHOLD`] times the
    /// largest strength (empty when every component is zero).
    pub fn active_set(&self) -> Vec<usize> {
        let max = self.components.iter().map(|c| c.strength).fold(0.0f64, f64::max);
        if max <= 0.0 {
            return Vec::new();
        }
        let thr = ACTIVE_REL_THRESHOLD * max;
        (0..self.p()).filter(|&j| self.components[j].strength > thr).collect()
    }

    /// `beta0 + sum_j f_j(x_ij)`. The estimated-factor block, when present,
    /// is deliberately not part of prediction.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>, FitError> {
        if x.ncols() != self.p() {
            return Err(FitError::Shape {
                detail: format!("model has {} covariates, input has {}", self.p(), x.ncols()),
            });
        }
        let mut out = Array1::from_elem(x.nrows(), self.beta0);
        for (j, comp) in self.components.iter().enumerate() {
            if comp.beta.iter().all(|&v| v == 0.0) {
                continue;
            }
            let shift = self.centering.get(j).copied().unwrap_or(0.0);
            accumulate_component(comp, shift, x.column(j), &mut out);
        }
        Ok(out)
    }

    /// One covariate's fitted function at the given values (no intercept).
    pub fn predict_component(
        &self,
        j: usize,
        x_col: ArrayView1<'_, f64>,
    ) -> Result<Array1<f64>, FitError> {
        let comp = self.components.get(j).ok_or_else(|| FitError::Shape {
            detail: format!("component {j} of a model with {} covariates", self.p()),
        })?;
        let shift = self.centering.get(j).copied().unwrap_or(0.0);
        let mut out = Array1::zeros(x_col.len());
        accumulate_component(comp, shift, x_col, &mut out);
        Ok(out)
    }

    /// Serializes the model (stable field order, shortest round-trip floats,
    /// trailing newline).
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, FitError> {
        let model: FittedHDAM = serde_json::from_str(text)
            .map_err(|e| FitError::Model { detail: e.to_string() })?;
        if model.schema_version != SCHEMA_VERSION {
            return Err(FitError::Model {
                detail: format!(
                    "schema version {} (this build reads {})",
                    model.schema_version, SCHEMA_VERSION
                ),
            });
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), FitError> {
        std::fs::write(path, self.to_json())
            .map_err(|e| FitError::Model { detail: format!("{}: {e}", path.display()) })
    }

    pub fn load(path: &Path) -> Result<Self, FitError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FitError::Model { detail: format!("{}: {e}", path.display()) })?;
        Self::from_json(&text)
    }
}

fn accumulate_component(
    comp: &ComponentFit,
    shift: f64,
    x_col: ArrayView1<'_, f64>,
    out: &mut Array1<f64>,
) {
    for (i, &xv) in x_col.iter().enumerate() {
        let (off, w) = comp.basis.eval_local(xv - shift);
        let mut acc = 0.0;
        for t in 0..4 {
            acc += w[t] * comp.beta[off + t];
        }
        out[i] += acc;
    }
}
