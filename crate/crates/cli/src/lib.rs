//! Command-line front end for the spectral deconfounding toolkit.
//!
//! Five subcommands cover the workflow end to end: `simulate` draws a
//! synthetic dataset from a JSON configuration, `fit` trains one sparse
//! additive model at fixed `(K, lambda)`, `cv` selects those parameters by
//! two-stage cross-validation and refits, `experiment` sweeps the named
//! benchmark scenarios into long-format CSV, and `spectrum` exports the
//! singular values of a design matrix. All matrix I/O is headerless CSV
//! with shortest round-trip number formatting; models and configurations
//! travel as JSON.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors, 3 for
//! data-shape errors, 4 for numerical failures.

mod experiment;

use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use thiserror::Error;

use specdeconf::basis::BasisError;
use specdeconf::diagnostics;
use specdeconf::grouplasso::{GroupLassoError, SolveOpts};
use specdeconf::hdam::{self, FitError, FitMethod, FitOptions, FittedHDAM};
use specdeconf::io::{self, IoError};
use specdeconf::metrics::{strength_ranking, MetricsError};
use specdeconf::modelselect::{cv_fit, CvError, CvPlan};
use specdeconf::simgen::{gen_dataset, SimConfig, SimError};
use specdeconf::spectral::SpectralError;

pub use experiment::ExperimentArgs;

/// Top-level error with the process exit code baked in.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, unreadable inputs, or invalid configuration (exit 2).
    #[error("{0}")]
    Usage(String),
    /// Input data with the wrong shape or unparseable contents (exit 3).
    #[error("{0}")]
    Data(String),
    /// Numerical failure: non-convergence, degenerate or singular inputs
    /// (exit 4).
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "specdeconf",
    version,
    about = "Spectral deconfounding for high-dimensional sparse additive models"
)]
pub struct Cli {
    /// Worker threads for parallel sections. Defaults to the
    /// SPECDECONF_JOBS environment variable, then to all cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset from a JSON configuration.
    Simulate(SimulateArgs),
    /// Fit a sparse additive model at a fixed spline count and penalty.
    Fit(FitArgs),
    /// Pick the spline count and penalty by cross-validation, then refit.
    Cv(CvArgs),
    /// Run a named benchmark scenario and write long-format metrics.
    Experiment(ExperimentArgs),
    /// Write the singular values of a design matrix, largest first.
    Spectrum(SpectrumArgs),
}

#[derive(Debug, Parser)]
pub struct SimulateArgs {
    /// Simulation configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; receives X.csv, Y.csv and truth.json.
    #[arg(long)]
    pub out: PathBuf,
}

/// Estimator selector shared by `fit` and `cv`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Trim-transform the design before the group lasso.
    Deconfounded,
    /// Plain group lasso on the raw design.
    Naive,
    /// Group lasso with an unpenalized estimated-factor block.
    EstimatedFactors,
}

#[derive(Debug, Parser)]
pub struct FitArgs {
    /// Design matrix (headerless CSV, one row per sample).
    #[arg(long)]
    pub x: PathBuf,
    /// Response vector (single-column CSV).
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Deconfounded)]
    pub method: MethodArg,
    /// Spline functions per covariate.
    #[arg(long, default_value_t = 7)]
    pub k: usize,
    /// Group-lasso penalty level.
    #[arg(long)]
    pub lambda: f64,
    /// Trim quantile for --method deconfounded.
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    /// Factor count for --method estimated-factors; defaults to the
    /// eigenvalue-ratio rule.
    #[arg(long)]
    pub q: Option<usize>,
    /// Leave the design columns uncentered.
    #[arg(long)]
    pub no_center: bool,
    /// Keep the final iterate instead of failing when the sweep budget
    /// runs out.
    #[arg(long)]
    pub allow_nonconverged: bool,
    /// Solver convergence threshold.
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    /// Solver sweep budget.
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    /// Output model path (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Parser)]
pub struct CvArgs {
    /// Design matrix (headerless CSV, one row per sample).
    #[arg(long)]
    pub x: PathBuf,
    /// Response vector (single-column CSV).
    #[arg(long)]
    pub y: PathBuf,
    /// Estimator; overrides the method in --plan when both are given.
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Trim quantile for --method deconfounded.
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    /// Factor count for --method estimated-factors; defaults to the
    /// eigenvalue-ratio rule.
    #[arg(long)]
    pub q: Option<usize>,
    /// Cross-validation plan (JSON); defaults are used when omitted.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Override the plan's fold count.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Override the plan's spline-count grid (comma-separated, ascending).
    #[arg(long)]
    pub k_grid: Option<String>,
    /// Override the plan's fold-assignment seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output model path (JSON).
    #[arg(long)]
    pub out_model: PathBuf,
    /// Output report path (CSV).
    #[arg(long)]
    pub out_report: PathBuf,
}

#[derive(Debug, Parser)]
pub struct SpectrumArgs {
    /// Design matrix (headerless CSV, one row per sample).
    #[arg(long)]
    pub x: PathBuf,
    /// Subtract column means before the decomposition.
    #[arg(long)]
    pub center: bool,
    /// Output path (single-column CSV, descending).
    #[arg(long)]
    pub out: PathBuf,
}

/// Dispatches a parsed command line. Errors carry their exit code.
pub fn run(cli: Cli) -> Result<(), CliError> {
    init_jobs(cli.jobs)?;
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Fit(args) => cmd_fit(&args),
        Command::Cv(args) => cmd_cv(&args),
        Command::Experiment(args) => experiment::cmd_experiment(&args),
        Command::Spectrum(args) => cmd_spectrum(&args),
    }
}

/// Sizes the global thread pool from --jobs or SPECDECONF_JOBS. Later
/// calls in the same process keep the first pool, which is fine for a
/// one-command binary.
fn init_jobs(flag: Option<usize>) -> Result<(), CliError> {
    let jobs = match flag {
        Some(j) => Some(j),
        None => match std::env::var("SPECDECONF_JOBS") {
            Ok(raw) => Some(raw.trim().parse::<usize>().map_err(|_| {
                CliError::Usage(format!(
                    "SPECDECONF_JOBS must be a positive integer, got {raw:?}"
                ))
            })?),
            Err(_) => None,
        },
    };
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".to_string()));
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.config.display())))?;
    let config: SimConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.config.display())))?;
    let draw = gen_dataset(&config).map_err(map_sim)?;
    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.out.display())))?;
    draw.export(&args.out).map_err(map_io)?;
    println!(
        "wrote X.csv ({} x {}), Y.csv, truth.json to {}",
        config.n,
        config.p,
        args.out.display()
    );
    Ok(())
}

fn cmd_fit(args: &FitArgs) -> Result<(), CliError> {
    let (x, y) = read_design(&args.x, &args.y)?;
    let method = build_method(args.method, args.rho, args.q);
    let opts = FitOptions {
        center_columns: !args.no_center,
        allow_nonconverged: args.allow_nonconverged,
        solver: SolveOpts { tol: args.tol, max_iter: args.max_iter, ..SolveOpts::default() },
    };
    let fit = hdam::fit(x.view(), y.view(), &method, args.k, args.lambda, &opts)
        .map_err(map_fit)?;
    fit.save(&args.out).map_err(map_fit)?;
    print_fit_summary(&fit);
    println!("model written to {}", args.out.display());
    Ok(())
}

fn cmd_cv(args: &CvArgs) -> Result<(), CliError> {
    let (x, y) = read_design(&args.x, &args.y)?;
    let mut plan: CvPlan = match &args.plan {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => CvPlan::default(),
    };
    if let Some(method) = args.method {
        plan.method = build_method(method, args.rho, args.q);
    }
    if let Some(folds) = args.folds {
        plan.folds = folds;
    }
    if let Some(seed) = args.seed {
        plan.seed = seed;
    }
    if let Some(grid) = &args.k_grid {
        plan.k_grid = parse_usize_list(grid, "--k-grid")?;
    }
    let (fit, report) = cv_fit(x.view(), y.view(), &plan, &FitOptions::default())
        .map_err(map_cv)?;
    report.write_csv(&args.out_report).map_err(map_cv)?;
    fit.save(&args.out_model).map_err(map_fit)?;
    println!(
        "selected k = {}, lambda = {:.6e} (cv error {:.6}, se {:.4})",
        report.selection.k,
        report.selection.lambda,
        report.selection.mean_err,
        report.selection.se_err
    );
    print_fit_summary(&fit);
    println!(
        "report written to {}, model to {}",
        args.out_report.display(),
        args.out_model.display()
    );
    Ok(())
}

fn cmd_spectrum(args: &SpectrumArgs) -> Result<(), CliError> {
    let mut x = io::read_matrix_csv(&args.x).map_err(map_io)?;
    if args.center {
        center_columns(&mut x);
    }
    let d = diagnostics::singular_values(x.view());
    io::write_vector_csv(&args.out, &d).map_err(map_io)?;
    println!("wrote {} singular values to {}", d.len(), args.out.display());
    Ok(())
}

/// Loads a design matrix and response and checks that the row counts agree.
fn read_design(
    x_path: &PathBuf,
    y_path: &PathBuf,
) -> Result<(Array2<f64>, ndarray::Array1<f64>), CliError> {
    let x = io::read_matrix_csv(x_path).map_err(map_io)?;
    let y = io::read_vector_csv(y_path).map_err(map_io)?;
    if y.len() != x.nrows() {
        return Err(CliError::Data(format!(
            "{} has {} rows but {} has {} entries",
            x_path.display(),
            x.nrows(),
            y_path.display(),
            y.len()
        )));
    }
    Ok((x, y))
}

fn center_columns(x: &mut Array2<f64>) {
    let n = x.nrows() as f64;
    for mut col in x.columns_mut() {
        let mean = col.sum() / n;
        col.mapv_inplace(|v| v - mean);
    }
}

fn build_method(arg: MethodArg, rho: f64, q: Option<usize>) -> FitMethod {
    match arg {
        MethodArg::Deconfounded => FitMethod::Deconfounded { rho },
        MethodArg::Naive => FitMethod::Naive,
        MethodArg::EstimatedFactors => FitMethod::EstimatedFactors { q },
    }
}

fn method_label(method: &FitMethod) -> String {
    match method {
        FitMethod::Deconfounded { rho } => format!("deconfounded (rho = {rho})"),
        FitMethod::Naive => "naive".to_string(),
        FitMethod::EstimatedFactors { q: Some(q) } => {
            format!("estimated-factors (q = {q})")
        }
        FitMethod::EstimatedFactors { q: None } => {
            "estimated-factors (q by eigenvalue ratio)".to_string()
        }
    }
}

fn print_fit_summary(fit: &FittedHDAM) {
    println!("method: {}", method_label(&fit.method));
    println!(
        "k = {}, lambda = {:.6e}, converged = {} after {} sweeps, kkt residual {:.2e}",
        fit.k, fit.lambda, fit.fit_info.converged, fit.fit_info.iterations, fit.fit_info.kkt_residual
    );
    println!("active set: {} of {} covariates", fit.active_set().len(), fit.p());
    println!("top strengths (column: size):");
    for (j, s) in strength_ranking(fit).into_iter().take(10) {
        println!("  {j}: {s:.6}");
    }
}

fn parse_usize_list(text: &str, flag: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|tok| {
            tok.trim().parse::<usize>().map_err(|_| {
                CliError::Usage(format!("{flag}: could not parse {:?} as an integer", tok.trim()))
            })
        })
        .collect()
}

fn parse_f64_list(text: &str, flag: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|tok| {
            tok.trim().parse::<f64>().map_err(|_| {
                CliError::Usage(format!("{flag}: could not parse {:?} as a number", tok.trim()))
            })
        })
        .collect()
}

fn map_io(e: IoError) -> CliError {
    match e {
        IoError::File { .. } => CliError::Usage(e.to_string()),
        IoError::Parse { .. } | IoError::Ragged { .. } | IoError::Empty { .. } => {
            CliError::Data(e.to_string())
        }
        IoError::Json(_) => CliError::Data(e.to_string()),
    }
}

fn map_sim(e: SimError) -> CliError {
    CliError::Usage(e.to_string())
}

fn map_basis(column: usize, e: &BasisError) -> CliError {
    let msg = format!("covariate {column}: {e}");
    match e {
        BasisError::InvalidK { .. } => CliError::Usage(msg),
        BasisError::TooFewSamples { .. } => CliError::Data(msg),
        BasisError::DegenerateColumn { .. } | BasisError::SingularGram => {
            CliError::Numerical(msg)
        }
    }
}

fn map_spectral(e: &SpectralError) -> CliError {
    let msg = e.to_string();
    match e {
        SpectralError::InvalidRho { .. } | SpectralError::InvalidQ { .. } => {
            CliError::Usage(msg)
        }
        SpectralError::RowMismatch { .. } => CliError::Data(msg),
        SpectralError::ZeroMatrix | SpectralError::RankDeficient { .. } => {
            CliError::Numerical(msg)
        }
    }
}

fn map_solver(e: &GroupLassoError) -> CliError {
    let msg = e.to_string();
    match e {
        GroupLassoError::LambdaNegative { .. } => CliError::Usage(msg),
        GroupLassoError::ShapeMismatch { .. } => CliError::Data(msg),
        GroupLassoError::NotConverged { .. } => CliError::Numerical(msg),
    }
}

fn map_fit(e: FitError) -> CliError {
    match &e {
        FitError::Basis { column, source } => map_basis(*column, source),
        FitError::Spectral(s) => map_spectral(s),
        FitError::Shape { .. } => CliError::Data(e.to_string()),
        FitError::NotConverged { .. } => CliError::Numerical(e.to_string()),
        FitError::Solver(s) => map_solver(s),
        FitError::Model { .. } => CliError::Data(e.to_string()),
    }
}

fn map_cv(e: CvError) -> CliError {
    match e {
        CvError::InfeasiblePlan { .. } | CvError::InvalidPlan { .. } => {
            CliError::Usage(e.to_string())
        }
        CvError::Fit(inner) => map_fit(inner),
        CvError::Solver(inner) => map_solver(&inner),
        CvError::Report { .. } => CliError::Data(e.to_string()),
    }
}

fn map_metrics(e: MetricsError) -> CliError {
    match e {
        MetricsError::Shape { .. } => CliError::Data(e.to_string()),
        MetricsError::Sim(inner) => map_sim(inner),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), 2);
        assert_eq!(CliError::Data(String::new()).exit_code(), 3);
        assert_eq!(CliError::Numerical(String::new()).exit_code(), 4);
    }

    #[test]
    fn list_parsers_accept_spaces_and_reject_garbage() {
        assert_eq!(parse_usize_list("5, 7,9", "--k-grid").unwrap(), vec![5, 7, 9]);
        assert_eq!(parse_f64_list("0,0.5, 1", "--grid").unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(parse_usize_list("5,x", "--k-grid").is_err());
        assert!(parse_f64_list("a", "--grid").is_err());
    }

    #[test]
    fn solver_and_fit_errors_map_to_documented_codes() {
        let usage = map_fit(FitError::Spectral(SpectralError::InvalidRho { rho: 0.0, r: 5 }));
        assert_eq!(usage.exit_code(), 2);
        let shape = map_fit(FitError::Shape { detail: "x".to_string() });
        assert_eq!(shape.exit_code(), 3);
        let numerical = map_fit(FitError::NotConverged { iterations: 10 });
        assert_eq!(numerical.exit_code(), 4);
    }

    #[test]
    fn cli_parses_every_subcommand() {
        use clap::Parser;
        let cli = Cli::try_parse_from([
            "specdeconf", "fit", "--x", "x.csv", "--y", "y.csv", "--lambda", "0.3",
            "--out", "m.json",
        ])
        .unwrap();
        match cli.command {
            Command::Fit(args) => {
                assert_eq!(args.k, 7);
                assert_eq!(args.method, MethodArg::Deconfounded);
            }
            _ => panic!("expected fit"),
        }
        assert!(Cli::try_parse_from(["specdeconf", "experiment", "--name", "bogus", "--out", "o"])
            .is_err());
        assert!(Cli::try_parse_from([
            "specdeconf", "spectrum", "--x", "x.csv", "--center", "--out", "s.csv",
        ])
        .is_ok());
    }
}
