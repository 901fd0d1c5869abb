//! Named benchmark scenarios: grids of simulation configurations crossed
//! with the three estimation methods, replicated under fresh seeds and
//! scored on fresh Monte Carlo draws.
//!
//! Each scenario varies one generator knob over a grid while the rest stay
//! at documented defaults. Every (cell, replicate) pair simulates one
//! dataset, runs the full cross-validated pipeline once per method, and
//! emits six metric rows per method into a long-format CSV with columns
//! `scenario,method,replicate,metric,value`. Row order is deterministic:
//! cells in grid order, replicates ascending, methods and metrics in fixed
//! order — never completion order.

use std::fs;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use rayon::prelude::*;

use specdeconf::hdam::{FitMethod, FitOptions};
use specdeconf::metrics::{mse_l2, screening};
use specdeconf::modelselect::{cv_fit, CvPlan};
use specdeconf::simgen::{gen_dataset, replicate_seed, Influence, SigmaE, SimConfig};

use crate::{map_cv, map_metrics, map_sim, parse_f64_list, parse_usize_list, CliError};

/// Replicates at full scale and under --desk-scale.
const FULL_REPLICATES: usize = 100;
const DESK_REPLICATES: usize = 20;

/// Desk-scale problem sizes (the acceptance-suite sizes).
const DESK_N: usize = 150;
const DESK_P: usize = 300;

/// Metric rows written per (cell, method, replicate).
const METRICS: [&str; 6] =
    ["mse", "mse_se", "active_size", "screening", "k_selected", "lambda_selected"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioName {
    /// Sample size sweep at fixed p = 300.
    VarN,
    /// Dimension sweep at fixed n = 300.
    VarP,
    /// Confounding-strength sweep at n = 400, p = 500.
    VarCs,
    /// Loading-sparsity sweep at n = 400, p = 500.
    VarProp,
    /// Nonlinearity mixes over an (alpha, beta) grid at n = 400, p = 500.
    NonlinearGrid,
}

impl ScenarioName {
    fn label(self) -> &'static str {
        match self {
            ScenarioName::VarN => "var-n",
            ScenarioName::VarP => "var-p",
            ScenarioName::VarCs => "var-cs",
            ScenarioName::VarProp => "var-prop",
            ScenarioName::NonlinearGrid => "nonlinear-grid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InfluenceArg {
    Equal,
    Decreasing,
    /// Run both settings as separate cells.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SigmaArg {
    Identity,
    Toeplitz,
}

#[derive(Debug, Parser)]
pub struct ExperimentArgs {
    /// Scenario to run.
    #[arg(long, value_enum)]
    pub name: ScenarioName,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Replicates per cell (default 100, or 20 with --desk-scale).
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Base seed; every (cell, replicate) derives its own stream from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Shrink sample sizes and replicate counts to desk scale
    /// (n = 150, p = 300, 20 replicates).
    #[arg(long)]
    pub desk_scale: bool,
    /// Confounding-influence setting(s) to run.
    #[arg(long, value_enum, default_value_t = InfluenceArg::Both)]
    pub influence: InfluenceArg,
    /// Idiosyncratic-noise covariance.
    #[arg(long, value_enum, default_value_t = SigmaArg::Identity)]
    pub sigma_e: SigmaArg,
    /// Decay of the Toeplitz covariance (used with --sigma-e toeplitz).
    #[arg(long, default_value_t = 0.8)]
    pub rho_e: f64,
    /// Override the grid of the scenario's varying parameter
    /// (comma-separated values; the axis values for nonlinear-grid).
    #[arg(long)]
    pub grid: Option<String>,
    /// Override the base sample count.
    #[arg(long)]
    pub n: Option<usize>,
    /// Override the base covariate count.
    #[arg(long)]
    pub p: Option<usize>,
    /// Override the confounder count.
    #[arg(long)]
    pub q: Option<usize>,
    /// Monte Carlo draws per MSE estimate.
    #[arg(long, default_value_t = 10_000)]
    pub n_mc: usize,
    /// Override the cross-validation spline-count grid.
    #[arg(long)]
    pub k_grid: Option<String>,
    /// Override the cross-validation fold count.
    #[arg(long)]
    pub folds: Option<usize>,
}

/// One grid cell: a fully specified generator configuration (seed filled in
/// per replicate) plus its CSV label.
#[derive(Debug, Clone)]
struct Cell {
    label: String,
    config: SimConfig,
}

struct Row {
    scenario: String,
    method: &'static str,
    replicate: usize,
    metric: &'static str,
    value: f64,
}

pub fn cmd_experiment(args: &ExperimentArgs) -> Result<(), CliError> {
    let cells = build_cells(args)?;
    let replicates = args.replicates.unwrap_or(if args.desk_scale {
        DESK_REPLICATES
    } else {
        FULL_REPLICATES
    });
    if replicates == 0 {
        return Err(CliError::Usage("--replicates must be at least 1".to_string()));
    }
    let plan = base_plan(args)?;

    // One task per (cell, replicate); methods run sequentially inside so a
    // task's three fits share the dataset. Results come back in task order.
    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|ci| (0..replicates).map(move |rep| (ci, rep)))
        .collect();
    let per_task: Vec<Vec<Row>> = tasks
        .par_iter()
        .map(|&(ci, rep)| run_task(&cells[ci], ci, rep, args.seed, args.n_mc, &plan))
        .collect::<Result<_, _>>()?;

    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)
                .map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
        }
    }
    let mut writer = csv::Writer::from_path(&args.out)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.out.display())))?;
    writer
        .write_record(["scenario", "method", "replicate", "metric", "value"])
        .and_then(|()| {
            for row in per_task.iter().flatten() {
                writer.write_record([
                    row.scenario.as_str(),
                    row.method,
                    &row.replicate.to_string(),
                    row.metric,
                    &format!("{}", row.value),
                ])?;
            }
            writer.flush().map_err(csv::Error::from)
        })
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.out.display())))?;

    let rows = per_task.iter().map(Vec::len).sum::<usize>();
    println!(
        "{}: {} cells x {} replicates x 3 methods -> {} rows in {}",
        args.name.label(),
        cells.len(),
        replicates,
        rows,
        args.out.display()
    );
    Ok(())
}

/// Simulates one dataset and runs the cross-validated pipeline for all
/// three methods, returning the metric rows in fixed order.
fn run_task(
    cell: &Cell,
    cell_idx: usize,
    rep: usize,
    base_seed: u64,
    n_mc: usize,
    plan_template: &CvPlan,
) -> Result<Vec<Row>, CliError> {
    let seed = replicate_seed(replicate_seed(base_seed, cell_idx as u64), rep as u64);
    let mut config = cell.config.clone();
    config.seed = seed;
    let draw = gen_dataset(&config).map_err(map_sim)?;

    let methods: [(&'static str, FitMethod); 3] = [
        ("deconfounded", FitMethod::Deconfounded { rho: 0.5 }),
        ("naive", FitMethod::Naive),
        ("estimated_factors", FitMethod::EstimatedFactors { q: None }),
    ];
    let mut rows = Vec::with_capacity(methods.len() * METRICS.len());
    for (label, method) in methods {
        let mut plan = plan_template.clone();
        plan.method = method;
        plan.seed = seed;
        let (fit, report) =
            cv_fit(draw.x.view(), draw.y.view(), &plan, &FitOptions::default())
                .map_err(map_cv)?;
        let mse = mse_l2(&fit, &config, n_mc, seed).map_err(map_metrics)?;
        let screened = screening(&fit, &draw.truth.active);
        let values = [
            mse.value,
            mse.se,
            fit.active_set().len() as f64,
            if screened { 1.0 } else { 0.0 },
            report.selection.k as f64,
            report.selection.lambda,
        ];
        for (metric, value) in METRICS.iter().zip(values) {
            rows.push(Row {
                scenario: cell.label.clone(),
                method: label,
                replicate: rep,
                metric,
                value,
            });
        }
    }
    Ok(rows)
}

/// Expands the scenario, influence setting(s), and grid into cells.
fn build_cells(args: &ExperimentArgs) -> Result<Vec<Cell>, CliError> {
    let influences: &[Influence] = match args.influence {
        InfluenceArg::Equal => &[Influence::Equal],
        InfluenceArg::Decreasing => &[Influence::Decreasing],
        InfluenceArg::Both => &[Influence::Equal, Influence::Decreasing],
    };
    let sigma = match args.sigma_e {
        SigmaArg::Identity => SigmaE::Identity,
        SigmaArg::Toeplitz => SigmaE::Toeplitz { rho: args.rho_e },
    };
    let sigma_label = match sigma {
        SigmaE::Identity => "identity".to_string(),
        SigmaE::Toeplitz { rho } => format!("toeplitz{rho}"),
    };

    let grid = match &args.grid {
        Some(text) => parse_f64_list(text, "--grid")?,
        None => default_grid(args.name, args.desk_scale),
    };
    if grid.is_empty() {
        return Err(CliError::Usage("--grid must contain at least one value".to_string()));
    }

    // Base sizes: scenario defaults, shrunk by --desk-scale, then explicit
    // overrides win.
    let (mut base_n, mut base_p) = match args.name {
        ScenarioName::VarN => (0, 300),
        ScenarioName::VarP => (300, 0),
        _ => (400, 500),
    };
    if args.desk_scale {
        if args.name != ScenarioName::VarN {
            base_n = base_n.min(DESK_N);
        }
        if args.name != ScenarioName::VarP {
            base_p = base_p.min(DESK_P);
        }
    }
    if let Some(n) = args.n {
        base_n = n;
    }
    if let Some(p) = args.p {
        base_p = p;
    }

    let base = SimConfig {
        n: base_n,
        p: base_p,
        q: args.q.unwrap_or(5),
        influence: Influence::Equal,
        cs: 2.0,
        prop: 1.0,
        sigma_e: sigma,
        noise_sd: 0.5,
        alpha: 0.0,
        beta: 0.0,
        seed: 0,
    };

    let mut cells = Vec::new();
    for &influence in influences {
        let infl_label = match influence {
            Influence::Equal => "equal",
            Influence::Decreasing => "decreasing",
        };
        let prefix = format!("{}/{}/{}", args.name.label(), infl_label, sigma_label);
        match args.name {
            ScenarioName::VarN => {
                for &v in &grid {
                    let mut config = base.clone();
                    config.influence = influence;
                    config.n = positive_size(v, "--grid (n values)")?;
                    let label = format!("{prefix}/n={}/p={}", config.n, config.p);
                    cells.push(Cell { label, config });
                }
            }
            ScenarioName::VarP => {
                for &v in &grid {
                    let mut config = base.clone();
                    config.influence = influence;
                    config.p = positive_size(v, "--grid (p values)")?;
                    let label = format!("{prefix}/n={}/p={}", config.n, config.p);
                    cells.push(Cell { label, config });
                }
            }
            ScenarioName::VarCs => {
                for &v in &grid {
                    let mut config = base.clone();
                    config.influence = influence;
                    config.cs = v;
                    let label =
                        format!("{prefix}/n={}/p={}/cs={}", config.n, config.p, config.cs);
                    cells.push(Cell { label, config });
                }
            }
            ScenarioName::VarProp => {
                for &v in &grid {
                    let mut config = base.clone();
                    config.influence = influence;
                    config.prop = v;
                    let label =
                        format!("{prefix}/n={}/p={}/prop={}", config.n, config.p, config.prop);
                    cells.push(Cell { label, config });
                }
            }
            ScenarioName::NonlinearGrid => {
                for &a in &grid {
                    for &b in &grid {
                        let mut config = base.clone();
                        config.influence = influence;
                        config.alpha = a;
                        config.beta = b;
                        let label = format!(
                            "{prefix}/n={}/p={}/alpha={a}/beta={b}",
                            config.n, config.p
                        );
                        cells.push(Cell { label, config });
                    }
                }
            }
        }
    }
    // Fail fast on impossible configurations before spawning work; the
    // per-replicate seed does not affect validity.
    for cell in &cells {
        cell.config.validate().map_err(map_sim)?;
    }
    Ok(cells)
}

/// Documented default grids. The source studies sweep n and p over
/// 50..800; these points cover that range at roughly geometric spacing.
fn default_grid(name: ScenarioName, desk_scale: bool) -> Vec<f64> {
    match name {
        ScenarioName::VarN => {
            if desk_scale {
                vec![50.0, 100.0, 150.0]
            } else {
                vec![50.0, 100.0, 200.0, 400.0, 800.0]
            }
        }
        ScenarioName::VarP => {
            if desk_scale {
                vec![100.0, 200.0, 300.0]
            } else {
                vec![50.0, 100.0, 200.0, 400.0, 800.0]
            }
        }
        ScenarioName::VarCs => vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
        ScenarioName::VarProp => vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
        ScenarioName::NonlinearGrid => vec![0.0, 0.5, 1.0],
    }
}

fn positive_size(v: f64, what: &str) -> Result<usize, CliError> {
    if !v.is_finite() || v < 1.0 || v.fract() != 0.0 {
        return Err(CliError::Usage(format!(
            "{what}: {v} is not a positive integer"
        )));
    }
    Ok(v as usize)
}

fn base_plan(args: &ExperimentArgs) -> Result<CvPlan, CliError> {
    let mut plan = CvPlan::default();
    if let Some(folds) = args.folds {
        plan.folds = folds;
    }
    if let Some(grid) = &args.k_grid {
        plan.k_grid = parse_usize_list(grid, "--k-grid")?;
    }
    Ok(plan)
}
