//! Temporary diagnostic: runs the acceptance simulation cells with a
//! non-strict refit and prints per-replicate CV selections and refit stats.

use std::time::Instant;

use specdeconf::hdam::{FitMethod, FitOptions};
use specdeconf::metrics::{self, DEFAULT_N_MC};
use specdeconf::modelselect::{cv_fit, CvPlan};
use specdeconf::simgen::{self, Influence, SimConfig};

fn run_cell(name: &str, base_seed: u64, template: &SimConfig, methods: &[(&str, FitMethod)]) {
    let opts = FitOptions { allow_nonconverged: true, ..FitOptions::default() };
    for rep in 0..20usize {
        let seed = simgen::replicate_seed(base_seed, rep as u64);
        let config = SimConfig { seed, ..template.clone() };
        let draw = simgen::gen_dataset(&config).expect("valid config");
        for (label, method) in methods {
            let plan = CvPlan { method: method.clone(), seed, ..CvPlan::default() };
            let t0 = Instant::now();
            let (fit, report) = cv_fit(draw.x.view(), draw.y.view(), &plan, &opts)
                .expect("cv fit with nonconverged escape hatch");
            let secs = t0.elapsed().as_secs_f64();
            let mse = metrics::mse_l2(&fit, &config, DEFAULT_N_MC, seed).expect("mc eval").value;
            let screened = metrics::screening(&fit, &draw.truth.active);
            println!(
                "{name} rep {rep:02} {label:6} stage1 k={} lam={:.5e} | sel k={} lam={:.5e} \
                 | refit iters={} conv={} kkt={:.2e} active={} | mse={:.4} screened={} | {:.1}s",
                report.stage1.k,
                report.stage1.lambda,
                report.selection.k,
                report.selection.lambda,
                fit.fit_info.iterations,
                fit.fit_info.converged,
                fit.fit_info.kkt_residual,
                fit.active_set().len(),
                mse,
                screened,
                secs,
            );
        }
    }
}

/// For one replicate, prints the strengths of the four true components at
/// the CV selection and along the fine lambda path at the selected K.
fn probe(base_seed: u64, template: &SimConfig, rep: u64) {
    use specdeconf::hdam;
    let opts = FitOptions { allow_nonconverged: true, ..FitOptions::default() };
    let seed = simgen::replicate_seed(base_seed, rep);
    let config = SimConfig { seed, ..template.clone() };
    let draw = simgen::gen_dataset(&config).expect("valid config");
    let plan = CvPlan { method: FitMethod::default(), seed, ..CvPlan::default() };
    let (fit, report) = cv_fit(draw.x.view(), draw.y.view(), &plan, &opts).expect("cv fit");
    let sel = report.selection;
    println!(
        "rep {rep:02}: selected k={} lam={:.5e} mean_err={:.4} se={:.4}",
        sel.k, sel.lambda, sel.mean_err, sel.se_err
    );
    let s: Vec<f64> = (0..4).map(|j| fit.components[j].strength).collect();
    println!(
        "  at selection: active={} strengths[0..4]=[{:.4}, {:.4}, {:.4}, {:.4}]",
        fit.active_set().len(),
        s[0],
        s[1],
        s[2],
        s[3]
    );
    // walk the stage-2 fine grid downward from the winner
    for r in report.records.iter().filter(|r| r.stage == 2) {
        if r.lambda > sel.lambda {
            continue;
        }
        let m = hdam::fit(draw.x.view(), draw.y.view(), &plan.method, r.k, r.lambda, &opts)
            .expect("path fit");
        let strengths: Vec<f64> = (0..4).map(|j| m.components[j].strength).collect();
        let miss: Vec<usize> = (0..4).filter(|&j| strengths[j] == 0.0).collect();
        println!(
            "  lam={:.5e} cv_err={:.4} (se {:.4}) active={:3} missing={:?}",
            r.lambda,
            r.mean_err,
            r.se_err,
            m.active_set().len(),
            miss
        );
        if miss.is_empty() {
            break;
        }
    }
}

/// R-squared of regressing each true component on its own spline basis, per
/// K in the default grid: how much of the signal the basis can even express.
fn resolution(base_seed: u64, template: &SimConfig, rep: u64) {
    use ndarray::Array2;
    use specdeconf::basis;
    let seed = simgen::replicate_seed(base_seed, rep);
    let config = SimConfig { seed, ..template.clone() };
    let draw = simgen::gen_dataset(&config).expect("valid config");
    let n = config.n;
    for k in [5usize, 7, 9, 12, 15] {
        let mut line = format!("rep {rep:02} k={k:2} R2 per component:");
        for j in 0..4 {
            let col = draw.x.column(j);
            let spec = basis::quantile_knots(col, k).expect("knots");
            let b = basis::design_matrix(col, &spec);
            let ortho = basis::orthonormalize(&b).expect("full rank");
            // target: centered component values
            let mut f: Vec<f64> = col.iter().map(|&v| simgen::f0_component(j, v)).collect();
            let mean = f.iter().sum::<f64>() / n as f64;
            for v in f.iter_mut() {
                *v -= mean;
            }
            let fv = ndarray::Array1::from(f);
            // b_tilde has orthonormal columns scaled by sqrt(n): Bt'Bt = n I
            let bt: &Array2<f64> = &ortho.b_tilde;
            let coef = bt.t().dot(&fv) / n as f64;
            let fitted = bt.dot(&coef);
            let ss_fit = fitted.dot(&fitted);
            let ss_tot = fv.dot(&fv);
            line.push_str(&format!(" {:.3}", ss_fit / ss_tot));
        }
        println!("{line}");
    }
}

/// Prints the stage-1 CV table (per K: mean error over the multiplier path)
/// for one replicate, then the screening outcome when K is pinned to each
/// grid value separately.
fn ktable(base_seed: u64, template: &SimConfig, rep: u64) {
    let opts = FitOptions { allow_nonconverged: true, ..FitOptions::default() };
    let seed = simgen::replicate_seed(base_seed, rep);
    let config = SimConfig { seed, ..template.clone() };
    let draw = simgen::gen_dataset(&config).expect("valid config");
    let plan = CvPlan { method: FitMethod::default(), seed, ..CvPlan::default() };
    let (_, report) = cv_fit(draw.x.view(), draw.y.view(), &plan, &opts).expect("cv fit");
    for &k in &plan.k_grid {
        let best = report
            .records
            .iter()
            .filter(|r| r.stage == 1 && r.k == k)
            .min_by(|a, b| a.mean_err.partial_cmp(&b.mean_err).expect("finite"))
            .expect("k in table");
        println!(
            "rep {rep:02} k={k:2} best stage-1 err={:.4} (se {:.4}) at lam={:.4e}",
            best.mean_err, best.se_err, best.lambda
        );
    }
    // screening if CV were restricted to a single K
    for &k in &plan.k_grid {
        let kplan = CvPlan { method: FitMethod::default(), seed, k_grid: vec![k], ..CvPlan::default() };
        let (fit, rep_k) = cv_fit(draw.x.view(), draw.y.view(), &kplan, &opts).expect("cv fit");
        let screened = metrics::screening(&fit, &draw.truth.active);
        println!(
            "rep {rep:02} K fixed {k:2}: sel lam={:.4e} err={:.4} active={} screened={screened}",
            rep_k.selection.lambda,
            rep_k.selection.mean_err,
            fit.active_set().len()
        );
    }
}

/// Runs one (cell, replicate, method) combination and prints the usual line.
fn one(cell: &str, rep: u64, method_name: &str) {
    let base = SimConfig { n: 150, p: 300, q: 5, ..SimConfig::default() };
    let (base_seed, template) = match cell {
        "equal" => (0xACC0_0001u64, SimConfig { cs: 2.0, influence: Influence::Equal, ..base }),
        "decreasing" => {
            (0xACC0_0002, SimConfig { cs: 2.0, influence: Influence::Decreasing, ..base })
        }
        "cs0" => (0xACC0_0003, SimConfig { cs: 0.0, influence: Influence::Equal, ..base }),
        other => panic!("unknown cell {other}"),
    };
    let method = match method_name {
        "dec" => FitMethod::default(),
        "naive" => FitMethod::Naive,
        "ef" => FitMethod::EstimatedFactors { q: None },
        other => panic!("unknown method {other}"),
    };
    let opts = FitOptions { allow_nonconverged: true, ..FitOptions::default() };
    let seed = simgen::replicate_seed(base_seed, rep);
    let config = SimConfig { seed, ..template.clone() };
    let draw = simgen::gen_dataset(&config).expect("valid config");
    let plan = CvPlan { method, seed, ..CvPlan::default() };
    let t0 = Instant::now();
    let (fit, report) = cv_fit(draw.x.view(), draw.y.view(), &plan, &opts).expect("cv fit");
    let mse = metrics::mse_l2(&fit, &config, DEFAULT_N_MC, seed).expect("mc eval").value;
    println!(
        "{cell} rep {rep:02} {method_name:6} stage1 k={} lam={:.5e} | sel k={} lam={:.5e} \
         err={:.4} | refit iters={} conv={} active={} | mse={:.4} screened={} | {:.1}s",
        report.stage1.k,
        report.stage1.lambda,
        report.selection.k,
        report.selection.lambda,
        report.selection.mean_err,
        fit.fit_info.iterations,
        fit.fit_info.converged,
        fit.active_set().len(),
        mse,
        metrics::screening(&fit, &draw.truth.active),
        t0.elapsed().as_secs_f64(),
    );
}

/// Equal-confounding cell at a larger sample size, deconfounded method only:
/// how K selection and screening move with n.
fn trend(n: usize, reps: u64) {
    let template = SimConfig {
        n,
        p: 300,
        q: 5,
        cs: 2.0,
        influence: Influence::Equal,
        ..SimConfig::default()
    };
    let opts = FitOptions { allow_nonconverged: true, ..FitOptions::default() };
    for rep in 0..reps {
        let seed = simgen::replicate_seed(0xACC0_0001, rep);
        let config = SimConfig { seed, ..template.clone() };
        let draw = simgen::gen_dataset(&config).expect("valid config");
        let plan = CvPlan { method: FitMethod::default(), seed, ..CvPlan::default() };
        let t0 = Instant::now();
        let (fit, report) =
            cv_fit(draw.x.view(), draw.y.view(), &plan, &opts).expect("cv fit");
        let mse = metrics::mse_l2(&fit, &config, DEFAULT_N_MC, seed).expect("mc eval").value;
        println!(
            "n={n} rep {rep:02} dec sel k={} lam={:.4e} active={} mse={:.4} screened={} | {:.1}s",
            report.selection.k,
            report.selection.lambda,
            fit.active_set().len(),
            mse,
            metrics::screening(&fit, &draw.truth.active),
            t0.elapsed().as_secs_f64(),
        );
    }
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "equal".into());
    let base = SimConfig { n: 150, p: 300, q: 5, ..SimConfig::default() };
    if let Some(rep) = which.strip_prefix("probe") {
        let t = SimConfig { cs: 2.0, influence: Influence::Equal, ..base };
        probe(0xACC0_0001, &t, rep.trim_start_matches(':').parse().expect("probe:<rep>"));
        return;
    }
    if let Some(rep) = which.strip_prefix("res") {
        let t = SimConfig { cs: 2.0, influence: Influence::Equal, ..base };
        resolution(0xACC0_0001, &t, rep.trim_start_matches(':').parse().expect("res:<rep>"));
        return;
    }
    if let Some(rep) = which.strip_prefix("ktable") {
        let t = SimConfig { cs: 2.0, influence: Influence::Equal, ..base };
        ktable(0xACC0_0001, &t, rep.trim_start_matches(':').parse().expect("ktable:<rep>"));
        return;
    }
    if let Some(spec) = which.strip_prefix("one:") {
        let parts: Vec<&str> = spec.split(':').collect();
        one(parts[0], parts[1].parse().expect("rep"), parts[2]);
        return;
    }
    if let Some(spec) = which.strip_prefix("trend:") {
        let parts: Vec<&str> = spec.split(':').collect();
        trend(parts[0].parse().expect("n"), parts[1].parse().expect("reps"));
        return;
    }
    match which.as_str() {
        "equal" => {
            let t = SimConfig { cs: 2.0, influence: Influence::Equal, ..base };
            run_cell(
                "equal",
                0xACC0_0001,
                &t,
                &[
                    ("dec", FitMethod::default()),
                    ("naive", FitMethod::Naive),
                    ("ef", FitMethod::EstimatedFactors { q: None }),
                ],
            );
        }
        "decreasing" => {
            let t = SimConfig { cs: 2.0, influence: Influence::Decreasing, ..base };
            run_cell(
                "decreasing",
                0xACC0_0002,
                &t,
                &[("dec", FitMethod::default()), ("ef", FitMethod::EstimatedFactors { q: None })],
            );
        }
        "cs0" => {
            let t = SimConfig { cs: 0.0, influence: Influence::Equal, ..base };
            run_cell(
                "cs0",
                0xACC0_0003,
                &t,
                &[("dec", FitMethod::default()), ("naive", FitMethod::Naive)],
            );
        }
        other => panic!("unknown cell {other}"),
    }
}
