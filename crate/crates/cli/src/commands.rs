use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use glome_core::bounds::{complexity_bound, kappa0, penalty_lower_bound, TheoryConfig};
use glome_core::io::{self, DatasetSpec, FitReport};
use glome_core::selection::select;
use glome_core::simulate::{error_decay_study, run_selection_trials, sample_scenario};
use glome_core::{fit, fit_range, CriterionTable, Dataset, Scenario, TrialSettings};
use serde_json::json;

use crate::args::{BoundsArgs, Command, DataArgs, DivergenceArg, ExperimentArgs, FitArgs, SelectArgs, SimulateArgs};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Select(a) => select_cmd(a),
        Command::Experiment(a) => experiment(a),
        Command::Bounds(a) => bounds(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn load(a: &DataArgs) -> Result<Dataset> {
    let spec = DatasetSpec {
        path: a.data.clone(),
        x_columns: a.x_cols.clone(),
        y_columns: a.y_cols.clone(),
        swap_roles: a.swap_roles,
    };
    io::load_csv(&spec).with_context(|| format!("cannot load {}", a.data.display()))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let data = sample_scenario(&a.scenario.into(), a.n, a.seed)?;
    let names = |p, d| io::default_column_names(p, d);
    io::write_dataset_csv(&data, &names("x", data.d()), &names("y", data.l()), create(&a.out)?)?;
    println!("n={} D={} L={} seed={}", data.n(), data.d(), data.l(), a.seed);
    Ok(())
}

fn fit_cmd(a: FitArgs) -> Result<()> {
    let data = load(&a.data)?;
    let result = fit(&data, a.k, &a.em.config())?;
    println!(
        "K={} loglik={} iterations={} converged={}",
        result.k(),
        result.loglik,
        result.n_iter,
        result.converged
    );
    let report = FitReport::new(result)?;
    io::save_report(&report, &a.out).with_context(|| format!("cannot write {}", a.out.display()))?;
    Ok(())
}

fn select_cmd(a: SelectArgs) -> Result<()> {
    let data = load(&a.data)?;
    let config = a.em.config();
    eprintln!("fitting K = 1..={} on n = {}", a.k_max, data.n());
    let fits = fit_range(&data, a.k_max, &config)?;
    for f in &fits {
        if let Err(e) = &f.result {
            eprintln!("warning: K = {} failed: {e}", f.k);
        }
    }
    let table = CriterionTable::from_fits(&data, &fits, config.cov_structure)?;
    let result = select(&table, a.method.into(), a.kappa, a.window_fraction)?;
    let criterion_out = a.criterion_out.clone().unwrap_or_else(|| {
        a.out.parent().map_or_else(|| "criterion.csv".into(), |p| p.join("criterion.csv"))
    });
    table.write_csv(create(&criterion_out)?)?;
    io::save_report(&result, &a.out).with_context(|| format!("cannot write {}", a.out.display()))?;
    println!("chosen_K={} kappa_hat={} kappa_penalty={}", result.chosen_k, result.kappa_hat, result.kappa_penalty);
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let scenario: Scenario = a.scenario.into();
    let settings = TrialSettings {
        n_trials: a.trials,
        k_max: a.k_max,
        em: a.em.config(),
        methods: a.methods.iter().map(|&m| m.into()).collect(),
        kappa: a.kappa,
        window_fraction: a.window_fraction,
        n_y: (a.divergence == DivergenceArg::Tkl).then_some(a.n_y),
        record_runtime: a.record_runtime,
        seed: a.em.seed,
    };
    eprintln!(
        "{} trials of scenario {} at n = {:?}, K = 1..={}",
        a.trials,
        scenario.name(),
        a.n,
        a.k_max
    );
    let report = if a.n.len() >= 3 && settings.n_y.is_some() {
        error_decay_study(&scenario, &a.n, &settings)?
    } else {
        let mut report = None;
        for &n in &a.n {
            let r = run_selection_trials(&scenario, n, &settings)?;
            eprintln!("  n = {n} done");
            match &mut report {
                None => report = Some(r),
                Some(acc) => acc.runs.extend(r.runs),
            }
        }
        report.context("--n needs at least one sample size")?
    };
    fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    let dir = &a.out_dir;
    io::save_report(&report, &dir.join("report.json"))?;
    io::write_histogram_csv(&report, create(&dir.join("histogram.csv"))?)?;
    io::write_selected_csv(&report, create(&dir.join("selected.csv"))?)?;
    if settings.n_y.is_some() {
        io::write_boxplot_csv(&report, create(&dir.join("boxplot.csv"))?)?;
    }
    if let Some(decay) = &report.decay {
        io::write_decay_csv(decay, create(&dir.join("decay.csv"))?)?;
    }
    for run in &report.runs {
        for &method in &report.methods {
            let counts: Vec<usize> = (1..=report.k_max).map(|k| run.count(method, k)).collect();
            println!("n={} method={} modal_K={:?} counts={:?}", run.n, method.name(), run.modal_k(method), counts);
        }
    }
    if let Some(decay) = &report.decay {
        println!("decay_slope={} intercept={} stderr={}", decay.slope, decay.intercept, decay.slope_std_error);
    }
    Ok(())
}

fn bounds(a: BoundsArgs) -> Result<()> {
    let cfg = TheoryConfig { rho: a.rho, c1: a.c1, eps_d: a.eps_d, frak_c: a.frak_c, inner_kappa: a.inner_kappa };
    let k0 = kappa0(&cfg)?;
    let kappa = a.kappa.unwrap_or(k0);
    let out = json!({
        "dim": a.dim,
        "n": a.n,
        "complexity_bound": complexity_bound(a.dim, a.frak_c, a.n),
        "kappa0": k0,
        "kappa": kappa,
        "penalty_lower_bound": penalty_lower_bound(a.dim, a.n, a.frak_c, a.z, kappa),
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}
