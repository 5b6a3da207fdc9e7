use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use dime_core::autoencoder::{train_autoencoder, LinkSystem};
use dime_core::diffcore::OpKind;
use dime_core::evalharness::{
    export_results, gradcheck_suite, run_gaussian_bench, simulate_bler, sweep_mi, uniform_d_grid,
    value_landscape, write_bench_csv, write_bler_csv, write_landscape_csv, write_mi_csv,
};
use dime_core::exec::Execution;
use dime_core::rng_from_seed;

use crate::config::RunConfig;
use crate::RunArgs;

/// A run that finished but produced numerically invalid results.
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

fn load(run: &RunArgs) -> Result<RunConfig> {
    RunConfig::load(run.config.as_deref(), &run.overrides)
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

/// `2.0`, `0.3333`: four decimals with trailing zeros trimmed, keeping one.
fn fmt_rate(r: f64) -> String {
    let s = format!("{r:.4}");
    let trimmed = s.trim_end_matches('0');
    if trimmed.ends_with('.') {
        format!("{trimmed}0")
    } else {
        trimmed.to_string()
    }
}

pub fn train_ae(run: &RunArgs, out: &Path) -> Result<()> {
    let cfg = load(run)?;
    let ae = cfg.ae_config()?;
    let seed = cfg.seed(run.seed);
    println!(
        "training AE(M={}, n={}) at {} dB on {}, R = {} bits/use, seed {seed}",
        ae.m,
        ae.n,
        ae.train_ebn0_db,
        ae.channel.name(),
        fmt_rate(ae.rate_bits())
    );
    let (sys, report) =
        train_autoencoder(&ae, &mut rng_from_seed(seed)).context("training failed")?;
    sys.save(out)
        .with_context(|| format!("writing {}", out.display()))?;
    report.save_csv(sibling(out, ".report.csv"))?;
    if !report.estimator_trace.rows.is_empty() {
        report
            .estimator_trace
            .save_csv(sibling(out, ".trace.csv"))?;
    }
    println!("R = {}", fmt_rate(report.rate_bits));
    println!("final loss = {:.6}", report.final_loss);
    println!("final training BLER = {:.6}", report.final_bler);
    if let Some(mi) = report.final_mi_bits_per_use {
        println!("final MI = {mi:.6} bits/use");
    }
    println!("model written to {}", out.display());
    Ok(())
}

fn load_model(cfg: &RunConfig, model: &Path) -> Result<LinkSystem> {
    let sys =
        LinkSystem::load(model).with_context(|| format!("reading model {}", model.display()))?;
    if let Some(m) = cfg.system.m {
        if m != sys.m {
            bail!("`system.M` is {m} but the model has M = {}", sys.m);
        }
    }
    if let Some(n) = cfg.system.n {
        if n != sys.n {
            bail!("`system.n` is {n} but the model has n = {}", sys.n);
        }
    }
    if cfg.channel.kind.is_some() && cfg.channel_kind()? != sys.channel {
        bail!(
            "`channel.kind` is {} but the model was trained on {}",
            cfg.channel_kind()?.name(),
            sys.channel.name()
        );
    }
    Ok(sys)
}

pub fn eval_bler(run: &RunArgs, model: &Path, out: &Path) -> Result<()> {
    let cfg = load(run)?;
    let sys = load_model(&cfg, model)?;
    let grid = cfg.ebn0_grid()?;
    let bler_cfg = cfg.bler_config()?;
    let seed = cfg.seed(run.seed);
    let points = simulate_bler(&sys, &grid, &bler_cfg, seed, Execution::Parallel)?;
    export_results(out, |w| write_bler_csv(&points, w))?;
    for p in &points {
        println!(
            "{:>6} dB  BLER {:.3e}  ({} / {})",
            p.ebn0_db, p.bler, p.errors, p.blocks
        );
    }
    Ok(())
}

pub fn eval_mi(run: &RunArgs, model: &Path, out: &Path) -> Result<()> {
    let cfg = load(run)?;
    let sys = load_model(&cfg, model)?;
    let grid = cfg.ebn0_grid()?;
    let specs = cfg.mi_specs()?;
    let seed = cfg.seed(run.seed);
    let points = sweep_mi(&sys, &specs, &grid, seed, Execution::Parallel)?;
    export_results(out, |w| write_mi_csv(&points, w))?;
    for p in &points {
        println!(
            "{:<16} {:>6} dB  {:.4} bits/use  (capacity {:.4})",
            p.estimator, p.ebn0_db, p.mi_bits, p.capacity_bits
        );
    }
    let failed: Vec<String> = points
        .iter()
        .filter_map(|p| {
            p.failure
                .as_ref()
                .map(|f| format!("{} at {} dB: {f}", p.estimator, p.ebn0_db))
        })
        .collect();
    if !failed.is_empty() {
        return Err(NumericalFailure(format!("estimator diverged: {}", failed.join("; "))).into());
    }
    Ok(())
}

pub fn bench_estimators(run: &RunArgs, out: &Path) -> Result<()> {
    let cfg = load(run)?;
    let cases = cfg.bench_cases()?;
    let specs = cfg.bench_specs()?;
    let seed = cfg.seed(run.seed);
    let rows = run_gaussian_bench(&cases, &specs, seed, Execution::Parallel)?;
    export_results(out, |w| write_bench_csv(&rows, w))?;
    for r in &rows {
        println!(
            "{:<16} d={:<3} rho={:<4} oracle {:.4}  estimate {:.4}",
            r.estimator, r.dim, r.rho, r.oracle_nats, r.estimate_nats
        );
    }
    let failed: Vec<String> = rows
        .iter()
        .filter_map(|r| {
            r.failure
                .as_ref()
                .map(|f| format!("{} d={} rho={}: {f}", r.estimator, r.dim, r.rho))
        })
        .collect();
    if !failed.is_empty() {
        return Err(NumericalFailure(format!("estimator diverged: {}", failed.join("; "))).into());
    }
    Ok(())
}

pub fn gradcheck(seed: u64, inject_fault: Option<&str>) -> Result<()> {
    let fault = inject_fault
        .map(|name| OpKind::parse(name).with_context(|| format!("unknown op `{name}`")))
        .transpose()?;
    let report = gradcheck_suite(seed, fault)?;
    let mut stdout = std::io::stdout().lock();
    for e in &report.entries {
        writeln!(
            stdout,
            "{} {:<28} max rel error {:.3e} over {} entries",
            if e.report.passed() { "ok  " } else { "FAIL" },
            e.name,
            e.report.max_relative_error,
            e.report.entries_checked
        )?;
    }
    writeln!(
        stdout,
        "{} checks, max relative error {:.3e} (tolerance {:e})",
        report.entries.len(),
        report.max_relative_error(),
        report.tolerance
    )?;
    let failures = report.failures();
    if failures.is_empty() {
        return Ok(());
    }
    let names: Vec<&str> = failures.iter().map(|e| e.name.as_str()).collect();
    Err(NumericalFailure(format!("gradient check failed for {}", names.join(", "))).into())
}

pub fn landscape(gammas: &[f64], ratio: f64, d_max: f64, points: usize, out: &Path) -> Result<()> {
    if gammas.is_empty() {
        bail!("`--gamma` needs at least one value");
    }
    if !(d_max > 0.0 && d_max.is_finite()) || points == 0 {
        bail!("`--d-max` must be positive and `--points` at least 1");
    }
    let curves = value_landscape(gammas, ratio, &uniform_d_grid(d_max, points))?;
    export_results(out, |w| write_landscape_csv(&curves, w))?;
    for c in &curves {
        println!(
            "gamma={} R={} maximizer D={} value={}",
            c.gamma, c.ratio, c.maximizer, c.max_value
        );
    }
    Ok(())
}
