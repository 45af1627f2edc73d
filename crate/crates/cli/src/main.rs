use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use spectral_langevin::analysis::{autocorrelation, iact, nongaussian_kl_terms};
use spectral_langevin::experiment::content_hash;
use spectral_langevin::precond::{max_deviation, reversion_rate};
use spectral_langevin::{kl_report, prepare, run_experiment, uniformity_check, ExperimentConfig, HeatProfile};

#[derive(Parser)]
#[command(name = "spectral-langevin", version, about = "Preconditioned Langevin experiments in a spectral basis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Builtin {
    ToyFig1,
    BrownianSheet,
    HeatEquation,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifacts.
    Run {
        config: PathBuf,
        /// Output directory; defaults to the config's `outputs`, then to
        /// `$SPECTRAL_LANGEVIN_OUT/<experiment>-<hash>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep τ over a log grid and print the KL order-check table.
    KlScan {
        config: PathBuf,
        /// `a:b:n`, n log-spaced points from a to b.
        #[arg(long)]
        tau_grid: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the preconditioner and reversion-rate table.
    Precond {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Autocorrelation functions and IACTs from a run's chain CSV.
    Acf {
        run_dir: PathBuf,
        #[arg(long, default_value_t = 200)]
        max_lag: usize,
    },
    /// Print a builtin experiment config as JSON.
    Template {
        #[arg(value_enum)]
        problem: Builtin,
        /// Observed modes per axis (brownian sheet).
        #[arg(long, default_value_t = 75)]
        m: usize,
        #[arg(long, value_enum, default_value_t = Profile::Preconditioned)]
        profile: Profile,
        #[arg(long, default_value_t = 1e-3)]
        tau: f64,
        /// Identity prior instead of the trace-class one (toy problem).
        #[arg(long)]
        identity_prior: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Preconditioned,
    Vanilla,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run { config, out } => cmd_run(&config, out),
        Command::KlScan { config, tau_grid, out } => cmd_kl_scan(&config, &tau_grid, out),
        Command::Precond { config, out } => cmd_precond(&config, out),
        Command::Acf { run_dir, max_lag } => cmd_acf(&run_dir, max_lag),
        Command::Template {
            problem,
            m,
            profile,
            tau,
            identity_prior,
        } => {
            let cfg = match problem {
                Builtin::ToyFig1 => ExperimentConfig::toy_fig1(!identity_prior),
                Builtin::BrownianSheet => ExperimentConfig::brownian_sheet(m),
                Builtin::HeatEquation => ExperimentConfig::heat_equation(
                    match profile {
                        Profile::Preconditioned => HeatProfile::Preconditioned,
                        Profile::Vanilla => HeatProfile::Vanilla,
                    },
                    tau,
                ),
            };
            println!("{}", serde_json::to_string_pretty(&cfg)?);
            Ok(())
        }
    }
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn output_root() -> PathBuf {
    std::env::var_os("SPECTRAL_LANGEVIN_OUT").map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

fn csv_sink(out: Option<PathBuf>) -> Result<csv::Writer<Box<dyn io::Write>>> {
    let sink: Box<dyn io::Write> = match out {
        Some(p) => Box::new(fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout()),
    };
    Ok(csv::Writer::from_writer(sink))
}

fn cmd_run(path: &Path, out: Option<PathBuf>) -> Result<()> {
    let cfg = load(path)?;
    let dir = match out.or_else(|| cfg.outputs.clone()) {
        Some(d) => d,
        None => {
            let hash = content_hash(&serde_json::to_vec(&cfg)?);
            let tag = serde_json::to_value(cfg.experiment)?;
            output_root().join(format!("{}-{}", tag.as_str().unwrap_or("custom"), &hash[..12]))
        }
    };
    let res = run_experiment(&cfg, &dir)?;
    println!("artifacts: {}", dir.display());
    println!(
        "chains: {} x {} kept samples{}",
        res.diagnostics.n_chains,
        res.diagnostics.kept_per_chain,
        if res.diagnostics.diverged { " (diverged)" } else { "" }
    );
    for w in &res.ensemble.warnings {
        println!("warning: {w}");
    }
    if let Some(s) = spectral_langevin::experiment::iact_spread(&res.diagnostics) {
        println!("IACT max/min over traced modes: {s:.3}");
    }
    println!("total KL(stationary || posterior): {:.6e}", res.kl.total_exact);
    if let Some(r) = res.reconstruction {
        println!(
            "relative L2 coefficient error: {:.4e}, field RMSE: {:.4e}, RMSE to truth: {:.4e}",
            r.relative_l2_coefficient_error, r.field_rmse, r.truth_field_rmse
        );
    }
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, n] = parts.as_slice() else {
        bail!("tau grid must look like a:b:n, got `{spec}`");
    };
    let (a, b): (f64, f64) = (a.parse()?, b.parse()?);
    let n: usize = n.parse()?;
    if !(a > 0.0 && b > 0.0) || n < 2 {
        bail!("tau grid needs positive endpoints and at least 2 points");
    }
    let (la, lb) = (a.ln(), b.ln());
    Ok((0..n).map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp()).collect())
}

fn cmd_kl_scan(path: &Path, grid: &str, out: Option<PathBuf>) -> Result<()> {
    let cfg = load(path)?;
    let taus = parse_grid(grid)?;
    let mut w = csv_sink(out)?;
    w.write_record(["tau", "total_exact", "total_expansion", "abs_residual", "order_estimate"])?;
    let mut prev: Option<(f64, f64)> = None;
    for tau in taus {
        let mut c = cfg.clone();
        c.score.tau = tau;
        let p = prepare(&c)?;
        let report = kl_report(&p.model, &p.y)?;
        let expansion: f64 = if p.model.potential().is_some() {
            (0..p.spec.n_modes())
                .map(|j| nongaussian_kl_terms(&p.model, &p.y, j).map(|t| t.approximation()))
                .sum::<spectral_langevin::Result<f64>>()?
        } else {
            report.modes.iter().map(|m| m.expansion.unwrap_or(f64::NAN)).sum()
        };
        let residual = (report.total_exact - expansion).abs();
        let order = prev.map_or(f64::NAN, |(t0, r0)| (residual / r0).ln() / (tau / t0).ln());
        w.write_record([tau, report.total_exact, expansion, residual, order].iter().map(|v| v.to_string()))?;
        prev = Some((tau, residual));
    }
    w.flush()?;
    Ok(())
}

fn cmd_precond(path: &Path, out: Option<PathBuf>) -> Result<()> {
    let cfg = load(path)?;
    let p = prepare(&cfg)?;
    let mut w = csv_sink(out)?;
    w.write_record(["mode", "mu", "lambda0", "lambda1", "lambda", "kappa"])?;
    for j in 0..p.spec.n_modes() {
        let row = [
            p.spec.prior_var(j),
            p.precond.lambda0[j],
            p.precond.lambda1[j],
            p.precond.lambda[j],
            p.kappa[j],
        ];
        w.write_record(std::iter::once(j.to_string()).chain(row.iter().map(|v| v.to_string())))?;
    }
    w.flush()?;
    let mut half = cfg.clone();
    half.score.tau = cfg.score.tau / 2.0;
    let ph = prepare(&half)?;
    let report = uniformity_check(&p.kappa, &ph.kappa, cfg.score.tau);
    let eps_zero = vec![0.0; p.spec.n_modes()];
    let leading = reversion_rate(&p.spec, &p.precond.lambda0, cfg.score.tau, &eps_zero)?;
    eprintln!(
        "max|kappa-1| = {:.4e} (tau/2: {:.4e}, order {:.3}); leading-order lambda only: {:.4e}",
        report.max_dev,
        report.max_dev_half,
        report.order_estimate,
        max_deviation(&leading)
    );
    Ok(())
}

fn cmd_acf(dir: &Path, max_lag: usize) -> Result<()> {
    let path = dir.join("chains.csv");
    let mut r = csv::Reader::from_path(&path).with_context(|| format!("reading {}", path.display()))?;
    // mode -> chain -> values in file order
    let mut traces: BTreeMap<usize, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let chain: usize = rec[0].parse()?;
        let mode: usize = rec[2].parse()?;
        let value: f64 = rec[3].parse()?;
        traces.entry(mode).or_default().entry(chain).or_default().push(value);
    }
    if traces.is_empty() {
        bail!("{} holds no samples", path.display());
    }
    let mut acf_out = csv::Writer::from_path(dir.join("acf.csv"))?;
    acf_out.write_record(["mode", "lag", "acf"])?;
    let mut iact_out = csv::Writer::from_path(dir.join("iact.csv"))?;
    iact_out.write_record(["mode", "iact"])?;
    for (mode, chains) in &traces {
        let len = chains.values().map(Vec::len).min().unwrap_or(0);
        let refs: Vec<&[f64]> = chains.values().map(|c| &c[..len]).collect();
        let rho = autocorrelation(&refs, max_lag)?;
        for (lag, v) in rho.iter().enumerate() {
            acf_out.write_record([mode.to_string(), lag.to_string(), v.to_string()])?;
        }
        let t = iact(&refs)?;
        iact_out.write_record([mode.to_string(), t.to_string()])?;
        println!("mode {mode}: IACT {t:.3}");
    }
    acf_out.flush()?;
    iact_out.flush()?;
    Ok(())
}
