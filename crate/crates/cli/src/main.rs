//! `imuon`: verification suites and desk-scale experiments for intrinsic LMOs.

mod config;
mod experiment;
mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use config::{parse_csv, parse_experiment, parse_verify, ConfigFile, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(name = "imuon", version, about = "Intrinsic norm-constrained LMOs on matrix manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the invariance suites and oracle comparisons; writes verify_report.json.
    Verify(VerifyArgs),
    /// Low-rank matrix completion.
    Complete(ExpArgs),
    /// SPD prototype classification.
    Spd(ExpArgs),
    /// Grassmann Frechet prototypes.
    Grassmann(ExpArgs),
    /// Stiefel sub-center prototypes.
    Stiefel(ExpArgs),
    /// Learning-rate sweep over one experiment; also writes best_lr.csv.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML file with one table per experiment.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "imuon-out")]
    out: PathBuf,
    /// Comma-separated seeds.
    #[arg(long)]
    seeds: Option<String>,
    /// Comma-separated norm specs (verify) or the norm for imuon/muon (experiments).
    #[arg(long)]
    norm: Option<String>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated manifolds to check.
    #[arg(long)]
    manifold: Option<String>,
    /// Tolerance applied to every check.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    instances: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct ExpArgs {
    #[command(flatten)]
    common: Common,
    /// Worker threads for the run matrix.
    #[arg(long)]
    workers: Option<usize>,
    /// Comma-separated method tags.
    #[arg(long)]
    method: Option<String>,
    /// Comma-separated learning-rate grid.
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    iters: Option<usize>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    exp: ExpArgs,
    /// Experiment to sweep (complete, spd, grassmann, stiefel).
    #[arg(long)]
    experiment: Option<String>,
}

fn apply_overrides(cfg: &mut ExperimentConfig, args: &ExpArgs) -> Result<()> {
    if let Some(s) = &args.common.seeds {
        cfg.run.seeds = parse_csv(s, "seed")?;
    }
    if let Some(n) = &args.common.norm {
        cfg.run.norm = n.clone();
    }
    if let Some(w) = args.workers {
        cfg.run.workers = w;
    }
    if let Some(m) = &args.method {
        cfg.run.methods = m.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    }
    if let Some(lr) = &args.lr {
        cfg.run.lr = parse_csv(lr, "lr")?;
    }
    if let Some(i) = args.iters {
        cfg.run.iters = i;
    }
    cfg.run.validate()
}

fn load_experiment(name: &str, args: &ExpArgs, sweep_table: Option<&toml::Table>) -> Result<ExperimentConfig> {
    let file = ConfigFile::load(args.common.config.as_deref())?;
    let mut table = file.table(name);
    if let Some(extra) = sweep_table {
        for (k, v) in extra {
            if k != "experiment" {
                table.insert(k.clone(), v.clone());
            }
        }
    }
    let mut cfg = parse_experiment(name, &table)?;
    apply_overrides(&mut cfg, args)?;
    Ok(cfg)
}

fn report_experiment(out: &Path, n_cells: usize, statuses: impl Iterator<Item = String>) {
    let bad = statuses.filter(|s| s != "ok").count();
    eprintln!("{n_cells} runs ({bad} not ok); summary written to {}", out.join("summary.csv").display());
}

/// Verification failures exit with 1; every error exits with 2.
fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Verify(a) => {
            let file = ConfigFile::load(a.common.config.as_deref())?;
            let mut params = parse_verify(&file.table("verify"))?;
            if let Some(m) = &a.manifold {
                params.manifolds = m.split(',').map(|s| s.trim().to_string()).collect();
            }
            if let Some(n) = &a.common.norm {
                params.norms = n.split(',').map(|s| s.trim().to_string()).collect();
            }
            if let Some(s) = &a.common.seeds {
                let seeds: Vec<u64> = parse_csv(s, "seed")?;
                match seeds.first() {
                    Some(&s) => params.seed = s,
                    None => bail!("seeds must be non-empty"),
                }
            }
            if a.tol.is_some() {
                params.tol = a.tol;
            }
            if let Some(i) = a.instances {
                params.instances = i;
            }
            verify::to_core(&params)?;
            let report = verify::run_verify(&params, &a.common.out)?;
            println!(
                "{} checks, {} failed; report written to {}",
                report.n_checks,
                report.failed.len(),
                a.common.out.join("verify_report.json").display()
            );
            for name in &report.failed {
                println!("FAILED {name}");
            }
            Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Sweep(s) => {
            let file = ConfigFile::load(s.exp.common.config.as_deref())?;
            let sweep_table = file.table("sweep");
            let name = match (&s.experiment, sweep_table.get("experiment").and_then(|v| v.as_str())) {
                (Some(n), _) => n.clone(),
                (None, Some(n)) => n.to_string(),
                (None, None) => "complete".to_string(),
            };
            let mut cfg = load_experiment(&name, &s.exp, Some(&sweep_table))?;
            if s.exp.lr.is_none() && !sweep_table.contains_key("lr") && !file.table(&name).contains_key("lr") {
                cfg.run.lr = vec![0.3, 1.0, 3.0, 10.0];
            }
            let out = &s.exp.common.out;
            let (cells, outcomes) = experiment::run_experiment(&cfg, out)?;
            std::fs::write(out.join("best_lr.csv"), experiment::best_lr_csv(&cells, &outcomes))?;
            report_experiment(out, cells.len(), outcomes.iter().map(|o| o.status.clone()));
            Ok(ExitCode::SUCCESS)
        }
        cmd => {
            let (name, a) = match cmd {
                Command::Complete(a) => ("complete", a),
                Command::Spd(a) => ("spd", a),
                Command::Grassmann(a) => ("grassmann", a),
                Command::Stiefel(a) => ("stiefel", a),
                _ => unreachable!("handled above"),
            };
            let cfg = load_experiment(name, &a, None)?;
            let (cells, outcomes) = experiment::run_experiment(&cfg, &a.common.out)?;
            report_experiment(&a.common.out, cells.len(), outcomes.iter().map(|o| o.status.clone()));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
