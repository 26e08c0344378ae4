use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use irgnm_cli::check::run_checks;
use irgnm_cli::output::{self, OutputDir};
use irgnm_cli::plot::write_plot_data;
use irgnm_cli::{run_errn_study, run_experiment, run_rate_study, ExperimentConfig};

/// Regularized Newton reconstructions from Poisson data.
#[derive(Parser, Debug)]
#[command(name = "irgnm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration; defaults apply to everything not set.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replicates per exposure time (overrides `replicates`).
    #[arg(long, global = true)]
    replicates: Option<usize>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Replicated experiment: per-run rows and aggregate statistics.
    Run,
    /// Rate study: error against noise level and exact-data decay.
    Rates,
    /// Mean maximal err_n per exposure time.
    Errn,
    /// Adjoint, derivative, gradient and invariant checks.
    Check,
    /// One reconstruction per misfit as CSV for external plotting.
    Plot,
}

fn name(c: Command) -> &'static str {
    match c {
        Command::Run => "run",
        Command::Rates => "rates",
        Command::Errn => "errn",
        Command::Check => "check",
        Command::Plot => "plot",
    }
}

fn execute(cli: &Cli) -> Result<bool> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(r) = cli.replicates {
        cfg.replicates = r;
    }
    cfg.validate()?;
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global()?;
    }
    let mut out = OutputDir::create(&cfg.out_dir.clone(), &cfg)?;
    let mut ok = true;
    match cli.command {
        Command::Run => {
            let res = run_experiment(&cfg)?;
            output::write_experiment(&mut out, &cfg, &res)?;
        }
        Command::Rates => {
            let res = run_rate_study(&cfg)?;
            output::write_rates(&mut out, &cfg, &res)?;
        }
        Command::Errn => {
            let res = run_errn_study(&cfg)?;
            output::write_errn(&mut out, &cfg, &res)?;
        }
        Command::Check => {
            let items = run_checks(cfg.seed)?;
            ok = items.iter().all(|c| c.pass);
            output::write_checks(&mut out, &items)?;
        }
        Command::Plot => write_plot_data(&mut out, &cfg)?,
    }
    out.manifest(name(cli.command), &cfg)?;
    if !ok {
        anyhow::bail!("some checks failed; see check.csv");
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match e.downcast_ref::<irgnm::Error>() {
                Some(err) => err.kind(),
                None => "error",
            };
            let line = serde_json::json!({
                "error": kind,
                "command": name(cli.command),
                "message": format!("{e:#}"),
            });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
