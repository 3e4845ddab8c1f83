use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sbrg::cli::{execute, CliError, Command, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(name = "sbrg", version, about = "Spin-boson ground states: direct, renormalization-group and perturbative")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// List every violated precondition of the resolved config.
    Validate(Common),
    /// Full sweep, module reports and the complete acceptance suite.
    Run(Common),
    /// RG sweep over (lambda, sigma) with the funnel and energy criteria.
    Rg(Common),
    /// Rayleigh-Schrödinger coefficient tables and the perturbation criterion.
    Perturb(Common),
    /// Infrared cancellation table and its criterion.
    IrCancel(Common),
    /// Brute-force oracles: Feshbach, kernel bounds, Wick, initial step, symmetries, continuity.
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config; defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Dotted-path override, e.g. `--set rg.rho=0.002`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Size of the worker pool.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Seed of the randomized checks (overrides `seed`).
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Also write kernel-family snapshots of every RG run.
    #[arg(long)]
    snapshots: bool,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_json(&std::fs::read_to_string(p)?)?,
            None => ExperimentConfig::default(),
        };
        for s in &self.overrides {
            cfg.set(s)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.to_string_lossy().into_owned();
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, command) = match &cli.command {
        Cmd::Validate(c) => (c, None),
        Cmd::Run(c) => (c, Some(Command::Run)),
        Cmd::Rg(c) => (c, Some(Command::Rg)),
        Cmd::Perturb(c) => (c, Some(Command::Perturb)),
        Cmd::IrCancel(c) => (c, Some(Command::IrCancel)),
        Cmd::Oracle(c) => (c, Some(Command::Oracle)),
    };
    let cfg = match common.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = common.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    let Some(command) = command else {
        let v = cfg.validate();
        for line in &v {
            println!("violation: {line}");
        }
        if v.is_empty() {
            println!("config is valid");
            return ExitCode::SUCCESS;
        }
        return ExitCode::from(1);
    };
    let out = PathBuf::from(&cfg.output_dir);
    match execute(&cfg, command, &out, RunOptions { snapshots: common.snapshots }) {
        Ok(outcome) => {
            if let Some(a) = &outcome.acceptance {
                for c in &a.criteria {
                    println!("{}", c.line());
                }
            } else if outcome.metadata_only {
                println!("empty lambda and sigma lists: metadata-only bundle");
            }
            println!("bundle written to {}", outcome.dir.display());
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
