//! Subcommand orchestration and the on-disk artifact bundle.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::fock::FockSpace;
use crate::kernel::{write_snapshot, Snapshot};
use crate::model::{assemble_hamiltonian, ground_state};
use crate::perturbation::{
    coefficient_continuity, rs_energies_recursive, rs_energies_trace, rs_expansion, IrValues, PerturbationError,
};

use super::acceptance::{perturbation_grid, rg_core, run_suite, AcceptanceSummary, RgRun, ALL_CRITERIA};
use super::config::ExperimentConfig;
use super::CliError;

pub const RESULTS_SCHEMA: &str = "sbrg-results/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Rg,
    Perturb,
    IrCancel,
    Oracle,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Rg => "rg",
            Command::Perturb => "perturb",
            Command::IrCancel => "ir-cancel",
            Command::Oracle => "oracle",
        }
    }

    /// The acceptance criteria each subcommand is judged by.
    pub fn criteria(self) -> &'static [u32] {
        match self {
            Command::Run => &ALL_CRITERIA,
            Command::Rg => &[4, 5],
            Command::Perturb => &[7],
            Command::IrCancel => &[8],
            Command::Oracle => &[1, 2, 3, 6, 9, 10],
        }
    }

    fn sweeps(self) -> bool {
        matches!(self, Command::Run | Command::Rg)
    }
}

/// `E_direct` vs `e_RG` vs `Σ_{n≤4} Ê^(n)λ^n` at one `(λ, σ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub lambda: f64,
    pub sigma: f64,
    pub e_direct: f64,
    pub direct_gap: f64,
    pub e_rg: Option<f64>,
    pub e_rs: Option<f64>,
    pub rel_rg: Option<f64>,
    pub rel_rs: Option<f64>,
    /// Why a column is empty.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FunnelCsv {
    lambda: f64,
    sigma: f64,
    step: usize,
    alpha: f64,
    beta: f64,
    gamma: f64,
    alpha_bound: f64,
    beta_gamma_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CoefficientCsv {
    sigma: f64,
    order: usize,
    recursive: f64,
    trace: f64,
    dense: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckCsv {
    criterion: u32,
    check: String,
    value: Option<f64>,
    bound: Option<f64>,
    passed: bool,
    source: String,
}

/// What a finished command reports back to the binary.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub dir: PathBuf,
    pub metadata_only: bool,
    pub acceptance: Option<AcceptanceSummary>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.acceptance.as_ref().is_none_or(|a| a.passed)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Writes the seed and final kernel families of every RG run.
    pub snapshots: bool,
}

fn provenance() -> BTreeMap<&'static str, &'static str> {
    BTreeMap::from([
        ("comparison.e_direct", "model::ground_state on the spin-boson truncation (n_modes, n_max) at sigma"),
        ("comparison.direct_gap", "model::ground_state"),
        ("comparison.e_rg", "initial::assemble_w0 -> rg::iterate, e_(0,n_steps+1) via rg::invert_energy_map"),
        ("comparison.e_rs", "perturbation::rs_energies_recursive, sum of orders 1..=4 times lambda^n"),
        ("rg.funnel", "rg::iterate funnel rows"),
        ("rg.eigenvector", "initial::reconstruct_eigenvector"),
        ("perturbation.coefficients.recursive", "perturbation::rs_energies_recursive"),
        ("perturbation.coefficients.trace", "perturbation::rs_energies_trace"),
        ("perturbation.coefficients.dense", "perturbation::rs_expansion"),
        ("perturbation.continuity", "perturbation::coefficient_continuity"),
        ("acceptance.*.checks[].source", "named per check"),
    ])
}

fn comparison_row(
    cfg: &ExperimentConfig,
    lambda: f64,
    sigma: f64,
    rg: Option<&RgRun>,
    rg_note: Option<String>,
) -> Result<ComparisonRow, CliError> {
    let g = cfg.truncation.grid(sigma, cfg.coupling.uv_cutoff)?;
    let c = cfg.coupling.at(sigma);
    let spin = FockSpace::new(g, cfg.truncation.n_max, true).map_err(|e| CliError::module("fock", e))?;
    let model = |e: crate::model::ModelError| CliError::module("spin_boson_model", e);
    let gs = ground_state(&assemble_hamiltonian(&spin, lambda, &c).map_err(model)?, 1e-12).map_err(model)?;
    let mut notes: Vec<String> = rg_note.into_iter().collect();
    let e_rs = match rs_energies_recursive(&spin, &c, sigma, 4) {
        Ok(e) => Some((1..=4).map(|n| e[n] * lambda.powi(n as i32)).sum::<f64>()),
        Err(PerturbationError::NoInfraredCutoff(_)) => {
            notes.push("perturbative coefficients need sigma > 0".into());
            None
        }
        Err(e) => return Err(CliError::module("perturbation", e)),
    };
    let rel = |x: Option<f64>| x.map(|v| (v - gs.energy).abs() / gs.energy.abs());
    let e_rg = rg.map(|r| r.state.energy());
    Ok(ComparisonRow {
        lambda,
        sigma,
        e_direct: gs.energy,
        direct_gap: gs.gap,
        e_rg,
        e_rs,
        rel_rg: rel(e_rg),
        rel_rs: rel(e_rs),
        note: (!notes.is_empty()).then(|| notes.join("; ")),
    })
}

struct Sweep {
    rows: Vec<ComparisonRow>,
    runs: Vec<RgRun>,
}

fn sweep(cfg: &ExperimentConfig) -> Result<Sweep, CliError> {
    let pairs: Vec<(f64, f64)> = cfg.sigmas.iter().flat_map(|&s| cfg.lambdas.iter().map(move |&l| (l, s))).collect();
    let results: Vec<(ComparisonRow, Option<RgRun>)> = pairs
        .par_iter()
        .map(|&(lambda, sigma)| {
            let (run, note) = match rg_core(cfg, Some(lambda), sigma)? {
                Ok(r) => (Some(r), None),
                Err(seed) => (
                    None,
                    Some(format!(
                        "seed outside the initial ball (alpha {:.3e}, beta {:.3e}, gamma {:.3e}; radius {:.3e})",
                        seed.ball.alpha,
                        seed.ball.beta,
                        seed.ball.gamma,
                        cfg.rg.epsilon_0 / 2.0
                    )),
                ),
            };
            Ok((comparison_row(cfg, lambda, sigma, run.as_ref(), note)?, run))
        })
        .collect::<Result<_, CliError>>()?;
    let (rows, runs): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(Sweep { rows, runs: runs.into_iter().flatten().collect() })
}

fn rg_report(runs: &[RgRun]) -> (Value, Vec<FunnelCsv>) {
    let mut csv = Vec::new();
    let mut out = Vec::new();
    for r in runs {
        csv.extend(r.state.funnel.iter().map(|f| FunnelCsv {
            lambda: r.lambda,
            sigma: r.sigma,
            step: f.step,
            alpha: f.alpha,
            beta: f.beta,
            gamma: f.gamma,
            alpha_bound: f.alpha_bound,
            beta_gamma_bound: f.beta_gamma_bound,
        }));
        out.push(json!({
            "lambda": r.lambda,
            "sigma": r.sigma,
            "seed": r.seed,
            "energies": r.state.energies,
            "energy_cauchy": r.state.energy_cauchy,
            "vector_cauchy": r.state.vector_cauchy,
            "gamma_ratios": r.state.contraction.iter().map(|c| c.gamma_ratio).collect::<Vec<_>>(),
            "fixed_point_defect": r.fixed_point_defect,
            "e_direct": r.e_direct,
            "eigenvector": { "norm": r.eigenvector.norm, "residual": r.eigenvector.residual },
        }));
    }
    (Value::Array(out), csv)
}

fn perturbation_report(cfg: &ExperimentConfig) -> Result<(Value, Vec<CoefficientCsv>), CliError> {
    let pt = |e: PerturbationError| CliError::module("perturbation", e);
    let p = &cfg.perturbation;
    let mut csv = Vec::new();
    let mut per_sigma = Vec::new();
    for &sigma in cfg.sigmas.iter().filter(|&&s| s > 0.0) {
        let c = cfg.coupling.at(sigma);
        let space = FockSpace::new(perturbation_grid(cfg, sigma, p.nodes_per_panel)?, p.cap, true)
            .map_err(|e| CliError::module("fock", e))?;
        let recursive = rs_energies_recursive(&space, &c, sigma, p.n_max).map_err(pt)?;
        let trace = rs_energies_trace(&space, &c, sigma, p.n_max).map_err(pt)?;
        let dense = match rs_expansion(&space, &c, sigma, p.n_max) {
            Ok(x) => Some(x.summary()),
            Err(PerturbationError::TooLarge { .. }) => None,
            Err(e) => return Err(pt(e)),
        };
        for n in 0..=p.n_max {
            csv.push(CoefficientCsv {
                sigma,
                order: n,
                recursive: recursive[n],
                trace: trace[n],
                dense: dense.as_ref().map(|d| d.energy[n]),
            });
        }
        per_sigma.push(json!({ "sigma": sigma, "dim": space.dim(), "dense": dense }));
    }
    let mut positive: Vec<f64> = cfg.sigmas.iter().copied().filter(|&s| s > 0.0).collect();
    positive.sort_by(|a, b| b.total_cmp(a));
    positive.dedup();
    let continuity = if positive.len() >= 2 {
        let lo = *positive.last().expect("nonempty");
        let space = FockSpace::new(perturbation_grid(cfg, lo, p.nodes_per_panel)?, p.cap.max(4), true)
            .map_err(|e| CliError::module("fock", e))?;
        let c = cfg.coupling.at(lo);
        let rows = (2..=4)
            .step_by(2)
            .map(|n| coefficient_continuity(&space, &c, n, &positive).map(|r| json!({ "order": n, "rows": r })))
            .collect::<Result<Vec<_>, _>>()
            .map_err(pt)?;
        Value::Array(rows)
    } else {
        Value::Null
    };
    Ok((json!({ "per_sigma": per_sigma, "continuity": continuity }), csv))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::module("cli_runner", e))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::module("cli_runner", e))?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::module("cli_runner", e))?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// Runs `command` and writes `config.json`, `results.json`, the CSV tables and
/// `timings.json` (the only non-deterministic file) into `out`.
pub fn execute(cfg: &ExperimentConfig, command: Command, out: &Path, opts: RunOptions) -> Result<Outcome, CliError> {
    let violations = cfg.validate();
    if !violations.is_empty() {
        return Err(CliError::Invalid(violations));
    }
    let started = Instant::now();
    fs::create_dir_all(out)?;
    fs::write(out.join("config.json"), cfg.to_json() + "\n")?;

    let mut results = serde_json::Map::new();
    results.insert("schema".into(), json!(RESULTS_SCHEMA));
    results.insert("package".into(), json!({ "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") }));
    results.insert("command".into(), json!(command.name()));
    results.insert("seed".into(), json!(cfg.seed));
    results.insert("provenance".into(), serde_json::to_value(provenance()).expect("map serializes"));

    if cfg.lambdas.is_empty() && cfg.sigmas.is_empty() {
        results.insert("metadata_only".into(), json!(true));
        write_json(&out.join("results.json"), &results)?;
        return Ok(Outcome { dir: out.to_path_buf(), metadata_only: true, acceptance: None });
    }

    let mut timings = BTreeMap::new();
    if command.sweeps() {
        let t = Instant::now();
        let sw = sweep(cfg)?;
        write_csv(&out.join("comparison.csv"), &sw.rows)?;
        let (rg, funnel) = rg_report(&sw.runs);
        write_csv(&out.join("rg_funnel.csv"), &funnel)?;
        if opts.snapshots {
            let dir = out.join("snapshots");
            fs::create_dir_all(&dir)?;
            for r in &sw.runs {
                let tag = format!("lambda{:e}_sigma{:e}", r.lambda, r.sigma);
                let first = r.state.kernels.first().expect("seed family").clone();
                let last = r.state.kernels.last().expect("final family").clone();
                write_snapshot(&dir.join(format!("{tag}_seed.json")), &Snapshot::Family(first))?;
                write_snapshot(&dir.join(format!("{tag}_final.json")), &Snapshot::Family(last))?;
            }
        }
        results.insert("comparison".into(), serde_json::to_value(&sw.rows).expect("rows serialize"));
        results.insert("rg".into(), rg);
        timings.insert("sweep".to_string(), t.elapsed().as_secs_f64());
    }
    if matches!(command, Command::Run | Command::Perturb) {
        let t = Instant::now();
        let (report, csv) = perturbation_report(cfg)?;
        write_csv(&out.join("rs_coefficients.csv"), &csv)?;
        results.insert("perturbation".into(), report);
        timings.insert("perturbation".to_string(), t.elapsed().as_secs_f64());
    }

    let summary = run_suite(cfg, command.criteria())?;
    let checks: Vec<CheckCsv> = summary
        .criteria
        .iter()
        .flat_map(|c| {
            c.checks.iter().map(move |k| CheckCsv {
                criterion: c.id,
                check: k.name.clone(),
                value: k.value,
                bound: k.bound,
                passed: k.passed,
                source: k.source.clone(),
            })
        })
        .collect();
    write_csv(&out.join("acceptance.csv"), &checks)?;
    if let Some(ir) = summary.criteria.iter().find(|c| c.id == 8) {
        let rows: Vec<IrValues> =
            serde_json::from_value(ir.details["rows"].clone()).map_err(|e| CliError::module("cli_runner", e))?;
        write_csv(&out.join("ir_table.csv"), &rows)?;
    }
    for c in &summary.criteria {
        timings.insert(format!("criterion_{:02}", c.id), c.seconds);
    }
    timings.insert("total".to_string(), started.elapsed().as_secs_f64());
    results.insert("acceptance".into(), serde_json::to_value(&summary).expect("summary serializes"));
    write_json(&out.join("results.json"), &results)?;
    write_json(&out.join("timings.json"), &timings)?;
    Ok(Outcome { dir: out.to_path_buf(), metadata_only: false, acceptance: Some(summary) })
}
