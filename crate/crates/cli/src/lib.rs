//! Subcommand implementations behind the `backstep` binary.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use backstep_core::backstep::{ControllerMode, PsiFloorAudit};
use backstep_core::simkit::{integrate, DivergenceInfo, SimError, Trajectory};
use backstep_core::verify::{
    check_theorem1, dominance_audit, lyapunov_budget, monte_carlo, BudgetReport, DominanceAudit, InvariantReport,
    MonteCarloReport, VerifyError,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use config::{Built, ConfigError, RunConfig};
use output::{io_err, read_json, render_plots, sha256_hex, trajectory_csv, write_json, CsvTable, OutputError, RunRecord};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        EXIT_USAGE
    }
}

/// Options shared by commands that start from a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<ControllerMode>,
    pub flip_sign: bool,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), ConfigError> {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(mode) = self.mode {
            cfg.mode = mode;
        }
        if self.flip_sign {
            cfg.fault.flip_control_sign = true;
        }
        cfg.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Terminal {
    pub t: f64,
    pub x: Vec<f64>,
    pub k: Vec<f64>,
    pub norm_x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub mode: ControllerMode,
    pub law: String,
    pub hash: String,
    pub seed: u64,
    pub steps: usize,
    pub samples: usize,
    pub complete: bool,
    pub divergence: Option<DivergenceInfo>,
    pub terminal: Option<Terminal>,
    pub wall_time_s: f64,
    pub invariants: InvariantReport,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub record: RunRecord,
    pub summary: RunSummary,
    pub trajectory: Trajectory,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.summary.complete {
            EXIT_OK
        } else {
            EXIT_DIVERGED
        }
    }
}

/// Loads a config and applies command-line overrides.
pub fn effective_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path)?;
    overrides.apply(&mut cfg)?;
    Ok(cfg)
}

/// Content address of a config: SHA-256 of its canonical JSON form.
pub fn config_hash(cfg: &RunConfig) -> String {
    sha256_hex(cfg.canonical().as_bytes())
}

fn short(hash: &str) -> &str {
    &hash[..16]
}

/// Integrates a config and writes CSV, summary JSON and SVG plots into
/// `<registry>/<hash prefix>/`.
pub fn cmd_run(cfg: &RunConfig, registry: &Path) -> Result<RunOutcome, CliError> {
    let built = cfg.build()?;
    let hash = config_hash(cfg);
    let dir = registry.join(short(&hash));
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;

    let started = Instant::now();
    let traj = integrate(built.system(), &cfg.x0(), &built.k0(), cfg.integrator, cfg.seed)?;
    let wall = started.elapsed().as_secs_f64();
    let invariants = check_theorem1(&traj, &built.links(), &cfg.verify.tolerances());

    let config_path = dir.join("config.toml");
    std::fs::write(&config_path, cfg.to_toml()).map_err(io_err(&config_path))?;
    let csv_path = dir.join("trajectory.csv");
    let csv = trajectory_csv(&traj);
    std::fs::write(&csv_path, &csv).map_err(io_err(&csv_path))?;
    let plots = render_plots(&CsvTable::parse(&csv)?, &dir)?;

    let summary = RunSummary {
        scenario: cfg.scenario.clone(),
        mode: cfg.mode,
        law: built.law_description(),
        hash: hash.clone(),
        seed: cfg.seed,
        steps: cfg.integrator.steps(),
        samples: traj.samples.len(),
        complete: traj.is_complete(),
        divergence: traj.divergence.clone(),
        terminal: traj.last().map(|s| Terminal {
            t: s.t,
            x: s.x.clone(),
            k: s.k.clone(),
            norm_x: s.x.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        }),
        wall_time_s: wall,
        invariants,
    };
    let summary_path = dir.join("summary.json");
    write_json(&summary_path, &summary)?;
    let record = RunRecord {
        hash,
        timestamp_unix: output::now_unix(),
        config: config_path,
        trajectory_csv: csv_path,
        summary_json: summary_path,
        plots,
        complete: summary.complete,
    };
    write_json(&dir.join("record.json"), &record)?;
    Ok(RunOutcome {
        dir,
        record,
        summary,
        trajectory: traj,
    })
}

/// Finds `<registry>/<id>`; a unique hash prefix is enough.
pub fn locate_run(registry: &Path, id: &str) -> Result<PathBuf, CliError> {
    if id.is_empty() {
        return Err(OutputError::MissingRun(id.into()).into());
    }
    let exact = registry.join(id);
    if exact.join("record.json").is_file() {
        return Ok(exact);
    }
    let entries = match std::fs::read_dir(registry) {
        Ok(e) => e,
        Err(_) => return Err(OutputError::MissingRun(id.into()).into()),
    };
    let mut hits: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with(id))
                && p.join("record.json").is_file()
        })
        .collect();
    match hits.len() {
        1 => Ok(hits.pop().unwrap()),
        0 => Err(OutputError::MissingRun(id.into()).into()),
        _ => Err(CliError::Usage(format!("run id `{id}` is ambiguous"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub scenario: String,
    pub hash: String,
    pub theorem1: InvariantReport,
    pub lyapunov_budget: Option<BudgetReport>,
    pub dominance: Vec<DominanceAudit>,
    pub psi_floor: Option<PsiFloorAudit>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            EXIT_OK
        } else if self.theorem1.divergence.is_some() {
            EXIT_DIVERGED
        } else {
            EXIT_CHECK_FAILED
        }
    }
}

/// Runs every applicable monitor on a trajectory produced by `cfg`.
pub fn verify_trajectory(cfg: &RunConfig, traj: &Trajectory) -> Result<VerifyReport, CliError> {
    let built = cfg.build()?;
    let theorem1 = check_theorem1(traj, &built.links(), &cfg.verify.tolerances());
    let mut report = VerifyReport {
        scenario: cfg.scenario.clone(),
        hash: config_hash(cfg),
        passed: theorem1.passed(),
        theorem1,
        lyapunov_budget: None,
        dominance: Vec::new(),
        psi_floor: None,
    };
    if let Built::Numeric(run) = &built {
        let p = run.controller.params();
        let budget = lyapunov_budget(traj, &run.oracle, &p.mu, &p.gamma, cfg.verify.budget_tolerance)?;
        report.passed &= budget.passed;
        report.lyapunov_budget = Some(budget);
        let v = &cfg.verify;
        let floor = run
            .controller
            .psi_floor_audit(v.dominance_z, v.dominance_k, v.dominance_samples, cfg.seed)
            .map_err(VerifyError::from)?;
        report.passed &= floor.violations == 0;
        report.psi_floor = Some(floor);
        if cfg.mode == ControllerMode::Auto {
            for i in 2..=run.controller.dim() {
                let audit = dominance_audit(
                    &run.controller,
                    &run.scenario.plant,
                    &run.oracle,
                    i,
                    v.dominance_samples,
                    &cfg.audit_box(run.theta_box.clone()),
                    cfg.seed,
                    None,
                )?;
                report.passed &= audit.passed();
                report.dominance.push(audit);
            }
        }
    }
    Ok(report)
}

/// Verifies a registered run, re-reading its stored config and CSV.
pub fn cmd_verify_run(registry: &Path, id: &str) -> Result<(PathBuf, VerifyReport), CliError> {
    let dir = locate_run(registry, id)?;
    let cfg = RunConfig::load(&dir.join("config.toml"))?;
    let summary: RunSummary = read_json(&dir.join("summary.json"))?;
    let csv_path = dir.join("trajectory.csv");
    let text = std::fs::read_to_string(&csv_path).map_err(io_err(&csv_path))?;
    let built = cfg.build()?;
    let traj = output::trajectory_from_csv(
        &text,
        built.system().labels(),
        &cfg.scenario,
        cfg.integrator,
        cfg.seed,
        summary.divergence,
    )?;
    let report = verify_trajectory(&cfg, &traj)?;
    write_json(&dir.join("verify.json"), &report)?;
    Ok((dir, report))
}

/// Runs a config, then verifies the fresh trajectory.
pub fn cmd_verify_config(cfg: &RunConfig, registry: &Path) -> Result<(PathBuf, VerifyReport), CliError> {
    let run = cmd_run(cfg, registry)?;
    let report = verify_trajectory(cfg, &run.trajectory)?;
    write_json(&run.dir.join("verify.json"), &report)?;
    Ok((run.dir, report))
}

/// Seeded sweep of `runs` runs (default: the config's count); the aggregate
/// goes to `<registry>/<hash prefix>-mc/montecarlo.json`.
pub fn cmd_montecarlo(
    cfg: &RunConfig,
    runs: Option<usize>,
    registry: &Path,
) -> Result<(PathBuf, MonteCarloReport), CliError> {
    if runs == Some(0) {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    let built = cfg.build()?;
    let Built::Numeric(run) = &built else {
        return Err(CliError::Usage(format!(
            "scenario `{}` has no Monte-Carlo sweep",
            cfg.scenario
        )));
    };
    let spec = cfg.montecarlo_spec(runs)?;
    let key = format!("{}|montecarlo|{}", cfg.canonical(), spec.runs);
    let dir = registry.join(format!("{}-mc", short(&sha256_hex(key.as_bytes()))));
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let report = monte_carlo(
        &run.scenario.plant,
        &run.controller,
        &spec,
        cfg.integrator,
        &cfg.verify.tolerances(),
    )?;
    write_json(&dir.join("montecarlo.json"), &report)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()).map_err(io_err(&dir))?;
    Ok((dir, report))
}

/// Re-renders the SVG plots of a trajectory CSV.
pub fn cmd_plot(csv: &Path, out: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let text = std::fs::read_to_string(csv).map_err(io_err(csv))?;
    let table = CsvTable::parse(&text)?;
    let dir = match out {
        Some(d) => d.to_path_buf(),
        None => csv.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")),
    };
    Ok(render_plots(&table, &dir)?)
}
