use std::path::PathBuf;
use std::process::ExitCode;

use backstep_cli::config::RunConfig;
use backstep_cli::{
    cmd_montecarlo, cmd_plot, cmd_run, cmd_verify_config, cmd_verify_run, effective_config, CliError, Overrides,
    EXIT_CHECK_FAILED, EXIT_OK, EXIT_USAGE,
};
use backstep_core::backstep::ControllerMode;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "backstep", version, about = "Adaptive backstepping: simulate, verify, sweep, plot")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Paper,
    Auto,
}

impl From<Mode> for ControllerMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Paper => ControllerMode::Paper,
            Mode::Auto => ControllerMode::Auto,
        }
    }
}

#[derive(Args)]
struct Common {
    /// Scenario config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Root of the run registry; each run lands in `<out>/<hash>/`.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Override the controller mode.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Negate the applied control (negative control for verification).
    #[arg(long)]
    flip_sign: bool,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            mode: self.mode.map(Into::into),
            flip_sign: self.flip_sign,
        }
    }

    fn config(&self) -> Result<RunConfig, CliError> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| CliError::Usage("--config is required".into()))?;
        effective_config(path, &self.overrides())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario and write CSV, JSON and SVG artifacts.
    Run(Common),
    /// Check the stability invariants of a config or a registered run.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Registered run id (hash or unique prefix) instead of --config.
        #[arg(long, conflicts_with = "config")]
        run: Option<String>,
    },
    /// Seeded sweep over initial states and parameter profiles.
    Montecarlo {
        #[command(flatten)]
        common: Common,
        /// Number of sweep runs (overrides the config).
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Re-render SVG plots from a trajectory CSV.
    Plot {
        /// Trajectory CSV written by `run`.
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.config()?;
            let run = cmd_run(&cfg, &common.out)?;
            let s = &run.summary;
            println!("run {} -> {}", &s.hash[..16], run.dir.display());
            match (&s.divergence, &s.terminal) {
                (Some(d), _) => println!("diverged at t={}: {}", d.t, d.reason),
                (None, Some(term)) => println!("t={} ‖x‖∞={:e} k={:?}", term.t, term.norm_x, term.k),
                _ => {}
            }
            Ok(run.exit_code())
        }
        Command::Verify { common, run } => {
            let (dir, report) = match run {
                Some(id) => cmd_verify_run(&common.out, &id)?,
                None => {
                    let cfg = common.config()?;
                    cmd_verify_config(&cfg, &common.out)?
                }
            };
            for c in &report.theorem1.checks {
                println!("{:<5} {:<18} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if let Some(d) = &report.theorem1.divergence {
                println!("FAIL  trajectory       diverged ({d})");
            }
            if let Some(b) = &report.lyapunov_budget {
                println!(
                    "{:<5} {:<18} max V − budget = {:e} (ε = {})",
                    if b.passed { "PASS" } else { "FAIL" },
                    "lyapunov_budget",
                    b.max_violation,
                    b.epsilon
                );
            }
            if let Some(f) = &report.psi_floor {
                println!(
                    "{:<5} {:<18} min ψ = {} over {} samples",
                    if f.violations == 0 { "PASS" } else { "FAIL" },
                    "psi_floor",
                    f.min_psi,
                    f.samples
                );
            }
            for a in &report.dominance {
                println!(
                    "{:<5} {:<18} stage {}: {} violations / {} samples",
                    if a.passed() { "PASS" } else { "FAIL" },
                    "dominance",
                    a.stage,
                    a.violations,
                    a.samples
                );
            }
            println!("report -> {}", dir.join("verify.json").display());
            Ok(report.exit_code())
        }
        Command::Montecarlo { common, runs } => {
            let cfg = common.config()?;
            let (dir, report) = cmd_montecarlo(&cfg, runs, &common.out)?;
            println!("{}/{} runs passed -> {}", report.passed, report.runs, dir.join("montecarlo.json").display());
            Ok(if report.passed == report.runs { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        Command::Plot { csv, out } => {
            for p in cmd_plot(&csv, out.as_deref())? {
                println!("{}", p.display());
            }
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
