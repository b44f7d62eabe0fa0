//! Command-line front end for `swarmtrack`: scenario files, single runs,
//! parameter sweeps and the analysis helpers.

pub mod output;
pub mod scenario;
pub mod sweep;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use swarmtrack_core::{
    build_equilibrium, check_feasibility, classify_equilibrium, run, EngineError, PlanarVector,
};

use crate::output::{write_artifacts, RunSummary};
use crate::scenario::{parse_scenario, parse_scenario_str, ParseOptions, Scenario, ScenarioErrorKind};
use crate::sweep::{run_sweep, write_sweep, ParameterGrid};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;

/// Bundled replay of the field experiment.
pub const EXPERIMENT_SCENARIO: &str = include_str!("../scenarios/experiment_replay.toml");

#[derive(Debug, Parser)]
#[command(name = "swarmtrack", version, about = "Centroid target tracking for constant-speed unicycle swarms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one scenario and write trajectory.csv, summary.json and plot.gp.
    Run(RunArgs),
    /// Simulate a scenario over a parameter grid.
    Sweep(SweepArgs),
    /// Classify a critical configuration of the velocity-error potential.
    Classify(ClassifyArgs),
    /// Check whether a set of speeds can realize a reference speed.
    Feasibility(FeasibilityArgs),
    /// Run the bundled field-experiment replay.
    ReplayExperiment(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides `[sim] seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub allow_infeasible: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// TOML file with any of `gamma`, `omega0`, `weight`, `loss`, `speeds`.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Base seed; run `i` uses `seed + i`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    #[arg(long)]
    pub allow_infeasible: bool,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Comma-separated speeds, e.g. `1,2,3`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub speeds: Vec<f64>,
    /// Number of anti-aligned vehicles, taken from the front of the list.
    #[arg(long)]
    pub m: usize,
    /// Phase of the aligned group in radians.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub phi: f64,
    /// Reference velocity `x,y`.
    #[arg(long, value_delimiter = ',', num_args = 2, allow_hyphen_values = true)]
    pub reference: Option<Vec<f64>>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct FeasibilityArgs {
    #[arg(long, value_delimiter = ',', conflicts_with = "scenario", required_unless_present = "scenario")]
    pub speeds: Option<Vec<f64>>,
    /// Largest reference speed to be realized.
    #[arg(long, requires = "speeds")]
    pub bound: Option<f64>,
    /// Take speeds and bound from a scenario file instead.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long, default_value = "out/experiment_replay")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli, stdout, stderr),
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                EXIT_ERROR
            } else {
                let _ = write!(stdout, "{e}");
                EXIT_OK
            }
        }
    }
}

pub fn execute(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a, stdout),
        Command::Sweep(a) => cmd_sweep(&a, stdout),
        Command::Classify(a) => cmd_classify(&a, stdout),
        Command::Feasibility(a) => cmd_feasibility(&a, stdout),
        Command::ReplayExperiment(a) => cmd_replay(&a, stdout),
    };
    match result {
        Ok(code) => code,
        Err(Failure { code, message }) => {
            let _ = writeln!(stderr, "error: {message}");
            code
        }
    }
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn error(message: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_ERROR,
            message: message.to_string(),
        }
    }
}

impl From<scenario::ScenarioError> for Failure {
    fn from(e: scenario::ScenarioError) -> Self {
        Self {
            code: if e.kind == ScenarioErrorKind::Infeasible {
                EXIT_INFEASIBLE
            } else {
                EXIT_ERROR
            },
            message: e.to_string(),
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        Self {
            code: if matches!(e, EngineError::Infeasible(_)) {
                EXIT_INFEASIBLE
            } else {
                EXIT_ERROR
            },
            message: e.to_string(),
        }
    }
}

fn finish_run(scenario: &Scenario, out: &Path, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let log = run(&scenario.config)?;
    let summary = write_artifacts(out, &scenario.name, &log, scenario.transient)
        .map_err(|e| Failure::error(format!("cannot write artifacts to {}: {e}", out.display())))?;
    print_summary(&summary, out, stdout);
    match &log.aborted {
        None => Ok(EXIT_OK),
        Some(a) => Err(Failure::error(format!("simulation aborted at t = {}: {}", a.t, a.message))),
    }
}

fn print_summary(s: &RunSummary, out: &Path, stdout: &mut dyn Write) {
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.6}"));
    let _ = writeln!(stdout, "scenario   {}", s.scenario);
    let _ = writeln!(stdout, "rows       {} ({} agents)", s.rows, s.agents);
    let _ = writeln!(stdout, "final V    {}", opt(s.tracking.final_v));
    let _ = writeln!(
        stdout,
        "beta       max {} mean {} after t = {}",
        opt(s.tracking.beta_max),
        opt(s.tracking.beta_mean),
        s.tracking.transient
    );
    let _ = writeln!(stdout, "spacing    max {}", opt(s.tracking.spacing_max));
    if let Some(n) = &s.network {
        let _ = writeln!(stdout, "network    delivered {} dropped {}", n.delivered, n.dropped);
    }
    let _ = writeln!(stdout, "artifacts  {}", out.display());
}

fn cmd_run(a: &RunArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let scenario = parse_scenario(
        &a.scenario,
        ParseOptions {
            seed: a.seed,
            allow_infeasible: a.allow_infeasible,
        },
    )?;
    finish_run(&scenario, &a.out, stdout)
}

fn cmd_replay(a: &ReplayArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let scenario = bundled_experiment(a.seed)?;
    finish_run(&scenario, &a.out, stdout)
}

/// The bundled experiment scenario, optionally reseeded.
pub fn bundled_experiment(seed: Option<u64>) -> Result<Scenario, scenario::ScenarioError> {
    parse_scenario_str(
        EXPERIMENT_SCENARIO,
        "experiment_replay.toml",
        "experiment_replay",
        ParseOptions {
            seed,
            allow_infeasible: false,
        },
    )
}

fn cmd_sweep(a: &SweepArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let base = parse_scenario(
        &a.scenario,
        ParseOptions {
            seed: a.seed,
            allow_infeasible: a.allow_infeasible,
        },
    )?;
    let text = std::fs::read_to_string(&a.grid)
        .map_err(|e| Failure::error(format!("{}: {e}", a.grid.display())))?;
    let grid: ParameterGrid = toml::from_str(&text).map_err(|e| {
        let line = e.span().map(|s| scenario::line_of(&text, s.start));
        Failure::error(match line {
            Some(l) => format!("{}:{l}: {}", a.grid.display(), e.message().trim_end()),
            None => format!("{}: {}", a.grid.display(), e.message().trim_end()),
        })
    })?;
    let rows = run_sweep(&base, &grid, a.parallel).map_err(Failure::error)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Failure::error(format!("{}: {e}", a.out.display())))?;
    let path = a.out.join("sweep.csv");
    let file = std::fs::File::create(&path).map_err(|e| Failure::error(format!("{}: {e}", path.display())))?;
    write_sweep(std::io::BufWriter::new(file), &rows).map_err(Failure::error)?;
    let failed = rows.iter().filter(|r| r.status != sweep::RunStatus::Ok).count();
    let _ = writeln!(stdout, "{} runs, {} not ok, table in {}", rows.len(), failed, path.display());
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct ClassifyReport<'a> {
    speeds: &'a [f64],
    m: usize,
    reflected: bool,
    velocity_error: PlanarVector,
    class: swarmtrack_core::StabilityClass,
    eigenvalues: &'a [f64],
    singular: bool,
}

fn cmd_classify(a: &ClassifyArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let reference = a
        .reference
        .as_ref()
        .map_or(PlanarVector::ZERO, |v| PlanarVector::new(v[0], v[1]));
    let spec = build_equilibrium(&a.speeds, a.m, a.phi, reference).map_err(Failure::error)?;
    let verdict = classify_equilibrium(&spec);
    if a.json {
        let report = ClassifyReport {
            speeds: &a.speeds,
            m: verdict.m,
            reflected: spec.reflected,
            velocity_error: spec.velocity_error,
            class: verdict.class,
            eigenvalues: &verdict.eigenvalues,
            singular: verdict.singular,
        };
        let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&report).map_err(Failure::error)?);
    } else {
        let _ = writeln!(stdout, "class        {:?}", verdict.class);
        let _ = writeln!(stdout, "m            {}", verdict.m);
        let eig: Vec<String> = verdict.eigenvalues.iter().map(|l| format!("{l:.12}")).collect();
        let _ = writeln!(stdout, "eigenvalues  {}", eig.join(" "));
        let _ = writeln!(stdout, "singular     {}", verdict.singular);
        if spec.reflected {
            let _ = writeln!(stdout, "note         aligned group flipped so the error points along phi");
        }
    }
    Ok(EXIT_OK)
}

fn cmd_feasibility(a: &FeasibilityArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let report = match (&a.scenario, &a.speeds) {
        (Some(path), _) => {
            let scenario = parse_scenario(
                path,
                ParseOptions {
                    seed: None,
                    allow_infeasible: true,
                },
            )?;
            let speeds: Vec<f64> = scenario.config.agents.iter().map(|x| x.speed).collect();
            check_feasibility(&speeds, scenario.config.reference_speed_bound()?).map_err(Failure::error)?
        }
        (None, Some(speeds)) => {
            let bound = a.bound.ok_or_else(|| Failure::error("--bound is required with --speeds"))?;
            check_feasibility(speeds, bound).map_err(Failure::error)?
        }
        (None, None) => return Err(Failure::error("give --speeds and --bound, or --scenario")),
    };
    if a.json {
        let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&report).map_err(Failure::error)?);
    } else {
        let verdict = match (report.feasible, report.marginal) {
            (false, _) => "infeasible",
            (true, true) => "feasible (marginal)",
            (true, false) => "feasible",
        };
        let _ = writeln!(stdout, "verdict            {verdict}");
        let _ = writeln!(
            stdout,
            "slowest vs bound   {} >= {}: {}",
            report.v_min, report.ref_speed_bound, report.condition1_ok
        );
        let _ = writeln!(
            stdout,
            "fastest vs others  {} <= {}: {}",
            report.v_max, report.sum_others, report.condition2_ok
        );
    }
    Ok(if report.feasible { EXIT_OK } else { EXIT_INFEASIBLE })
}
