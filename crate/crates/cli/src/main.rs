//! `xdeal`: run, explore and replay cross-chain deal scenarios.
//!
//! Exit status: 0 when every applicable property holds, 1 on I/O errors,
//! 2 on scenario or trace parse errors, 3 on a property failure, 4 when no
//! property applied, 5 when a replayed trace is inconsistent.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use xdeal_core::adversary::{campaign, explore};
use xdeal_core::cost::GasSchedule;
use xdeal_core::properties::Status;
use xdeal_core::replay::{self, ReplayError};
use xdeal_core::report;
use xdeal_core::{simulate_random, Scenario, ScenarioError, SimError};

const EXIT_IO: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_PROPERTY: u8 = 3;
const EXIT_INAPPLICABLE: u8 = 4;
const EXIT_REPLAY: u8 = 5;

#[derive(Parser)]
#[command(name = "xdeal", version, about = "Cross-chain deal simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Text,
    Structured,
}

#[derive(clap::Args)]
struct GasArgs {
    /// Gas per storage write.
    #[arg(long, default_value_t = 5000)]
    gas_write: u64,
    /// Gas per signature verification.
    #[arg(long, default_value_t = 3000)]
    gas_sig: u64,
}

impl GasArgs {
    fn schedule(&self) -> GasSchedule {
        GasSchedule {
            write: self.gas_write,
            sig: self.gas_sig,
        }
    }
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run a randomized campaign of this many runs.
    #[arg(long, conflicts_with = "explore")]
    runs: Option<usize>,
    /// Enumerate delivery schedules and adversary strategies.
    #[arg(long)]
    explore: bool,
    /// Maximum choice points per explored run.
    #[arg(long, requires = "explore")]
    max_depth: Option<usize>,
    #[arg(long, value_enum, default_value = "text")]
    report: ReportFormat,
    /// Write the run's trace here (the minimal or first violating trace
    /// for explorations and campaigns).
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    gas: GasArgs,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario once, as a seeded campaign, or under exhaustive
    /// exploration.
    Run(RunArgs),
    /// Re-derive a run's outcome, verdicts and costs from a trace file.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        report: ReportFormat,
        #[command(flatten)]
        gas: GasArgs,
    },
}

struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn new(code: u8, msg: impl Into<String>) -> Self {
        Self { code, msg: msg.into() }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let code = if matches!(e, ScenarioError::Io { .. }) {
            EXIT_IO
        } else {
            EXIT_PARSE
        };
        Failure::new(code, e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::new(EXIT_PARSE, e.to_string())
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))
}

fn status_code(s: Status) -> u8 {
    match s {
        Status::Pass => 0,
        Status::Fail => EXIT_PROPERTY,
        Status::Inapplicable => EXIT_INAPPLICABLE,
    }
}

fn run(a: &RunArgs) -> Result<u8, Failure> {
    let format = a.report;
    let trace_out = a.trace.as_deref();
    let s = Scenario::load(&a.scenario)?;
    s.validate()?;
    let seed = a.seed.unwrap_or(s.seed);

    if a.explore {
        let mut cfg = s.explore.clone().unwrap_or_default();
        if let Some(d) = a.max_depth {
            cfg.max_choice_points = d;
        }
        let r = explore::explore(&s, seed, &cfg)?;
        match format {
            ReportFormat::Text => print!("{}", r.render_text()),
            ReportFormat::Structured => println!("{}", r.to_json()),
        }
        if let (Some(out), Some(m)) = (trace_out, &r.minimal) {
            write_file(out, &m.trace)?;
        }
        return Ok(match r.verdict {
            explore::ExploreVerdict::Unsafe => EXIT_PROPERTY,
            _ => 0,
        });
    }

    if let Some(n) = a.runs {
        let mut cfg = s.campaign.clone().unwrap_or_default();
        cfg.runs = n;
        let r = campaign::run_campaign(&s, &cfg, seed)?;
        match format {
            ReportFormat::Text => print!("{}", r.render_text()),
            ReportFormat::Structured => println!("{}", r.to_json()),
        }
        if let (Some(out), Some(v)) = (trace_out, r.violations.first()) {
            write_file(out, &v.trace)?;
        }
        return Ok(if r.violations.is_empty() { 0 } else { EXIT_PROPERTY });
    }

    let trace = simulate_random(&s, seed)?;
    let r = report::build(&trace, &s, a.gas.schedule());
    match format {
        ReportFormat::Text => print!("{}", report::render_text(&r)),
        ReportFormat::Structured => println!("{}", report::to_json(&r)),
    }
    if let Some(out) = trace_out {
        write_file(out, &replay::export(&trace, &s))?;
    }
    Ok(status_code(r.overall))
}

fn replay_cmd(path: &Path, format: ReportFormat, gas: GasSchedule) -> Result<u8, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))?;
    let back = replay::replay(&text).map_err(|e| {
        let code = match &e {
            ReplayError::Inconsistent { .. } => EXIT_REPLAY,
            _ => EXIT_PARSE,
        };
        Failure::new(code, format!("{}: {e}", path.display()))
    })?;
    let r = report::build(&back.trace, &back.scenario, gas);
    match format {
        ReportFormat::Text => print!("{}", report::render_text(&r)),
        ReportFormat::Structured => println!("{}", report::to_json(&r)),
    }
    Ok(status_code(r.overall))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Run(a) => run(a),
        Cmd::Replay { trace, report, gas } => replay_cmd(trace, *report, gas.schedule()),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
