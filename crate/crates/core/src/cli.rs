//! Command-line front end.
//!
//! Exit codes: 0 ok, 2 configuration or input error, 3 I/O failure,
//! 4 integrity failure (log does not replay), 5 constraint violations.

use std::ffi::OsString;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::agents::{run, RunOutcome};
use crate::config::ScenarioConfig;
use crate::constraints::check_all;
use crate::engine::{Engine, ReplayError, ReplayFailure};
use crate::event::{read_log, write_log, EventRecord};
use crate::fraud::{detect_fast_claims, scoreboard, FraudParams};
use crate::report::RunReport;
use crate::types::Rate;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_INTEGRITY: i32 = 4;
pub const EXIT_VIOLATIONS: i32 = 5;

pub const LOG_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Parser)]
#[command(name = "sfcm", version, about = "Secured fiscal credits simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write the event log, snapshot and report.
    Run(RunArgs),
    /// Replay a log, verify every hash and audit the final state.
    Replay(LogArgs),
    /// Replay a log and print every constraint violation.
    Validate(LogArgs),
    /// Score contractors and flag suspiciously fast claims.
    Audit(AuditArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario file (TOML). Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub max_ticks: Option<u64>,
    #[arg(long)]
    pub suspicion_rate: Option<f64>,
    /// w1,w2,w3
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub weights: Option<Vec<f64>>,
    #[arg(long)]
    pub limit: Option<f64>,
    /// Run this many consecutive seeds in parallel, one subdirectory each.
    #[arg(long)]
    pub sweep: Option<u64>,
}

#[derive(Debug, Args)]
pub struct LogArgs {
    pub log: PathBuf,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    pub log: PathBuf,
    #[arg(long)]
    pub suspicion_rate: Option<f64>,
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub weights: Option<Vec<f64>>,
    #[arg(long)]
    pub limit: Option<f64>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            if e.use_stderr() {
                let _ = write!(err, "{e}");
            } else {
                let _ = write!(out, "{e}");
            }
            return code;
        }
    };
    match cli.command {
        Command::Run(args) => cmd_run(&args, out, err),
        Command::Replay(args) => cmd_replay(&args.log, out, err),
        Command::Validate(args) => cmd_validate(&args.log, out, err),
        Command::Audit(args) => cmd_audit(&args, out, err),
    }
}

fn override_fraud(
    config: &mut crate::config::FraudConfig,
    suspicion_rate: Option<f64>,
    weights: Option<&[f64]>,
    limit: Option<f64>,
) {
    if let Some(s) = suspicion_rate {
        config.suspicion_rate = s;
    }
    if let Some(w) = weights {
        config.weights = [w[0], w[1], w[2]];
    }
    if let Some(l) = limit {
        config.limit = l;
    }
}

pub fn cmd_run(args: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let mut config = match &args.config {
        Some(path) => match ScenarioConfig::load(path) {
            Ok(config) => config,
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                return EXIT_INPUT;
            }
        },
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(max_ticks) = args.max_ticks {
        config.max_ticks = max_ticks;
    }
    override_fraud(&mut config.fraud, args.suspicion_rate, args.weights.as_deref(), args.limit);
    if let Err(e) = config.validate() {
        let _ = writeln!(err, "error: {e}");
        return EXIT_INPUT;
    }

    let seeds: Vec<u64> = match args.sweep {
        Some(n) => (0..n.max(1)).map(|i| config.seed.wrapping_add(i)).collect(),
        None => vec![config.seed],
    };
    let configs: Vec<ScenarioConfig> = seeds
        .iter()
        .map(|&seed| ScenarioConfig { seed, ..config.clone() })
        .collect();
    let outcomes: Vec<crate::Result<RunOutcome>> = if configs.len() == 1 {
        vec![run(&configs[0])]
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = configs.iter().map(|c| scope.spawn(move || run(c))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("simulation thread panicked"))
                .collect()
        })
    };

    let mut code = EXIT_OK;
    for (seed, outcome) in seeds.iter().zip(outcomes) {
        let outcome = match outcome {
            Ok(outcome) => outcome,
            Err(e) => {
                let _ = writeln!(err, "error: seed {seed}: {e}");
                return EXIT_INPUT;
            }
        };
        let dir = if args.sweep.is_some() {
            args.out.join(format!("seed-{seed}"))
        } else {
            args.out.clone()
        };
        let report = RunReport::build(&outcome.state, &outcome.log);
        if let Err(e) = write_outputs(&dir, &outcome, &report) {
            let _ = writeln!(err, "error: writing {}: {e}", dir.display());
            return EXIT_IO;
        }
        let _ = writeln!(
            out,
            "seed {seed}: {} events, {} ticks, status {:?}, {} violations, head {}",
            outcome.log.len(),
            outcome.ticks,
            outcome.status,
            report.violations.len(),
            report.meta.head_hash
        );
        if !report.violations.is_empty() {
            code = EXIT_VIOLATIONS;
        }
    }
    code
}

fn write_outputs(dir: &Path, outcome: &RunOutcome, report: &RunReport) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let file = fs::File::create(dir.join(LOG_FILE))?;
    write_log(std::io::BufWriter::new(file), &outcome.log)?;
    fs::write(dir.join(SNAPSHOT_FILE), outcome.state.canonical_bytes())?;
    fs::write(dir.join(REPORT_FILE), report.to_json())?;
    Ok(())
}

enum Loaded {
    Records(Vec<EventRecord>),
    Exit(i32),
}

fn load_log(path: &Path, err: &mut dyn Write) -> Loaded {
    let file = match fs::File::open(path) {
        Ok(file) => file,
        Err(e) => {
            let _ = writeln!(err, "error: cannot read {}: {e}", path.display());
            return Loaded::Exit(EXIT_INPUT);
        }
    };
    match read_log(BufReader::new(file)) {
        Ok(Ok(records)) => Loaded::Records(records),
        Ok(Err(failure)) => {
            let _ = writeln!(
                err,
                "integrity: seq {}: undecodable record: {}",
                failure.line, failure.message
            );
            Loaded::Exit(EXIT_INTEGRITY)
        }
        Err(e) => {
            let _ = writeln!(err, "error: reading {}: {e}", path.display());
            Loaded::Exit(EXIT_IO)
        }
    }
}

fn replay_or_report(records: &[EventRecord], err: &mut dyn Write) -> Result<Engine, i32> {
    Engine::replay(records).map_err(|e: ReplayError| {
        let _ = writeln!(err, "integrity: {e}");
        match e.failure {
            ReplayFailure::Empty => EXIT_INPUT,
            _ => EXIT_INTEGRITY,
        }
    })
}

pub fn cmd_replay(path: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let records = match load_log(path, err) {
        Loaded::Records(records) => records,
        Loaded::Exit(code) => return code,
    };
    let engine = match replay_or_report(&records, err) {
        Ok(engine) => engine,
        Err(code) => return code,
    };
    let violations = check_all(engine.state());
    let _ = writeln!(
        out,
        "replayed {} events, head {}, {} violations",
        records.len(),
        records.last().map(|r| r.state_hash.as_str()).unwrap_or(""),
        violations.len()
    );
    for v in &violations {
        let _ = writeln!(out, "{}", serde_json::to_string(v).expect("violation serializes"));
    }
    if violations.is_empty() {
        EXIT_OK
    } else {
        EXIT_VIOLATIONS
    }
}

pub fn cmd_validate(path: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let records = match load_log(path, err) {
        Loaded::Records(records) => records,
        Loaded::Exit(code) => return code,
    };
    let engine = match replay_or_report(&records, err) {
        Ok(engine) => engine,
        Err(code) => return code,
    };
    let violations = check_all(engine.state());
    for v in &violations {
        let _ = writeln!(out, "{}", serde_json::to_string(v).expect("violation serializes"));
    }
    if violations.is_empty() {
        EXIT_OK
    } else {
        EXIT_VIOLATIONS
    }
}

fn fraud_params(base: &FraudParams, args: &AuditArgs) -> Result<FraudParams, String> {
    let rate = |name: &str, v: f64| Rate::from_f64(v).ok_or_else(|| format!("{name} must be a non-negative number"));
    let mut params = base.clone();
    if let Some(s) = args.suspicion_rate {
        params.suspicion_rate = rate("--suspicion-rate", s)?;
    }
    if let Some(w) = &args.weights {
        params.weights = [rate("--weights", w[0])?, rate("--weights", w[1])?, rate("--weights", w[2])?];
    }
    if let Some(l) = args.limit {
        params.limit = rate("--limit", l)?;
    }
    Ok(params)
}

/// Advisory: exits 0 whatever it finds, unless the log cannot be used.
pub fn cmd_audit(args: &AuditArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let records = match load_log(&args.log, err) {
        Loaded::Records(records) => records,
        Loaded::Exit(code) => return if code == EXIT_IO { EXIT_IO } else { EXIT_INPUT },
    };
    let engine = match replay_or_report(&records, err) {
        Ok(engine) => engine,
        Err(_) => return EXIT_INPUT,
    };
    let params = match fraud_params(&engine.state().params.fraud, args) {
        Ok(params) => params,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            return EXIT_INPUT;
        }
    };
    let reports = detect_fast_claims(engine.state(), params.suspicion_rate);
    for r in &reports {
        let _ = writeln!(out, "{}", serde_json::json!({ "suspicion": r }));
    }
    for row in scoreboard(engine.state(), &params) {
        let _ = writeln!(out, "{}", serde_json::json!({ "score": row }));
    }
    let flagged = reports.iter().filter(|r| r.flagged).count();
    let _ = writeln!(err, "{flagged} of {} claims flagged", reports.len());
    EXIT_OK
}
