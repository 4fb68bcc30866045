//! Command implementations for the `crowdstate` binary. Every command writes
//! data to `out`, diagnostics to `err`, and returns an [`ExitStatus`].

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use crowdstate::classify::{read_samples, series_to_transitions, ClassifierConfig};
use crowdstate::stochastic::{walk, WalkConfig, WeightTable};
use crowdstate::trace::{self, Replay};
use crowdstate::{default_schema, CrowdThread, HistoryEntry, PhaseId, StateId};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    /// Illegal transition, parse error, replay error, bad data.
    DomainError = 1,
    /// Bad flags, missing or unwritable files.
    UsageError = 2,
}

impl ExitStatus {
    pub fn code(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Parser)]
#[command(name = "crowdstate", version, about = "State-based crowd model tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and replay a trace, then summarise the resulting world.
    Validate {
        path: PathBuf,
        /// Emit a JSON report on standard output.
        #[arg(long)]
        json: bool,
    },
    /// Print a seeded random walk as a single-thread trace.
    Simulate {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        steps: usize,
        /// Weight file (`from -> to weight` lines).
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Starting state; defaults to assembly.planned.
        #[arg(long)]
        start: Option<String>,
    },
    /// Turn a metric time series into `@timestamp state` lines.
    Classify {
        #[arg(long)]
        input: PathBuf,
        /// TOML file overriding classifier thresholds.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Write the default schema as a Graphviz digraph.
    ExportDot {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut impl Write, err: &mut impl Write) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let informational = !e.use_stderr();
            let rendered = e.render().to_string();
            if informational {
                let _ = out.write_all(rendered.as_bytes());
                return ExitStatus::Success;
            }
            let _ = err.write_all(rendered.as_bytes());
            return ExitStatus::UsageError;
        }
    };
    let outcome = match cli.command {
        Command::Validate { path, json } => cmd_validate(&path, json, out, err),
        Command::Simulate {
            seed,
            steps,
            weights,
            start,
        } => cmd_simulate(seed, steps, weights.as_deref(), start.as_deref(), out, err),
        Command::Classify {
            input,
            config,
            json,
        } => cmd_classify(&input, config.as_deref(), json, out, err),
        Command::ExportDot { out: path } => cmd_export_dot(path.as_deref(), out, err),
    };
    outcome.unwrap_or(ExitStatus::UsageError)
}

fn read_input(path: &Path, err: &mut impl Write) -> Result<String, ExitStatus> {
    fs::read_to_string(path).map_err(|e| {
        let _ = writeln!(err, "{}: error: cannot read file: {e}", path.display());
        ExitStatus::UsageError
    })
}

fn fail(err: &mut impl Write, status: ExitStatus, message: impl std::fmt::Display) -> ExitStatus {
    let _ = writeln!(err, "error: {message}");
    status
}

#[derive(Serialize)]
struct JsonEntry<'a> {
    index: usize,
    kind: &'static str,
    state: String,
    timestamp: Option<&'a str>,
    note: Option<&'a str>,
    cause: Option<String>,
}

impl<'a> From<&'a HistoryEntry> for JsonEntry<'a> {
    fn from(e: &'a HistoryEntry) -> Self {
        Self {
            index: e.sequence_index,
            kind: e.kind.name(),
            state: e.state.to_string(),
            timestamp: e.timestamp.as_deref(),
            note: e.note.as_deref(),
            cause: e.cause.as_ref().map(ToString::to_string),
        }
    }
}

#[derive(Serialize)]
struct JsonThread<'a> {
    id: u32,
    parent: Option<u32>,
    state: String,
    alive: bool,
    history: Vec<JsonEntry<'a>>,
}

impl<'a> From<&'a CrowdThread> for JsonThread<'a> {
    fn from(t: &'a CrowdThread) -> Self {
        Self {
            id: t.id().get(),
            parent: t.parent().map(|p| p.get()),
            state: t.current().to_string(),
            alive: t.alive(),
            history: t.history().iter().map(JsonEntry::from).collect(),
        }
    }
}

#[derive(Serialize)]
struct JsonForced {
    line: usize,
    thread: u32,
    from: String,
    to: String,
    depth: usize,
    cause: String,
}

#[derive(Serialize)]
struct JsonSkipped {
    line: usize,
    thread: u32,
    target: String,
    cause: String,
    reason: String,
}

#[derive(Serialize)]
struct JsonError {
    stage: &'static str,
    line: usize,
    column: Option<usize>,
    message: String,
}

#[derive(Serialize)]
struct ValidateReport<'a> {
    ok: bool,
    source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<JsonError>,
    #[serde(skip_serializing_if = "Option::is_none")]
    statements: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    transitions: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    threads: Vec<JsonThread<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    forced: Option<Vec<JsonForced>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    skipped: Option<Vec<JsonSkipped>>,
}

fn skip_reason(reason: crowdstate::SkipReason) -> String {
    match reason {
        crowdstate::SkipReason::Illegal { from } => format!("illegal from {from}"),
        crowdstate::SkipReason::AlreadyInTarget => "already in target".to_string(),
    }
}

fn write_json(out: &mut impl Write, value: &impl Serialize) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(io::Error::other)?;
    writeln!(out)
}

pub fn cmd_validate(
    path: &Path,
    json: bool,
    out: &mut impl Write,
    err: &mut impl Write,
) -> io::Result<ExitStatus> {
    let text = match read_input(path, err) {
        Ok(t) => t,
        Err(status) => return Ok(status),
    };
    let source = path.display().to_string();
    let failed = |error: JsonError| ValidateReport {
        ok: false,
        source: source.clone(),
        error: Some(error),
        statements: None,
        transitions: None,
        threads: Vec::new(),
        forced: None,
        skipped: None,
    };

    let parsed = match trace::parse_named(&text, &source) {
        Ok(t) => t,
        Err(e) => {
            writeln!(
                err,
                "{source}:{}:{}: error: {}",
                e.line, e.column, e.message
            )?;
            if json {
                write_json(
                    out,
                    &failed(JsonError {
                        stage: "parse",
                        line: e.line,
                        column: Some(e.column),
                        message: e.message,
                    }),
                )?;
            }
            return Ok(ExitStatus::DomainError);
        }
    };
    let Replay { world, report } = match trace::replay(&parsed, &default_schema()) {
        Ok(r) => r,
        Err(e) => {
            writeln!(err, "{source}:{}: error: {}", e.line, e.message)?;
            if json {
                write_json(
                    out,
                    &failed(JsonError {
                        stage: "replay",
                        line: e.line,
                        column: None,
                        message: e.message,
                    }),
                )?;
            }
            return Ok(ExitStatus::DomainError);
        }
    };

    if json {
        let report = ValidateReport {
            ok: true,
            source,
            error: None,
            statements: Some(parsed.len()),
            transitions: Some(report.transitions),
            threads: world.threads().map(JsonThread::from).collect(),
            forced: Some(
                report
                    .forced
                    .iter()
                    .map(|(line, f)| JsonForced {
                        line: *line,
                        thread: f.thread.get(),
                        from: f.from.to_string(),
                        to: f.to.to_string(),
                        depth: f.depth,
                        cause: f.cause.to_string(),
                    })
                    .collect(),
            ),
            skipped: Some(
                report
                    .skipped
                    .iter()
                    .map(|(line, s)| JsonSkipped {
                        line: *line,
                        thread: s.thread.get(),
                        target: s.target.to_string(),
                        cause: s.cause.to_string(),
                        reason: skip_reason(s.reason),
                    })
                    .collect(),
            ),
        };
        write_json(out, &report)?;
    } else {
        writeln!(out, "threads: {}", world.thread_count())?;
        writeln!(out, "transitions: {}", report.transitions)?;
        writeln!(out, "forced transitions: {}", report.forced.len())?;
        writeln!(out, "skipped forced transitions: {}", report.skipped.len())?;
        for thread in world.threads() {
            writeln!(out, "thread {}: {}", thread.id(), thread.current())?;
        }
    }
    Ok(ExitStatus::Success)
}

/// Renders a walk as trace text. Non-assembly starts are preceded by a
/// synthetic physical assembly so the output replays cleanly.
pub fn walk_to_trace(states: &[StateId]) -> String {
    let mut text = String::new();
    let Some((&start, rest)) = states.split_first() else {
        return text;
    };
    if start.phase() == PhaseId::Assembly {
        let _ = writeln!(text, "thread 1 assemble {} @0", start.local_name());
    } else {
        let _ = writeln!(
            text,
            "thread 1 assemble physical @0 \"synthetic assembly for a walk starting at {start}\""
        );
        let _ = writeln!(text, "thread 1 goto {start} @0");
    }
    for (i, &state) in rest.iter().enumerate() {
        if state == StateId::Terminal {
            let _ = writeln!(text, "thread 1 end @{}", i + 1);
        } else {
            let _ = writeln!(text, "thread 1 goto {state} @{}", i + 1);
        }
    }
    text
}

pub fn cmd_simulate(
    seed: u64,
    steps: usize,
    weights: Option<&Path>,
    start: Option<&str>,
    out: &mut impl Write,
    err: &mut impl Write,
) -> io::Result<ExitStatus> {
    let schema = default_schema();
    let start = match start.map(str::parse::<StateId>) {
        None => StateId::AssemblyPlanned,
        Some(Ok(s)) => s,
        Some(Err(e)) => return Ok(fail(err, ExitStatus::UsageError, format!("--start: {e}"))),
    };
    let config = WalkConfig::new(seed, steps, start).allow_any_start();
    if let Err(e) = config.validate(&schema) {
        return Ok(fail(err, ExitStatus::UsageError, e));
    }
    let table = match weights {
        None => WeightTable::new(schema),
        Some(path) => {
            let text = match read_input(path, err) {
                Ok(t) => t,
                Err(status) => return Ok(status),
            };
            match WeightTable::parse(&text, schema) {
                Ok(t) => t,
                Err(e) => {
                    writeln!(err, "{}:{}: error: {}", path.display(), e.line, e.message)?;
                    return Ok(ExitStatus::DomainError);
                }
            }
        }
    };
    match walk(&table, &config) {
        Ok(result) => {
            out.write_all(walk_to_trace(&result.states).as_bytes())?;
            Ok(ExitStatus::Success)
        }
        Err(e) => Ok(fail(err, ExitStatus::DomainError, e)),
    }
}

#[derive(Serialize)]
struct JsonTransition<'a> {
    timestamp: &'a str,
    state: String,
}

#[derive(Serialize)]
struct ClassifyReport<'a> {
    source: String,
    samples: usize,
    transitions: Vec<JsonTransition<'a>>,
}

pub fn cmd_classify(
    input: &Path,
    config: Option<&Path>,
    json: bool,
    out: &mut impl Write,
    err: &mut impl Write,
) -> io::Result<ExitStatus> {
    let classifier = match config {
        None => ClassifierConfig::default(),
        Some(path) => {
            let text = match read_input(path, err) {
                Ok(t) => t,
                Err(status) => return Ok(status),
            };
            match toml::from_str::<ClassifierConfig>(&text) {
                Ok(c) => c,
                Err(e) => {
                    writeln!(err, "{}: error: {}", path.display(), e.message())?;
                    return Ok(ExitStatus::DomainError);
                }
            }
        }
    };
    let file = match fs::File::open(input) {
        Ok(f) => f,
        Err(e) => {
            writeln!(err, "{}: error: cannot read file: {e}", input.display())?;
            return Ok(ExitStatus::UsageError);
        }
    };
    let samples = match read_samples(file) {
        Ok(s) => s,
        Err(e) => {
            writeln!(err, "{}:{}: error: {}", input.display(), e.line, e.message)?;
            return Ok(ExitStatus::DomainError);
        }
    };
    let transitions = match series_to_transitions(&classifier, &samples) {
        Ok(t) => t,
        Err(e) => {
            writeln!(err, "{}: error: {e}", input.display())?;
            return Ok(ExitStatus::DomainError);
        }
    };
    if json {
        let report = ClassifyReport {
            source: input.display().to_string(),
            samples: samples.len(),
            transitions: transitions
                .iter()
                .map(|(ts, state)| JsonTransition {
                    timestamp: ts,
                    state: state.to_string(),
                })
                .collect(),
        };
        write_json(out, &report)?;
    } else {
        for (ts, state) in &transitions {
            writeln!(out, "@{ts} {state}")?;
        }
    }
    Ok(ExitStatus::Success)
}

pub fn cmd_export_dot(
    path: Option<&Path>,
    out: &mut impl Write,
    err: &mut impl Write,
) -> io::Result<ExitStatus> {
    let dot = default_schema().to_dot();
    match path {
        None => {
            out.write_all(dot.as_bytes())?;
            Ok(ExitStatus::Success)
        }
        Some(path) => match fs::write(path, dot) {
            Ok(()) => Ok(ExitStatus::Success),
            Err(e) => {
                writeln!(err, "{}: error: cannot write file: {e}", path.display())?;
                Ok(ExitStatus::UsageError)
            }
        },
    }
}
