//! `recourse` command-line interface.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid input (bad config,
//! malformed records, incomplete run directory, bad flags).

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::render::{sweep_csv, sweep_text, table_csv, table_text, TableKind};
use crate::analysis::{
    export_dashboard, fix_type_table, jury_sweep, subgroup_table, suppress_small_cells, threshold_sweep, Cell,
};
use crate::config::{ConfigError, EngineConfig};
use crate::eventlog::{read_event_log, replay_cases, write_event_log, EventLogError};
use crate::mandate::is_mandated;
use crate::report::{read_reports, write_reports, RecordFileError};
use crate::sim::{run_program, OutcomeRecord, ProgramResult, SimError};

pub const OUTPUT_DIR_ENV: &str = "RECOURSE_OUTPUT_DIR";

pub const EVENTS_FILE: &str = "events.jsonl";
pub const OUTCOMES_FILE: &str = "outcomes.csv";
pub const REPORTS_FILE: &str = "reports.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SWEEP_BASELINE_FILE: &str = "sweep_baseline.csv";
pub const SWEEP_JURY_FILE: &str = "sweep_jury.csv";
pub const TABLE_FIX_TYPES: &str = "table1_fix_types";
pub const TABLE_SUBGROUPS: &str = "table3_subgroups";
pub const DASHBOARD_FILE: &str = "dashboard.json";

const OUTCOMES_SCHEMA: &str = "# schema: recourse/outcomes v1";
const SCORES_SCHEMA: &str = "# schema: recourse/scores v1";
const MANIFEST_SCHEMA: &str = "recourse/run-manifest";

#[derive(Debug, Parser)]
#[command(name = "recourse", version, about = "Collective-recourse triage engine and program simulator")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Engine config (TOML). Defaults to the shipped calibrated config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `simulation.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true, env = OUTPUT_DIR_ENV)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score a line-delimited report file and print one CSV row per report.
    Score { file: PathBuf },
    /// Simulate a program and write the event log, outcomes and manifest.
    Simulate,
    /// Mandate-threshold sensitivity sweep.
    Sweep {
        /// Comma-separated thresholds; defaults to `analysis.thresholds`.
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        /// Also sweep after the rotating-jury representativeness shift.
        #[arg(long)]
        with_jury_intervention: bool,
        /// Representativeness shift; defaults to `simulation.delta_r`.
        #[arg(long)]
        delta_r: Option<f64>,
    },
    /// Build the outcome tables and dashboard snapshot for a run directory.
    Report {
        run_dir: PathBuf,
        /// Overrides `analysis.k_min` from the run's config.
        #[arg(long)]
        k_min: Option<usize>,
    },
    /// Replay a run's event log and print final case states.
    Replay { run_dir: PathBuf },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Records {
        path: String,
        source: RecordFileError,
    },
    #[error("incomplete run directory {dir}: missing {missing}")]
    MissingRun { dir: String, missing: String },
    #[error("invalid run directory {dir}: {reason}")]
    BadRun { dir: String, reason: String },
    #[error("invalid arguments: {0}")]
    Usage(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    EventLog(#[from] EventLogError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_)
            | CliError::Records { .. }
            | CliError::MissingRun { .. }
            | CliError::BadRun { .. }
            | CliError::Usage(_) => 2,
            CliError::EventLog(EventLogError::CorruptLog { .. } | EventLogError::Header(_)) => 2,
            CliError::Sim(SimError::Config(_) | SimError::Domain(_)) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Run manifest: enough to reproduce and audit a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub reports: usize,
    pub mandated: usize,
    pub events: usize,
    /// SHA-256 of each output file, by file name.
    pub files: std::collections::BTreeMap<String, String>,
    /// The effective config as TOML.
    pub config: String,
}

fn load_config(global: &GlobalOpts) -> Result<EngineConfig, CliError> {
    let mut config = match &global.config {
        Some(path) => EngineConfig::load(path)?,
        None => EngineConfig::default(),
    };
    if let Some(seed) = global.seed {
        config.simulation.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

/// `--out` (or the environment override) wins over `output_dir`. The
/// config itself is left untouched so manifests do not depend on where a
/// run was written.
fn output_dir(global: &GlobalOpts, config: &EngineConfig) -> PathBuf {
    global.out.clone().unwrap_or_else(|| PathBuf::from(&config.output_dir))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn outcomes_csv(outcomes: &[OutcomeRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for o in outcomes {
        w.serialize(o).expect("outcome serializes to csv");
    }
    let body = String::from_utf8(w.into_inner().expect("flush")).expect("utf-8");
    format!("{OUTCOMES_SCHEMA}\n{body}")
}

pub fn parse_outcomes_csv(text: &str) -> Result<Vec<OutcomeRecord>, csv::Error> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
        .deserialize()
        .collect()
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Score { file } => cmd_score(&cli.global, file, stdout),
        Command::Simulate => cmd_simulate(&cli.global, stdout),
        Command::Sweep {
            thresholds,
            with_jury_intervention,
            delta_r,
        } => cmd_sweep(&cli.global, thresholds.as_deref(), *with_jury_intervention, *delta_r, stdout),
        Command::Report { run_dir, k_min } => cmd_report(&cli.global, run_dir, *k_min, stdout),
        Command::Replay { run_dir } => cmd_replay(run_dir, stdout),
    }
}

fn out_err(e: std::io::Error) -> CliError {
    CliError::Io {
        path: "<stdout>".into(),
        source: e,
    }
}

fn cmd_score(global: &GlobalOpts, file: &Path, stdout: &mut dyn Write) -> Result<(), CliError> {
    let config = load_config(global)?;
    let handle = fs::File::open(file).map_err(io_err(file))?;
    let reports = read_reports(BufReader::new(handle)).map_err(|source| CliError::Records {
        path: file.display().to_string(),
        source,
    })?;
    if reports.is_empty() {
        return Ok(());
    }
    let mut out = String::new();
    out.push_str(SCORES_SCHEMA);
    out.push_str("\nid,mandate_score,mandated,threshold\n");
    for r in &reports {
        let v = is_mandated(r, &config.mandate).map_err(|e| CliError::Usage(e.to_string()))?;
        out.push_str(&format!("{},{},{},{}\n", r.id, v.score, v.mandated, v.threshold_used));
    }
    stdout.write_all(out.as_bytes()).map_err(out_err)
}

fn cmd_simulate(global: &GlobalOpts, stdout: &mut dyn Write) -> Result<(), CliError> {
    let config = load_config(global)?;
    let program = run_program(&config)?;
    let dir = output_dir(global, &config);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;

    let events = program.event_log();
    let events_path = dir.join(EVENTS_FILE);
    write_event_log(&events_path, &events)?;

    let mut reports_buf = Vec::new();
    write_reports(&mut reports_buf, &program.reports).expect("in-memory write");
    write_file(&dir.join(REPORTS_FILE), &reports_buf)?;
    write_file(&dir.join(OUTCOMES_FILE), outcomes_csv(&program.outcomes).as_bytes())?;

    let mut files = std::collections::BTreeMap::new();
    for name in [EVENTS_FILE, OUTCOMES_FILE, REPORTS_FILE] {
        files.insert(name.to_string(), sha256_file(&dir.join(name))?);
    }
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.into(),
        version: 1,
        seed: program.seed,
        config_hash: config.hash(),
        reports: program.reports.len(),
        mandated: program.mandated_count(),
        events: events.len(),
        files,
        config: config.to_toml_string(),
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    write_file(&dir.join(MANIFEST_FILE), json.as_bytes())?;

    let closed = program
        .cases
        .iter()
        .filter(|c| c.state == crate::case::CaseState::Closed)
        .count();
    writeln!(
        stdout,
        "seed {}: {} reports, {} mandated, {} closed, {} events -> {}",
        program.seed,
        program.reports.len(),
        manifest.mandated,
        closed,
        events.len(),
        dir.display()
    )
    .map_err(out_err)
}

fn cmd_sweep(
    global: &GlobalOpts,
    thresholds: Option<&[f64]>,
    with_jury: bool,
    delta_r: Option<f64>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let config = load_config(global)?;
    let thresholds = thresholds.unwrap_or(&config.analysis.thresholds).to_vec();
    if thresholds.is_empty() {
        return Err(CliError::Usage("at least one threshold is required".into()));
    }
    if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(CliError::Usage(format!("threshold {t} is outside [0, 1]")));
    }
    let program = run_program(&config)?;
    let dir = output_dir(global, &config);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;

    let baseline = threshold_sweep(&program, &thresholds);
    write_file(&dir.join(SWEEP_BASELINE_FILE), sweep_csv(&baseline).as_bytes())?;
    let mut text = sweep_text(&baseline);
    if with_jury {
        let jury = jury_sweep(&program, &thresholds, delta_r.unwrap_or(config.simulation.delta_r))?;
        write_file(&dir.join(SWEEP_JURY_FILE), sweep_csv(&jury).as_bytes())?;
        text.push('\n');
        text.push_str(&sweep_text(&jury));
    }
    stdout.write_all(text.as_bytes()).map_err(out_err)
}

/// Rebuilds a program from the files `simulate` wrote.
pub fn load_run(dir: &Path) -> Result<ProgramResult, CliError> {
    let bad = |reason: String| CliError::BadRun {
        dir: dir.display().to_string(),
        reason,
    };
    for name in [MANIFEST_FILE, EVENTS_FILE, OUTCOMES_FILE, REPORTS_FILE] {
        if !dir.join(name).is_file() {
            return Err(CliError::MissingRun {
                dir: dir.display().to_string(),
                missing: name.to_string(),
            });
        }
    }
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: Manifest = serde_json::from_slice(&fs::read(&manifest_path).map_err(io_err(&manifest_path))?)
        .map_err(|e| bad(format!("{MANIFEST_FILE}: {e}")))?;
    let config = EngineConfig::from_toml_str(&manifest.config)?;
    if config.hash() != manifest.config_hash {
        return Err(bad("embedded config does not match its recorded hash".into()));
    }

    let reports_path = dir.join(REPORTS_FILE);
    let handle = fs::File::open(&reports_path).map_err(io_err(&reports_path))?;
    let reports = read_reports(BufReader::new(handle)).map_err(|source| CliError::Records {
        path: reports_path.display().to_string(),
        source,
    })?;

    let log = read_event_log(&dir.join(EVENTS_FILE))?;
    for w in &log.warnings {
        log::warn!("{w}");
    }
    let cases = replay_cases(&log.events, &reports)?;

    let outcomes_path = dir.join(OUTCOMES_FILE);
    let outcomes_text = fs::read_to_string(&outcomes_path).map_err(io_err(&outcomes_path))?;
    let outcomes = parse_outcomes_csv(&outcomes_text).map_err(|e| bad(format!("{OUTCOMES_FILE}: {e}")))?;

    if cases.len() != reports.len() || outcomes.len() != reports.len() {
        return Err(bad(format!(
            "{} reports, {} replayed cases, {} outcomes",
            reports.len(),
            cases.len(),
            outcomes.len()
        )));
    }
    if outcomes.iter().zip(&reports).any(|(o, r)| o.case_id != r.id) {
        return Err(bad("outcomes are not in report order".into()));
    }
    Ok(ProgramResult {
        seed: manifest.seed,
        config,
        reports,
        cases,
        outcomes,
    })
}

fn cmd_report(
    global: &GlobalOpts,
    run_dir: &Path,
    k_min: Option<usize>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let program = load_run(run_dir)?;
    let k_min = k_min.unwrap_or(program.config.analysis.k_min);
    if k_min == 0 {
        return Err(CliError::Usage("k_min must be at least 1".into()));
    }
    let dir = global.out.clone().unwrap_or_else(|| run_dir.to_path_buf());
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;

    let fix_rows: Vec<Cell<_>> = fix_type_table(&program.outcomes).into_iter().map(Cell::Retained).collect();
    let subgroup_rows = suppress_small_cells(&subgroup_table(&program.outcomes), k_min);
    write_file(
        &dir.join(format!("{TABLE_FIX_TYPES}.csv")),
        table_csv(TableKind::FixTypes, &fix_rows).as_bytes(),
    )?;
    let fix_text = table_text(TableKind::FixTypes, &fix_rows);
    write_file(&dir.join(format!("{TABLE_FIX_TYPES}.txt")), fix_text.as_bytes())?;
    write_file(
        &dir.join(format!("{TABLE_SUBGROUPS}.csv")),
        table_csv(TableKind::Subgroups, &subgroup_rows).as_bytes(),
    )?;
    let subgroup_text = table_text(TableKind::Subgroups, &subgroup_rows);
    write_file(&dir.join(format!("{TABLE_SUBGROUPS}.txt")), subgroup_text.as_bytes())?;

    let sweep = threshold_sweep(&program, &program.config.analysis.thresholds);
    let dashboard = export_dashboard(&program, &sweep, k_min);
    write_file(&dir.join(DASHBOARD_FILE), dashboard.to_json().as_bytes())?;

    write!(stdout, "{fix_text}\n{subgroup_text}").map_err(out_err)
}

fn cmd_replay(run_dir: &Path, stdout: &mut dyn Write) -> Result<(), CliError> {
    let program = load_run(run_dir)?;
    let mut counts = std::collections::BTreeMap::new();
    for c in &program.cases {
        *counts.entry(c.state.to_string()).or_insert(0usize) += 1;
    }
    let mut out = format!("replayed {} cases\n", program.cases.len());
    for (state, n) in counts {
        out.push_str(&format!("{state}: {n}\n"));
    }
    stdout.write_all(out.as_bytes()).map_err(out_err)
}
