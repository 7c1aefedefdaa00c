//! Command-line front end: single runs, enumerations, the comparison matrix and trace replay.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use fairpay::sched::{self, Mode, Scenario, ScenarioError, SchedError};
use fairpay::verdicts::{self, Matrix, Verdict, VerdictError, TIMELINESS_BOUND};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;

pub const SUITE_ENV: &str = "FAIRPAY_SUITE_DIR";

#[derive(Debug, Parser)]
#[command(name = "fairpay", version, about = "Simulate and check fair payment-for-receipt protocols")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Copy, Default)]
pub struct Global {
    /// Override the seed in every scenario file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for independent scenarios.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Cap on enumeration depth.
    #[arg(long, global = true)]
    pub bound: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario in its own mode and write trace.jsonl and verdict.json.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Like `run`, but explore every schedule up to the bound.
    Enumerate {
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Evaluate a suite directory and compare against the expected matrix.
    Matrix {
        /// Defaults to $FAIRPAY_SUITE_DIR.
        suite: Option<PathBuf>,
        /// Path of matrix.json; the text table goes next to it as matrix.txt.
        #[arg(long, default_value = "matrix.json")]
        out: PathBuf,
    },
    /// Re-execute a trace file and diff it byte for byte.
    Replay { trace: PathBuf },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Schema { path: PathBuf, source: ScenarioError },
    #[error("incomplete suite: no honest scenario for {0}")]
    IncompleteSuite(String),
    #[error("no suite directory given and {SUITE_ENV} is unset")]
    NoSuite,
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error(transparent)]
    Verdict(#[from] VerdictError),
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema { .. } | CliError::IncompleteSuite(_) | CliError::NoSuite => EXIT_SCHEMA,
            CliError::Sched(SchedError::Scenario(_) | SchedError::BadTrace(_)) => EXIT_SCHEMA,
            CliError::Verdict(VerdictError::Sched(SchedError::Scenario(_))) => EXIT_SCHEMA,
            _ => EXIT_FAILURE,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
    }
    fs::write(path, text).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

/// Serializes with keys in sorted order.
pub fn sorted_json<T: Serialize>(v: &T) -> String {
    let value = serde_json::to_value(v).expect("serializable");
    let mut s = serde_json::to_string_pretty(&value).expect("serializable");
    s.push('\n');
    s
}

/// Loads a scenario and applies command-line overrides, then validates.
pub fn load_scenario(path: &Path, g: Global, force_enumerate: bool) -> Result<Scenario, CliError> {
    let schema = |source| CliError::Schema { path: path.to_path_buf(), source };
    let text = read(path)?;
    let mut s = Scenario::from_json(&text).map_err(schema)?;
    if let Some(seed) = g.seed {
        s.seed = seed;
    }
    if force_enumerate {
        s.mode = Mode::Enumerate;
        if s.bound.is_none() {
            s.bound = Some(TIMELINESS_BOUND);
        }
    }
    if let Some(cap) = g.bound {
        s.bound = Some(s.bound.unwrap_or(cap).min(cap));
    }
    s.validate().map_err(schema)?;
    Ok(s)
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Other(e.to_string()))
}

fn cmd_run(path: &Path, out: &Path, g: Global, force_enumerate: bool) -> Result<i32, CliError> {
    let s = load_scenario(path, g, force_enumerate)?;
    let e = verdicts::evaluate(&s)?;
    write(&out.join("trace.jsonl"), &e.trace.to_jsonl())?;
    write(&out.join("verdict.json"), &sorted_json(&e.verdict))?;
    let v = &e.verdict;
    println!(
        "{} {}: fairness {:?}, effectiveness {:?}, timeliness {}, {} trace(s)",
        v.protocol.name(),
        v.name.as_deref().unwrap_or("-"),
        v.fairness,
        v.effectiveness,
        v.timeliness.map_or("-".to_string(), |t| format!("{t:?}")),
        v.traces
    );
    for m in &v.mismatches {
        println!("mismatch: {m}");
    }
    Ok(if v.mismatches.is_empty() { EXIT_OK } else { EXIT_MISMATCH })
}

/// Scenario files of a suite directory, sorted by file name.
pub fn suite_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

#[derive(Serialize)]
struct MatrixReport<'a> {
    matrix: &'a Matrix,
    expected: &'a Matrix,
    mismatches: &'a [String],
    scenarios: Vec<&'a Verdict>,
}

/// Cells where `got` differs from `want`, as `protocol column: expected X, got Y`.
pub fn matrix_diff(got: &Matrix, want: &Matrix) -> Vec<String> {
    let cells = |m: &Matrix| -> Vec<(String, String, String)> {
        let v = serde_json::to_value(m).expect("serializable");
        let mut out = Vec::new();
        for (p, row) in v.as_object().expect("map") {
            for (col, cell) in row.as_object().expect("row") {
                out.push((p.clone(), col.clone(), cell.to_string()));
            }
        }
        out
    };
    let (g, w) = (cells(got), cells(want));
    let mut out = Vec::new();
    for (p, col, want) in &w {
        let got = g.iter().find(|(gp, gc, _)| gp == p && gc == col).map_or("missing", |(_, _, v)| v.as_str());
        if got != want {
            out.push(format!("{p} {col}: expected {want}, got {got}"));
        }
    }
    out
}

/// Fixed-width rendering of a matrix.
pub fn matrix_table(m: &Matrix) -> String {
    let yes = |b: bool| if b { "yes" } else { "no" }.to_string();
    let header = ["protocol", "fairness", "timeliness", "effectiveness", "non-invasive", "no-ttp", "duration"];
    let rows: Vec<[String; 7]> = m
        .iter()
        .map(|(p, r)| {
            [
                p.name().to_string(),
                format!("{:?}", r.fairness),
                format!("{:?}", r.timeliness),
                format!("{:?}", r.effectiveness),
                yes(r.non_invasive),
                yes(r.no_ttp),
                format!("{:?}", r.duration).to_lowercase(),
            ]
        })
        .collect();
    let widths: Vec<usize> =
        (0..7).map(|i| rows.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0)).collect();
    let mut out = String::new();
    let mut line = |cells: &[&str]| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&header);
    line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect::<Vec<_>>());
    for r in &rows {
        line(&r.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}

fn cmd_matrix(suite: Option<PathBuf>, out: &Path, g: Global) -> Result<i32, CliError> {
    let dir = suite.or_else(|| std::env::var_os(SUITE_ENV).map(PathBuf::from)).ok_or(CliError::NoSuite)?;
    let files = suite_files(&dir)?;
    let scenarios = files.iter().map(|f| load_scenario(f, g, false)).collect::<Result<Vec<_>, _>>()?;
    let results: Vec<Result<Verdict, VerdictError>> =
        pool(g.jobs)?.install(|| scenarios.par_iter().map(|s| verdicts::evaluate(s).map(|e| e.verdict)).collect());
    let mut pairs = Vec::with_capacity(scenarios.len());
    for (s, r) in scenarios.into_iter().zip(results) {
        pairs.push((s, r?));
    }
    for (f, (_, v)) in files.iter().zip(&pairs) {
        let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let note = if v.mismatches.is_empty() { String::new() } else { format!(" ({})", v.mismatches.join("; ")) };
        println!("{name}: {} {:?}/{:?}{note}", v.protocol.name(), v.fairness, v.effectiveness);
    }
    let m = match verdicts::build_matrix(&pairs) {
        Ok(m) => m,
        Err(VerdictError::IncompleteSuite(ps)) => {
            let names: Vec<&str> = ps.iter().map(|p| p.name()).collect();
            return Err(CliError::IncompleteSuite(names.join(", ")));
        }
        Err(e) => return Err(e.into()),
    };
    let expected = verdicts::expected_matrix();
    let diff = matrix_diff(&m, &expected);
    let report = MatrixReport { matrix: &m, expected: &expected, mismatches: &diff, scenarios: pairs.iter().map(|(_, v)| v).collect() };
    let table = matrix_table(&m);
    write(out, &sorted_json(&report))?;
    write(&out.with_extension("txt"), &table)?;
    print!("{table}");
    for d in &diff {
        println!("mismatch: {d}");
    }
    Ok(if diff.is_empty() { EXIT_OK } else { EXIT_MISMATCH })
}

fn cmd_replay(path: &Path) -> Result<i32, CliError> {
    let original = read(path)?;
    let again = sched::replay(&original)?.to_jsonl();
    if again == original {
        println!("replay identical ({} lines)", original.lines().count());
        return Ok(EXIT_OK);
    }
    let line = original.lines().zip(again.lines()).position(|(a, b)| a != b).unwrap_or_else(|| {
        original.lines().count().min(again.lines().count())
    });
    println!("replay differs at line {}", line + 1);
    Ok(EXIT_MISMATCH)
}

pub fn execute(cli: Cli) -> Result<i32, CliError> {
    let g = cli.global;
    match cli.command {
        Command::Run { scenario, out } => cmd_run(&scenario, &out, g, false),
        Command::Enumerate { scenario, out } => cmd_run(&scenario, &out, g, true),
        Command::Matrix { suite, out } => cmd_matrix(suite, &out, g),
        Command::Replay { trace } => cmd_replay(&trace),
    }
}

/// Parses arguments, runs, and maps errors to exit codes.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_SCHEMA } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
