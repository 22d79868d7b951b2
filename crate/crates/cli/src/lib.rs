//! Command-line harness over `realizable-core`: simulate datasets, run
//! estimators on them, benchmark rates, and verify model membership.

pub mod bench;
pub mod config;
pub mod dataset;
pub mod error;
pub mod estimate;
pub mod simulate;
pub mod verify;

use clap::{Parser, Subcommand};
use config::{load_config, Config, Task};
use dataset::{sidecar_path, Dataset, Sidecar};
use error::{CliError, CliResult};
use estimate::Method;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Parser)]
#[command(name = "realizable", version, about = "Estimation under realizable MNAR contamination")]
pub struct Cli {
    /// Logging verbosity (-v info, -vv debug). Never affects results.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset; writes CSV plus a JSON sidecar next to it.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// CSV destination; the dataset goes to stdout (without sidecar) if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one estimator on a CSV dataset and print a JSON report.
    Estimate {
        #[arg(long, value_enum)]
        task: Task,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        data: PathBuf,
        /// Run configuration; defaults to the one stored in the dataset's sidecar.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo rate table over the config's `bench` grid.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores). The table does not depend on it.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check q-reduction, hard-instance membership and the simulated bands.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => write_file(p, text),
        None => out.write_all(text.as_bytes()).map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

fn cmd_simulate(config: &Path, out_path: Option<&Path>, out: &mut dyn Write) -> CliResult<()> {
    let cfg = load_config(config)?;
    let (data, truth) = simulate::simulate(&cfg)?;
    let csv = data.to_csv();
    emit(out, out_path, &csv)?;
    if let Some(p) = out_path {
        let sidecar = Sidecar {
            schema_version: config::SCHEMA_VERSION,
            generator: format!("realizable {}", env!("CARGO_PKG_VERSION")),
            seed: cfg.seed,
            n: data.rows.len(),
            na_rows: data.na_rows(),
            columns: data.columns.clone(),
            truth,
            config: cfg,
        };
        write_file(&sidecar_path(p), &sidecar.to_json())?;
    }
    Ok(())
}

fn cmd_estimate(task: Task, method: Method, data_path: &Path, config: Option<&Path>, out_path: Option<&Path>, out: &mut dyn Write) -> CliResult<()> {
    let data = Dataset::read(data_path)?;
    let side = sidecar_path(data_path);
    let sidecar = if side.exists() { Some(Sidecar::read(&side)?) } else { None };
    let cfg: Config = match (config, &sidecar) {
        (Some(p), _) => load_config(p)?,
        (None, Some(s)) => s.config.clone(),
        (None, None) => return Err(CliError::Config(format!("no --config given and no sidecar at {}", side.display()))),
    };
    let start = Instant::now();
    let outcome = estimate::run_estimate(task, method, &data, &cfg)?;
    let wall = start.elapsed().as_secs_f64();
    let loss = match &sidecar {
        Some(s) => estimate::loss(task, &outcome.estimate, &s.truth)?,
        None => None,
    };
    let report = estimate::report(task, method, &data, &outcome, loss, wall);
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Numeric(e.to_string()))?;
    text.push('\n');
    emit(out, out_path, &text)
}

fn cmd_bench(config: &Path, out_path: Option<&Path>, threads: Option<usize>, out: &mut dyn Write) -> CliResult<()> {
    let cfg = load_config(config)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| CliError::Numeric(format!("thread pool: {e}")))?;
    let results = pool.install(|| bench::run_bench(&cfg))?;
    let task = cfg.bench.as_ref().map_or("", |b| b.task.as_str());
    emit(out, out_path, &bench::render(task, &results))
}

fn cmd_verify(config: &Path, out: &mut dyn Write) -> CliResult<()> {
    let cfg = load_config(config)?;
    let report = verify::run_verify(&cfg)?;
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Numeric(e.to_string()))?;
    text.push('\n');
    emit(out, None, &text)?;
    if report.ok {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.ok).map(|c| c.name.as_str()).collect();
        Err(CliError::Numeric(format!("verification failed: {}", failed.join("; "))))
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).target(env_logger::Target::Stderr).try_init();
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    init_logging(cli.verbose);
    let result = match &cli.command {
        Command::Simulate { config, out: path } => cmd_simulate(config, path.as_deref(), out),
        Command::Estimate { task, method, data, config, out: path } => cmd_estimate(*task, *method, data, config.as_deref(), path.as_deref(), out),
        Command::Bench { config, out: path, threads } => cmd_bench(config, path.as_deref(), *threads, out),
        Command::Verify { config } => cmd_verify(config, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
