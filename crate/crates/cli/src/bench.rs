//! Monte-Carlo rate tables: one row per (method, n, ε, k) cell.

use crate::config::{BenchSpec, Config};
use crate::dataset::fmt17;
use crate::error::{CliError, CliResult};
use crate::estimate::{loss, run_estimate, Method};
use crate::simulate::simulate;
use rayon::prelude::*;
use realizable_core::rng::{derive_seed, label};

pub const HEADER: &str = "task,method,n,epsilon,k,trials,ok,failed,median,q1,q3,iqr,first_error";

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub method: Method,
    pub n: usize,
    pub epsilon: f64,
    pub k: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    pub trials: usize,
    pub losses: Vec<f64>,
    pub failures: Vec<String>,
}

/// Type-7 sample quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn grid(spec: &BenchSpec) -> CliResult<Vec<Cell>> {
    let mut cells = Vec::new();
    for m in &spec.methods {
        let method = Method::parse(m)?;
        if !method.supports(spec.task) {
            return Err(CliError::Config(format!("bench: method `{m}` does not estimate task `{}`", spec.task.as_str())));
        }
        for &n in &spec.n {
            for &epsilon in &spec.epsilon {
                for &k in &spec.k {
                    cells.push(Cell { method, n, epsilon, k });
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(CliError::Config("bench: the grid is empty".into()));
    }
    Ok(cells)
}

/// Seed of one trial; depends only on the run seed, the cell and the trial index.
pub fn trial_seed(seed: u64, cell: &Cell, trial: usize) -> u64 {
    let k = cell.k.map_or(u64::MAX, u64::from);
    derive_seed(seed, &[label(cell.method.name()), cell.n as u64, cell.epsilon.to_bits(), k, trial as u64])
}

fn run_trial(base: &Config, cell: &Cell, trial: usize) -> Result<f64, String> {
    let spec = base.bench.as_ref().expect("bench section checked by caller");
    let mut cfg = base.clone();
    cfg.n = cell.n;
    cfg.seed = trial_seed(base.seed, cell, trial);
    cfg.contamination.epsilon = cell.epsilon;
    if cell.k.is_some() {
        cfg.estimate.k = cell.k;
    }
    let (data, truth) = simulate(&cfg).map_err(|e| e.to_string())?;
    let out = run_estimate(spec.task, cell.method, &data, &cfg).map_err(|e| e.to_string())?;
    match loss(spec.task, &out.estimate, &truth).map_err(|e| e.to_string())? {
        Some(l) if l.value.is_finite() => Ok(l.value),
        Some(l) => Err(format!("non-finite loss {}", l.value)),
        None => Err("the model does not expose a truth for this task".into()),
    }
}

/// Runs every cell. Trials execute in the ambient rayon pool and are collected
/// in trial order, so the table does not depend on the thread count.
pub fn run_bench(cfg: &Config) -> CliResult<Vec<CellResult>> {
    let spec = cfg.bench.as_ref().ok_or_else(|| CliError::Config("bench: missing `bench` section".into()))?;
    let cells = grid(spec)?;
    Ok(cells
        .into_iter()
        .map(|cell| {
            log::info!("cell {} n={} eps={} k={:?}", cell.method.name(), cell.n, cell.epsilon, cell.k);
            let outcomes: Vec<Result<f64, String>> = (0..spec.trials).into_par_iter().map(|t| run_trial(cfg, &cell, t)).collect();
            let mut losses = Vec::new();
            let mut failures = Vec::new();
            for o in outcomes {
                match o {
                    Ok(v) => losses.push(v),
                    Err(e) => failures.push(e),
                }
            }
            CellResult { cell, trials: spec.trials, losses, failures }
        })
        .collect())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Renders the rate table. With zero trials there are no cells to report,
/// so only the header is written.
pub fn render(task: &str, results: &[CellResult]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in results.iter().filter(|r| r.trials > 0) {
        let mut sorted = r.losses.clone();
        sorted.sort_by(f64::total_cmp);
        let stats = if sorted.is_empty() {
            ["NA".to_string(), "NA".to_string(), "NA".to_string(), "NA".to_string()]
        } else {
            let (q1, q3) = (quantile(&sorted, 0.25), quantile(&sorted, 0.75));
            [fmt17(quantile(&sorted, 0.5)), fmt17(q1), fmt17(q3), fmt17(q3 - q1)]
        };
        let k = r.cell.k.map_or("auto".to_string(), |k| k.to_string());
        let first = r.failures.first().map_or("", String::as_str);
        out.push_str(&format!(
            "{task},{},{},{},{k},{},{},{},{},{}\n",
            r.cell.method.name(),
            r.cell.n,
            fmt17(r.cell.epsilon),
            r.trials,
            r.losses.len(),
            r.failures.len(),
            stats.join(","),
            csv_field(first),
        ));
    }
    out
}
