//! Monte-Carlo runs over a grid of simulation cells.
//!
//! Every `(cell, replication)` pair is an independent job. Replication `r`
//! draws its data with `replication_seed(master, r)`, so cells of the same
//! shape share random numbers and results do not depend on scheduling.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tenrank_core::simgen::{self, replication_seed};

use crate::config::{Cell, ExperimentConfig};
use crate::error::{Error, Result};
use crate::estimator::{run_stages, Stage};
use crate::prep::demean;

pub const RESULTS_SCHEMA_VERSION: u32 = 1;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "TENRANK_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankFrequency {
    pub ranks: Vec<usize>,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub d1: usize,
    pub d2: usize,
    pub t: usize,
    pub estimator: String,
    pub stage: Stage,
    pub true_ranks: Vec<usize>,
    pub replications: usize,
    pub proportion_correct: f64,
    /// Pooled over replications and modes.
    pub rmse: f64,
    pub rmse_modes: Vec<f64>,
    /// Sorted by rank vector.
    pub frequencies: Vec<RankFrequency>,
    /// Set when the cell was aborted; the metrics are then NaN.
    pub error: Option<String>,
}

impl ResultRow {
    pub fn frequency(&self, ranks: &[usize]) -> f64 {
        self.frequencies
            .iter()
            .find(|f| f.ranks == ranks)
            .map_or(0.0, |f| f.frequency)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

/// Rank-error summary of a set of replications.
#[derive(Debug, Clone, PartialEq)]
pub struct RankMetrics {
    pub proportion_correct: f64,
    pub rmse: f64,
    pub rmse_modes: Vec<f64>,
    pub frequencies: Vec<RankFrequency>,
}

/// Proportion of exact matches, per-mode RMSE and the joint RMSE
/// `sqrt(mean over replications and modes of (r̂_k − r_k)²)`.
pub fn rank_metrics(estimates: &[Vec<usize>], truth: &[usize]) -> RankMetrics {
    let n = estimates.len().max(1) as f64;
    let k = truth.len();
    let mut sq = vec![0.0; k];
    let mut counts: BTreeMap<&[usize], usize> = BTreeMap::new();
    for est in estimates {
        for (m, (&a, &b)) in est.iter().zip(truth).enumerate() {
            sq[m] += (a as f64 - b as f64).powi(2);
        }
        *counts.entry(est.as_slice()).or_default() += 1;
    }
    let correct = counts.get(truth).copied().unwrap_or(0);
    RankMetrics {
        proportion_correct: correct as f64 / n,
        rmse: (sq.iter().sum::<f64>() / (n * k.max(1) as f64)).sqrt(),
        rmse_modes: sq.iter().map(|s| (s / n).sqrt()).collect(),
        frequencies: counts
            .into_iter()
            .map(|(r, c)| RankFrequency {
                ranks: r.to_vec(),
                frequency: c as f64 / n,
            })
            .collect(),
    }
}

/// Ranks of one replication: `[estimator][stage]`.
type RepOutcome = std::result::Result<Vec<Vec<Vec<usize>>>, String>;

fn run_replication(cfg: &ExperimentConfig, cell: &Cell, rep: usize) -> RepOutcome {
    let settings = cfg.settings();
    let body = || -> Result<Vec<Vec<Vec<usize>>>> {
        let spec = cell.spec.clone().with_seed(replication_seed(cfg.seed, rep as u64));
        let mut series = simgen::generate(&spec)?.series;
        if cfg.demean {
            series = demean(&series)?;
        }
        cfg.estimators
            .iter()
            .map(|est| {
                let run = run_stages(&series, est, &settings)?;
                Ok(est
                    .stages
                    .iter()
                    .map(|&s| run.ranks(s).expect("stage computed").to_vec())
                    .collect())
            })
            .collect()
    };
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(v)) => Ok(v),
        Ok(Err(e)) => Err(format!("replication {rep}: {e}")),
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            Err(format!("replication {rep} panicked: {msg}"))
        }
    }
}

/// Worker count: `cfg.threads` or all cores, capped by `TENRANK_THREADS`.
pub fn thread_count(requested: Option<usize>) -> usize {
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    let n = requested.unwrap_or_else(|| {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    });
    cap.map_or(n, |c| n.min(c)).max(1)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let cells = cfg.expand_cells()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(cfg.threads))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.replications).map(move |r| (c, r)))
        .collect();
    log::info!(
        "{} cells x {} replications on {} threads",
        cells.len(),
        cfg.replications,
        pool.current_num_threads()
    );
    let outcomes: Vec<RepOutcome> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, r)| run_replication(cfg, &cells[c], r))
            .collect()
    });

    let mut table = ResultTable::default();
    for (c, cell) in cells.iter().enumerate() {
        let reps = &outcomes[c * cfg.replications..(c + 1) * cfg.replications];
        let failure = reps.iter().find_map(|o| o.as_ref().err());
        if let Some(msg) = failure {
            log::warn!("cell {} {}x{} T={} aborted: {msg}", cell.label, cell.spec.d1, cell.spec.d2, cell.spec.t);
        }
        for (e, est) in cfg.estimators.iter().enumerate() {
            for (s, &stage) in est.stages.iter().enumerate() {
                let mut row = ResultRow {
                    model: cell.label.clone(),
                    d1: cell.spec.d1,
                    d2: cell.spec.d2,
                    t: cell.spec.t,
                    estimator: est.label(),
                    stage,
                    true_ranks: cell.true_ranks().to_vec(),
                    replications: 0,
                    proportion_correct: f64::NAN,
                    rmse: f64::NAN,
                    rmse_modes: vec![f64::NAN; 2],
                    frequencies: Vec::new(),
                    error: failure.cloned(),
                };
                if failure.is_none() {
                    let est_ranks: Vec<Vec<usize>> = reps
                        .iter()
                        .map(|o| o.as_ref().expect("no failure")[e][s].clone())
                        .collect();
                    let m = rank_metrics(&est_ranks, &cell.true_ranks());
                    row.replications = est_ranks.len();
                    row.proportion_correct = m.proportion_correct;
                    row.rmse = m.rmse;
                    row.rmse_modes = m.rmse_modes;
                    row.frequencies = m.frequencies;
                }
                table.rows.push(row);
            }
        }
    }
    Ok(table)
}

#[derive(Serialize)]
struct JsonReport<'a> {
    schema_version: u32,
    tool_version: &'static str,
    config: &'a ExperimentConfig,
    rows: &'a [ResultRow],
}

#[derive(Serialize)]
struct CsvRow<'a> {
    model: &'a str,
    d1: usize,
    d2: usize,
    t: usize,
    estimator: &'a str,
    stage: &'static str,
    replications: usize,
    proportion_correct: f64,
    rmse: f64,
    rmse_mode1: f64,
    rmse_mode2: f64,
    modal_ranks: String,
    error: &'a str,
}

fn rank_string(r: &[usize]) -> String {
    let parts: Vec<String> = r.iter().map(|x| x.to_string()).collect();
    format!("({})", parts.join(","))
}

impl ResultTable {
    pub fn find(&self, model: &str, d: (usize, usize), t: usize, estimator: &str, stage: Stage) -> Option<&ResultRow> {
        self.rows.iter().find(|r| {
            r.model == model && (r.d1, r.d2) == d && r.t == t && r.estimator == estimator && r.stage == stage
        })
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            let modal = r
                .frequencies
                .iter()
                .fold(None::<&RankFrequency>, |best, f| match best {
                    Some(b) if b.frequency >= f.frequency => Some(b),
                    _ => Some(f),
                })
                .map(|f| rank_string(&f.ranks))
                .unwrap_or_default();
            out.serialize(CsvRow {
                model: &r.model,
                d1: r.d1,
                d2: r.d2,
                t: r.t,
                estimator: &r.estimator,
                stage: r.stage.name(),
                replications: r.replications,
                proportion_correct: r.proportion_correct,
                rmse: r.rmse,
                rmse_mode1: r.rmse_modes.first().copied().unwrap_or(f64::NAN),
                rmse_mode2: r.rmse_modes.get(1).copied().unwrap_or(f64::NAN),
                modal_ranks: modal,
                error: r.error.as_deref().unwrap_or(""),
            })?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Long-form rank-pair frequencies, one line per observed rank vector.
    pub fn write_frequencies_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["model", "d1", "d2", "t", "estimator", "stage", "r1", "r2", "frequency"])?;
        for r in &self.rows {
            for f in &r.frequencies {
                out.write_record([
                    r.model.clone(),
                    r.d1.to_string(),
                    r.d2.to_string(),
                    r.t.to_string(),
                    r.estimator.clone(),
                    r.stage.name().to_string(),
                    f.ranks[0].to_string(),
                    f.ranks[1].to_string(),
                    f.frequency.to_string(),
                ])?;
            }
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn to_json(&self, cfg: &ExperimentConfig) -> Result<String> {
        Ok(serde_json::to_string_pretty(&JsonReport {
            schema_version: RESULTS_SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            config: cfg,
            rows: &self.rows,
        })?)
    }

    /// Write every output named in `cfg.output`.
    pub fn write_outputs(&self, cfg: &ExperimentConfig) -> Result<()> {
        let create = |p: &Path| std::fs::File::create(p).map_err(|e| Error::io(p, e));
        if let Some(p) = &cfg.output.csv {
            self.write_csv(create(p)?)?;
        }
        if let Some(p) = &cfg.output.frequencies_csv {
            self.write_frequencies_csv(create(p)?)?;
        }
        if let Some(p) = &cfg.output.json {
            std::fs::write(p, self.to_json(cfg)?).map_err(|e| Error::io(p, e))?;
        }
        Ok(())
    }

    /// Aligned plain-text table.
    pub fn render(&self) -> String {
        let mut s = format!(
            "{:<6} {:>4} {:>4} {:>6}  {:<20} {:<8} {:>6} {:>7} {:>7}  {}\n",
            "model", "d1", "d2", "T", "estimator", "stage", "N", "correct", "rmse", "modal"
        );
        for r in &self.rows {
            if let Some(e) = &r.error {
                s.push_str(&format!(
                    "{:<6} {:>4} {:>4} {:>6}  {:<20} {:<8} aborted: {e}\n",
                    r.model, r.d1, r.d2, r.t, r.estimator, r.stage
                ));
                continue;
            }
            let modal = r
                .frequencies
                .iter()
                .max_by(|a, b| a.frequency.total_cmp(&b.frequency).then(b.ranks.cmp(&a.ranks)))
                .map(|f| format!("{} {:.3}", rank_string(&f.ranks), f.frequency))
                .unwrap_or_default();
            s.push_str(&format!(
                "{:<6} {:>4} {:>4} {:>6}  {:<20} {:<8} {:>6} {:>7.3} {:>7.3}  {}\n",
                r.model, r.d1, r.d2, r.t, r.estimator, r.stage, r.replications, r.proportion_correct, r.rmse, modal
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_by_hand() {
        let est = vec![vec![2, 2], vec![2, 3], vec![1, 2], vec![2, 2]];
        let m = rank_metrics(&est, &[2, 2]);
        assert_eq!(m.proportion_correct, 0.5);
        assert!((m.rmse_modes[0] - 0.5).abs() < 1e-15);
        assert!((m.rmse_modes[1] - 0.5).abs() < 1e-15);
        assert!((m.rmse - (2.0f64 / 8.0).sqrt()).abs() < 1e-15);
        let total: f64 = m.frequencies.iter().map(|f| f.frequency).sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert_eq!(m.frequencies[0].ranks, vec![1, 2]);
    }

    #[test]
    fn thread_env_caps() {
        assert!(thread_count(Some(3)) >= 1);
        assert!(thread_count(Some(3)) <= 3);
    }
}
