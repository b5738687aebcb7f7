//! Single-series analysis: rank estimates, spectra and the lag diagnostic.
//!
//! Modes are numbered from 1 in every report.

use serde::{Deserialize, Serialize};
use tenrank_core::criteria::{default_schedule, tune_c, TuneOptions, TuneResult};
use tenrank_core::moments::{self, tau_diagnostic, TauTable};
use tenrank_core::{Method, MomentOptions, TensorSeries};

use crate::error::{Error, Result};
use crate::estimator::{run_stages, EstimatorSpec, RunSettings, Stage};
use crate::prep::demean;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct EstimateOptions {
    pub estimators: Vec<EstimatorSpec>,
    pub settings: RunSettings,
    pub demean: bool,
    /// Lags for the diagnostic table; values not below `T` are dropped.
    pub tau_h0: Vec<usize>,
    pub tau_m_max: usize,
    /// Number of leading eigenvalues kept per spectrum in the report.
    pub spectrum_len: usize,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            estimators: default_estimators(),
            settings: RunSettings::default(),
            demean: true,
            tau_h0: vec![1, 2, 3, 4],
            tau_m_max: 5,
            spectrum_len: 10,
        }
    }
}

/// IC2 and ER1 on both statistics.
pub fn default_estimators() -> Vec<EstimatorSpec> {
    ["IC2-TIPUP", "ER1-TIPUP", "IC2-TOPUP", "ER1-TOPUP"]
        .iter()
        .map(|s| s.parse().expect("valid label"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub method: Method,
    pub mode: usize,
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iter: usize,
    pub selected: Vec<usize>,
    pub working_ranks: Vec<usize>,
    pub penalties: Vec<f64>,
    pub subspace_change: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub label: String,
    pub initial: Option<Vec<usize>>,
    pub one_step: Option<Vec<usize>>,
    #[serde(rename = "final")]
    pub final_ranks: Option<Vec<usize>>,
    pub converged: bool,
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauRowReport {
    pub h0: usize,
    pub topup: Vec<f64>,
    pub tipup: Vec<f64>,
    pub topup_normalized: Vec<f64>,
    pub tipup_normalized: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauReport {
    pub mode: usize,
    pub exponent: f64,
    pub rows: Vec<TauRowReport>,
}

impl TauReport {
    pub fn from_table(t: &TauTable) -> Self {
        let top = t.normalized(Method::Topup);
        let tip = t.normalized(Method::Tipup);
        Self {
            mode: t.mode + 1,
            exponent: t.exponent,
            rows: t
                .rows
                .iter()
                .zip(top.into_iter().zip(tip))
                .map(|(r, ((_, a), (_, b)))| TauRowReport {
                    h0: r.h0,
                    topup: r.topup.clone(),
                    tipup: r.tipup.clone(),
                    topup_normalized: a,
                    tipup_normalized: b,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema_version: u32,
    pub dims: Vec<usize>,
    pub t: usize,
    pub demeaned: bool,
    pub h0: usize,
    pub spectra: Vec<SpectrumReport>,
    pub estimators: Vec<EstimatorReport>,
    pub tau: Vec<TauReport>,
}

pub fn estimate(series: &TensorSeries, opts: &EstimateOptions) -> Result<EstimateReport> {
    if opts.estimators.is_empty() {
        return Err(Error::input("no estimators requested"));
    }
    let data = if opts.demean { demean(series)? } else { series.clone() };
    let h0 = opts.settings.h0;
    let k_count = data.order();

    let mut spectra = Vec::new();
    for method in [Method::Tipup, Method::Topup] {
        for k in 0..k_count {
            let mm = moments::moment(&data, method, k, h0, &MomentOptions::default())?;
            let spec = moments::spectrum(&mm)?;
            spectra.push(SpectrumReport {
                method,
                mode: k + 1,
                eigenvalues: spec.values.iter().take(opts.spectrum_len).copied().collect(),
            });
        }
    }

    let estimators = opts
        .estimators
        .iter()
        .map(|est| {
            let run = run_stages(&data, est, &opts.settings)?;
            let pick = |s: Stage| {
                est.stages
                    .contains(&s)
                    .then(|| run.ranks(s).map(<[usize]>::to_vec))
                    .flatten()
            };
            Ok(EstimatorReport {
                label: est.label(),
                initial: pick(Stage::Initial),
                one_step: pick(Stage::OneStep),
                final_ranks: pick(Stage::Final),
                converged: run.converged,
                history: run
                    .history
                    .iter()
                    .map(|s| HistoryEntry {
                        iter: s.iter,
                        selected: s.selected.clone(),
                        working_ranks: s.ranks.clone(),
                        penalties: s.penalties.clone(),
                        subspace_change: s.subspace_change,
                    })
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let lags: Vec<usize> = opts.tau_h0.iter().copied().filter(|&h| h >= 1 && h < data.len()).collect();
    let tau = if lags.is_empty() {
        Vec::new()
    } else {
        (0..k_count)
            .map(|k| {
                let m_max = opts.tau_m_max.min(data.dims()[k]);
                Ok(TauReport::from_table(&tau_diagnostic(&data, k, m_max, &lags, 0.5)?))
            })
            .collect::<Result<Vec<_>>>()?
    };

    Ok(EstimateReport {
        schema_version: REPORT_SCHEMA_VERSION,
        dims: data.dims().to_vec(),
        t: data.len(),
        demeaned: opts.demean,
        h0,
        spectra,
        estimators,
        tau,
    })
}

fn fmt_ranks(r: &Option<Vec<usize>>) -> String {
    match r {
        Some(r) => {
            let p: Vec<String> = r.iter().map(|x| x.to_string()).collect();
            format!("({})", p.join(","))
        }
        None => "-".into(),
    }
}

fn fmt_values(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(" ")
}

impl EstimateReport {
    pub fn render(&self) -> String {
        let mut s = format!(
            "series: dims {:?}, T = {}, h0 = {}{}\n\nspectra\n",
            self.dims,
            self.t,
            self.h0,
            if self.demeaned { ", demeaned" } else { "" }
        );
        for sp in &self.spectra {
            s.push_str(&format!("  {} mode {}: {}\n", sp.method, sp.mode, fmt_values(&sp.eigenvalues)));
        }
        s.push_str(&format!(
            "\n{:<20} {:>10} {:>10} {:>10}  {:>5} {}\n",
            "estimator", "initial", "one_step", "final", "iters", "converged"
        ));
        for e in &self.estimators {
            s.push_str(&format!(
                "{:<20} {:>10} {:>10} {:>10}  {:>5} {}\n",
                e.label,
                fmt_ranks(&e.initial),
                fmt_ranks(&e.one_step),
                fmt_ranks(&e.final_ranks),
                e.history.len().saturating_sub(1),
                e.converged
            ));
        }
        for t in &self.tau {
            s.push_str(&format!("\nlag diagnostic, mode {} (h0^-{} sigma_m)\n", t.mode, t.exponent));
            for r in &t.rows {
                s.push_str(&format!("  h0={}  TOPUP {}\n", r.h0, fmt_values(&r.topup_normalized)));
                s.push_str(&format!("        TIPUP {}\n", fmt_values(&r.tipup_normalized)));
            }
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TuneCommand {
    pub method: Method,
    pub variant: u8,
    pub nu: f64,
    pub h0: usize,
    pub m_star: usize,
    pub c_grid: Vec<f64>,
    pub subsamples: usize,
    pub demean: bool,
}

impl Default for TuneCommand {
    fn default() -> Self {
        Self {
            method: Method::Tipup,
            variant: 2,
            nu: 0.0,
            h0: 1,
            m_star: 10,
            c_grid: TuneOptions::log_grid(1e-6, 1e2, 81),
            subsamples: 10,
            demean: true,
        }
    }
}

/// `tune_c` for every mode.
pub fn tune_all(series: &TensorSeries, cmd: &TuneCommand) -> Result<Vec<TuneResult>> {
    let data = if cmd.demean { demean(series)? } else { series.clone() };
    let opts = TuneOptions {
        method: cmd.method,
        variant: cmd.variant,
        nu: cmd.nu,
        h0: cmd.h0,
        m_star: cmd.m_star,
        c_grid: cmd.c_grid.clone(),
        schedule: default_schedule(data.dims(), data.len(), cmd.subsamples),
        moment: MomentOptions::default(),
    };
    (0..data.order())
        .map(|k| Ok(tune_c(&data, k, &opts)?))
        .collect()
}

/// Plot-ready long CSV of the selected ranks: `mode,c,subsample,rank`.
pub fn tune_ranks_csv<W: std::io::Write>(results: &[TuneResult], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["mode", "c", "subsample", "rank"])?;
    for r in results {
        for (c, ranks) in r.c_grid.iter().zip(&r.ranks) {
            for (j, rank) in ranks.iter().enumerate() {
                out.write_record([
                    (r.mode + 1).to_string(),
                    c.to_string(),
                    (j + 1).to_string(),
                    rank.to_string(),
                ])?;
            }
        }
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// `mode,c,stability,full_rank`.
pub fn tune_stability_csv<W: std::io::Write>(results: &[TuneResult], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["mode", "c", "stability", "full_rank"])?;
    for r in results {
        for ((c, s), ranks) in r.c_grid.iter().zip(&r.stability).zip(&r.ranks) {
            out.write_record([
                (r.mode + 1).to_string(),
                c.to_string(),
                s.to_string(),
                ranks.last().map_or(String::new(), |x| x.to_string()),
            ])?;
        }
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// `mode,h0,method,m,sigma,normalized`.
pub fn tau_csv<W: std::io::Write>(tables: &[TauReport], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["mode", "h0", "method", "m", "sigma", "normalized"])?;
    for t in tables {
        for r in &t.rows {
            for (method, raw, norm) in [
                ("TOPUP", &r.topup, &r.topup_normalized),
                ("TIPUP", &r.tipup, &r.tipup_normalized),
            ] {
                for (m, (a, b)) in raw.iter().zip(norm).enumerate() {
                    out.write_record([
                        t.mode.to_string(),
                        r.h0.to_string(),
                        method.to_string(),
                        (m + 1).to_string(),
                        a.to_string(),
                        b.to_string(),
                    ])?;
                }
            }
        }
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Lag diagnostic for every mode over `h0 = 1..=h_max`.
pub fn diagnose(series: &TensorSeries, h_max: usize, m_max: usize, exponent: f64, demean_first: bool) -> Result<Vec<TauReport>> {
    let data = if demean_first { demean(series)? } else { series.clone() };
    if h_max == 0 || h_max >= data.len() {
        return Err(Error::input(format!(
            "maximal lag {h_max} must lie in 1..{}",
            data.len()
        )));
    }
    let lags: Vec<usize> = (1..=h_max).collect();
    (0..data.order())
        .map(|k| {
            let m = m_max.min(data.dims()[k]);
            Ok(TauReport::from_table(&tau_diagnostic(&data, k, m, &lags, exponent)?))
        })
        .collect()
}
