//! Rank selection from a descending eigenvalue sequence.
//!
//! - IC: `argmin_{0≤m≤m*} Σ_{j>m} λ_j + m·g`
//! - ER: `argmin_{1≤m≤m*} (λ_{m+1} + h) / (λ_m + h)`
//!
//! Ties go to the smallest `m`. The penalty families `g_{k,1..5}` and
//! `h_{k,1..5}` depend on the total dimension `d = Π d_k`, the mode size `d_k`,
//! the sample size `T` and the maximal lag `h0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{self, Method, MomentOptions};
use crate::tensor::TensorSeries;

/// Default upper bound on the search grid when `m*` is derived from `d_k`.
pub const DEFAULT_M_STAR_CAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Criterion {
    Ic,
    Er,
}

impl Criterion {
    pub fn name(self) -> &'static str {
        match self {
            Criterion::Ic => "IC",
            Criterion::Er => "ER",
        }
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "IC" => Ok(Criterion::Ic),
            "ER" => Ok(Criterion::Er),
            other => Err(Error::invalid(format!("unknown criterion '{other}'"))),
        }
    }
}

/// Criterion, penalty variant and its tuning constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub criterion: Criterion,
    /// Penalty family member, 1 through 5.
    pub variant: u8,
    /// Weakest factor strength assumed by the IC penalty, in `[0, 1)`.
    pub nu: f64,
    /// Multiplier applied to the IC penalty.
    pub c_mult: f64,
    /// Constant of the first ER penalty, `h_{k,1} = c0·h0`.
    pub c0: f64,
}

impl PenaltySpec {
    pub fn new(criterion: Criterion, variant: u8) -> Result<Self> {
        let spec = Self {
            criterion,
            variant,
            nu: 0.0,
            c_mult: 1.0,
            c0: 0.1,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn ic(variant: u8) -> Result<Self> {
        Self::new(Criterion::Ic, variant)
    }

    pub fn er(variant: u8) -> Result<Self> {
        Self::new(Criterion::Er, variant)
    }

    pub fn with_nu(mut self, nu: f64) -> Result<Self> {
        self.nu = nu;
        self.validate()?;
        Ok(self)
    }

    pub fn with_c_mult(mut self, c: f64) -> Result<Self> {
        self.c_mult = c;
        self.validate()?;
        Ok(self)
    }

    pub fn with_c0(mut self, c0: f64) -> Result<Self> {
        self.c0 = c0;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=5).contains(&self.variant) {
            return Err(Error::invalid(format!(
                "penalty variant must be 1..=5, got {}",
                self.variant
            )));
        }
        if !(self.nu.is_finite() && self.nu >= 0.0 && self.nu < 1.0) {
            return Err(Error::invalid(format!("nu must lie in [0, 1), got {}", self.nu)));
        }
        if !(self.c_mult.is_finite() && self.c_mult > 0.0) {
            return Err(Error::invalid(format!("c_mult must be positive, got {}", self.c_mult)));
        }
        if !(self.c0.is_finite() && self.c0 > 0.0) {
            return Err(Error::invalid(format!("c0 must be positive, got {}", self.c0)));
        }
        Ok(())
    }

    /// Label such as `IC2` or `ER1`.
    pub fn label(&self) -> String {
        format!("{}{}", self.criterion, self.variant)
    }

    /// Penalty value for a statistic built from data of shape `dims` and
    /// length `t`, evaluated for mode `k`.
    pub fn penalty(&self, dims: &[usize], t: usize, h0: usize, k: usize) -> Result<f64> {
        match self.criterion {
            Criterion::Ic => penalty_g(self.variant, dims, t, h0, self.nu, k, self.c_mult),
            Criterion::Er => penalty_h(self.variant, dims, t, h0, k, self.c0),
        }
    }

    pub fn select(&self, values: &[f64], penalty: f64, m_star: usize) -> Result<SelectionResult> {
        match self.criterion {
            Criterion::Ic => ic_select(values, penalty, m_star),
            Criterion::Er => er_select(values, penalty, m_star),
        }
    }
}

impl std::str::FromStr for PenaltySpec {
    type Err = Error;

    /// Parses labels like `IC2` or `er1`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.len() != 3 || !s.is_char_boundary(2) {
            return Err(Error::invalid(format!("cannot parse penalty label '{s}'")));
        }
        let criterion: Criterion = s[..2].parse()?;
        let variant: u8 = s[2..]
            .parse()
            .map_err(|_| Error::invalid(format!("cannot parse penalty label '{s}'")))?;
        Self::new(criterion, variant)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub rank: usize,
    /// IC cost for `m = 0..=m*`, or ER ratio for `m = 1..=m*`.
    pub objective_curve: Vec<f64>,
    pub penalty_value: f64,
}

/// `m* = min(⌊d_k/2⌋, cap)`, kept inside `1..d_k`.
pub fn default_m_star(dk: usize, cap: usize) -> usize {
    (dk / 2).min(cap).clamp(1, dk.saturating_sub(1).max(1))
}

fn check_sizes(dims: &[usize], t: usize, k: usize) -> Result<(f64, f64, f64)> {
    if k >= dims.len() {
        return Err(Error::InvalidMode {
            mode: k,
            order: dims.len(),
        });
    }
    let d: usize = dims.iter().product();
    if d < 2 || t < 2 {
        return Err(Error::invalid(format!(
            "penalty needs d >= 2 and T >= 2, got d = {d}, T = {t}"
        )));
    }
    Ok((d as f64, dims[k] as f64, t as f64))
}

fn checked_log(arg: f64, what: &str) -> Result<f64> {
    if arg <= 1.0 {
        return Err(Error::invalid(format!(
            "degenerate sizes: log argument {what} = {arg} must exceed 1"
        )));
    }
    Ok(arg.ln())
}

/// IC penalty `c_mult · g_{k,variant}(d, T)`.
pub fn penalty_g(
    variant: u8,
    dims: &[usize],
    t: usize,
    h0: usize,
    nu: f64,
    k: usize,
    c_mult: f64,
) -> Result<f64> {
    let (d, dk, tf) = check_sizes(dims, t, k)?;
    let h0 = h0 as f64;
    let scale = h0 * d.powf(2.0 - 2.0 * nu);
    let value = match variant {
        1 => scale / tf * checked_log(d * tf / (d + tf), "dT/(d+T)")?,
        2 => scale * (1.0 / tf + 1.0 / d) * checked_log(d * tf / (d + tf), "dT/(d+T)")?,
        3 => scale / tf * checked_log(d.min(tf), "min(d,T)")?,
        4 => scale * (1.0 / tf + 1.0 / d) * checked_log(d.min(tf), "min(d,T)")?,
        5 => scale * (1.0 / tf + 1.0 / d) * checked_log(dk.min(tf), "min(d_k,T)")?,
        v => return Err(Error::invalid(format!("IC penalty variant must be 1..=5, got {v}"))),
    };
    Ok(c_mult * value)
}

/// ER penalty `h_{k,variant}(d, T)`.
pub fn penalty_h(variant: u8, dims: &[usize], t: usize, h0: usize, k: usize, c0: f64) -> Result<f64> {
    let (d, dk, tf) = check_sizes(dims, t, k)?;
    let h0 = h0 as f64;
    let t2 = tf * tf;
    let value = match variant {
        1 => c0 * h0,
        2 => h0 * d * d / t2,
        3 => h0 * d * d / (t2 * dk * dk),
        4 => h0 * d * d / (t2 * dk * dk) + h0 * dk * dk / t2,
        5 => h0 * d * d / (t2 * dk) + h0 * d * dk / t2,
        v => return Err(Error::invalid(format!("ER penalty variant must be 1..=5, got {v}"))),
    };
    Ok(value)
}

fn check_selection_args(values: &[f64], penalty: f64, m_star: usize, min_m: usize) -> Result<()> {
    if values.is_empty() {
        return Err(Error::invalid("empty spectrum"));
    }
    if m_star < min_m.max(1) || m_star >= values.len() {
        return Err(Error::invalid(format!(
            "m* = {} must satisfy {} <= m* < {}",
            m_star,
            min_m.max(1),
            values.len()
        )));
    }
    if !(penalty.is_finite() && penalty > 0.0) {
        return Err(Error::invalid(format!("penalty must be positive, got {penalty}")));
    }
    Ok(())
}

fn argmin_first(curve: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in curve.iter().enumerate().skip(1) {
        if v < curve[best] {
            best = i;
        }
    }
    best
}

pub fn ic_select(values: &[f64], g: f64, m_star: usize) -> Result<SelectionResult> {
    check_selection_args(values, g, m_star, 1)?;
    // tails[m] = Σ_{j>m} λ_j (one-based j), accumulated from the smallest value.
    let mut tails = vec![0.0; values.len() + 1];
    for j in (0..values.len()).rev() {
        tails[j] = tails[j + 1] + values[j];
    }
    let curve: Vec<f64> = (0..=m_star).map(|m| tails[m] + m as f64 * g).collect();
    Ok(SelectionResult {
        rank: argmin_first(&curve),
        objective_curve: curve,
        penalty_value: g,
    })
}

pub fn er_select(values: &[f64], h: f64, m_star: usize) -> Result<SelectionResult> {
    check_selection_args(values, h, m_star, 1)?;
    let curve: Vec<f64> = (1..=m_star)
        .map(|m| (values[m] + h) / (values[m - 1] + h))
        .collect();
    Ok(SelectionResult {
        rank: argmin_first(&curve) + 1,
        objective_curve: curve,
        penalty_value: h,
    })
}

/// One subsample `(d_{1,j}, …, d_{K,j}, T_j)` of the stability schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subsample {
    pub dims: Vec<usize>,
    pub t: usize,
}

/// `J` nested subsamples `d_{k,j} = round(d_k·j/J)` (at least 2), `T_j = T`.
pub fn default_schedule(dims: &[usize], t: usize, j_count: usize) -> Vec<Subsample> {
    let j_count = j_count.max(1);
    (1..=j_count)
        .map(|j| Subsample {
            dims: dims
                .iter()
                .map(|&d| {
                    let scaled = (d as f64 * j as f64 / j_count as f64).round() as usize;
                    scaled.clamp(2.min(d), d)
                })
                .collect(),
            t,
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneOptions {
    pub method: Method,
    /// IC penalty variant, 1..=5.
    pub variant: u8,
    pub nu: f64,
    pub h0: usize,
    /// Upper bound of the rank grid at full size; each subsample uses
    /// `min(m*, d_{k,j} − 1)`.
    pub m_star: usize,
    /// Ascending grid of IC multipliers `c`.
    pub c_grid: Vec<f64>,
    /// Nested subsamples; the last one must be the full series.
    pub schedule: Vec<Subsample>,
    pub moment: MomentOptions,
}

impl TuneOptions {
    /// Log-spaced grid of `n` points on `[lo, hi]`.
    pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        if n <= 1 {
            return vec![lo];
        }
        let (a, b) = (lo.ln(), hi.ln());
        (0..n)
            .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneResult {
    pub mode: usize,
    pub c_grid: Vec<f64>,
    /// `ranks[c][j]`: rank selected with multiplier `c_grid[c]` on subsample `j`.
    pub ranks: Vec<Vec<usize>>,
    /// `S_{k,c}`: variance of the selected rank across subsamples.
    pub stability: Vec<f64>,
    pub c_hat: Option<f64>,
    /// `r̂_{k,ĉ,J}`.
    pub rank: Option<usize>,
    /// Set when no admissible stability interval was found or the grid is
    /// degenerate.
    pub warning: Option<String>,
}

/// Stability below this is treated as exactly zero.
pub const STABILITY_ZERO: f64 = 1e-12;

/// Choose the IC multiplier by subsample stability of the selected rank.
///
/// Every subsample uses the non-iterative statistic of `opts.method`; its
/// spectrum does not depend on `c`, so the selected rank is non-increasing in
/// `c` on every subsample. Scanning `c` upward, the maximal initial run where
/// the full-sample rank equals `m*` is skipped, and the first `c` of the next
/// run with zero stability is returned. Runs whose rank is 0 are not
/// admissible.
pub fn tune_c(series: &TensorSeries, k: usize, opts: &TuneOptions) -> Result<TuneResult> {
    if k >= series.order() {
        return Err(Error::InvalidMode {
            mode: k,
            order: series.order(),
        });
    }
    if opts.c_grid.is_empty() {
        return Err(Error::invalid("empty c grid"));
    }
    if opts.c_grid.iter().any(|c| !(c.is_finite() && *c > 0.0))
        || opts.c_grid.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::invalid("c grid must be positive and strictly ascending"));
    }
    let last = opts
        .schedule
        .last()
        .ok_or_else(|| Error::invalid("empty subsample schedule"))?;
    if last.dims != series.dims() || last.t != series.len() {
        return Err(Error::invalid(
            "the last subsample must be the full series",
        ));
    }
    for w in opts.schedule.windows(2) {
        let grows = w[0].t <= w[1].t && w[0].dims.iter().zip(&w[1].dims).all(|(a, b)| a <= b);
        if !grows {
            return Err(Error::invalid("subsample schedule must be non-decreasing"));
        }
    }
    let base = PenaltySpec::ic(opts.variant)?.with_nu(opts.nu)?;
    let full_m_star = opts.m_star.min(series.dims()[k] - 1);

    // Spectrum, unit-multiplier penalty and grid bound for each subsample.
    let per_sub = opts
        .schedule
        .iter()
        .map(|sub| {
            let data = series.subsample(&sub.dims, sub.t)?;
            let mm = moments::moment(&data, opts.method, k, opts.h0, &opts.moment)?;
            let spec = moments::spectrum(&mm)?;
            let g = base.penalty(&sub.dims, sub.t, opts.h0, k)?;
            let m_star = opts.m_star.min(sub.dims[k] - 1);
            if m_star == 0 {
                return Err(Error::invalid(format!(
                    "subsample mode size {} is too small",
                    sub.dims[k]
                )));
            }
            Ok((spec.values, g, m_star))
        })
        .collect::<Result<Vec<_>>>()?;

    let ranks = opts
        .c_grid
        .iter()
        .map(|&c| {
            per_sub
                .iter()
                .map(|(values, g, m_star)| ic_select(values, c * g, *m_star).map(|s| s.rank))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let stability: Vec<f64> = ranks.iter().map(|r| rank_variance(r)).collect();

    let mut result = TuneResult {
        mode: k,
        c_grid: opts.c_grid.clone(),
        ranks,
        stability,
        c_hat: None,
        rank: None,
        warning: None,
    };

    if opts.c_grid.len() == 1 {
        result.c_hat = Some(opts.c_grid[0]);
        result.rank = result.ranks[0].last().copied();
        result.warning = Some("single-value c grid: no stability scan performed".into());
        return Ok(result);
    }

    let full_rank = |i: usize| *result.ranks[i].last().expect("non-empty schedule");
    let mut i = 0;
    while i < opts.c_grid.len() && full_rank(i) == full_m_star {
        i += 1;
    }
    while i < opts.c_grid.len() {
        if result.stability[i] < STABILITY_ZERO && full_rank(i) > 0 {
            result.c_hat = Some(opts.c_grid[i]);
            result.rank = Some(full_rank(i));
            return Ok(result);
        }
        i += 1;
    }
    result.warning = Some("no admissible stability interval in the c grid".into());
    Ok(result)
}

fn rank_variance(ranks: &[usize]) -> f64 {
    let n = ranks.len() as f64;
    let mean = ranks.iter().map(|&r| r as f64).sum::<f64>() / n;
    ranks.iter().map(|&r| (r as f64 - mean).powi(2)).sum::<f64>() / n
}
