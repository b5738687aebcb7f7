//! Iterative refinement (iTOPUP / iTIPUP) of per-mode ranks and loading spaces.
//!
//! Sweep `i` visits the modes in ascending order. For mode `k` every
//! observation is projected on all other modes,
//!
//! ```text
//! Z_{k,t} = X_t ×_{j<k} Û_j^{(i)ᵀ} ×_{j>k} Û_j^{(i−1)ᵀ},
//! ```
//!
//! so modes already visited in this sweep use their fresh bases. The rank of
//! mode `k` is re-selected on the statistic of the projected series and `Û_k`
//! is replaced by its leading left singular vectors.
//!
//! Iteration 0 is the non-iterative estimator on the raw series. Its selected
//! ranks are inflated to `min(2r, r + 3)` before the first sweep unless fixed
//! initial ranks are supplied.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::criteria::{default_m_star, PenaltySpec, DEFAULT_M_STAR_CAP};
use crate::error::{Error, Result};
use crate::linalg::projector_distance;
use crate::moments::{self, EigenSpectrum, Method, MomentOptions};
use crate::tensor::{Tensor, TensorSeries};

/// Sizes fed to the penalty formulas during sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyDims {
    /// The raw series shape, as in the non-iterative step.
    #[default]
    Original,
    /// `(r̂_1, …, d_k, …, r̂_K)`, the shape of the projected series. The
    /// penalty shrinks with the working ranks, which lets IC drift upward on
    /// correlated noise.
    Projected,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterOptions {
    pub method: Method,
    pub penalty: PenaltySpec,
    pub h0: usize,
    pub max_iter: usize,
    /// Tolerance on `max_k ‖Û_kÛ_kᵀ − previous‖_2`.
    pub subspace_tol: f64,
    /// Inflate the initial ranks to `min(2r, r + 3)`.
    pub initial_inflation: bool,
    pub fixed_initial_ranks: Option<Vec<usize>>,
    /// Per-mode search bound; defaults to `min(⌊d_k/2⌋, m_star_cap)`.
    pub m_star: Option<Vec<usize>>,
    pub m_star_cap: usize,
    /// Stop as soon as the ranks repeat, ignoring the subspace tolerance.
    pub rank_only_convergence: bool,
    #[serde(default)]
    pub penalty_dims: PenaltyDims,
    pub moment: MomentOptions,
}

impl IterOptions {
    pub fn new(method: Method, penalty: PenaltySpec) -> Self {
        Self {
            method,
            penalty,
            h0: 1,
            max_iter: 50,
            subspace_tol: 1e-6,
            initial_inflation: true,
            fixed_initial_ranks: None,
            m_star: None,
            m_star_cap: DEFAULT_M_STAR_CAP,
            rank_only_convergence: false,
            penalty_dims: PenaltyDims::Original,
            moment: MomentOptions::default(),
        }
    }

    pub fn with_h0(mut self, h0: usize) -> Self {
        self.h0 = h0;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_m_star(mut self, m_star: Vec<usize>) -> Self {
        self.m_star = Some(m_star);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.penalty.validate()?;
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        if self.h0 == 0 {
            return Err(Error::invalid("h0 must be at least 1"));
        }
        if !(self.subspace_tol.is_finite() && self.subspace_tol > 0.0) {
            return Err(Error::invalid("subspace_tol must be positive"));
        }
        Ok(())
    }

    /// Search bound for every mode of a series with shape `dims`.
    pub fn m_stars(&self, dims: &[usize]) -> Result<Vec<usize>> {
        let m = match &self.m_star {
            Some(m) => {
                if m.len() != dims.len() {
                    return Err(Error::mismatch(format!(
                        "m* has {} entries for an order-{} series",
                        m.len(),
                        dims.len()
                    )));
                }
                m.clone()
            }
            None => dims
                .iter()
                .map(|&d| default_m_star(d, self.m_star_cap))
                .collect(),
        };
        if let Some((k, _)) = m
            .iter()
            .zip(dims)
            .enumerate()
            .find(|(_, (&m, &d))| m == 0 || m >= d)
        {
            return Err(Error::invalid(format!(
                "m* = {} for mode {} must satisfy 1 <= m* < d_k = {}",
                m[k], k, dims[k]
            )));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationState {
    pub iter: usize,
    /// Ranks returned by the criterion, before clamping or inflation.
    pub selected: Vec<usize>,
    /// Ranks carried into the next projection step.
    pub ranks: Vec<usize>,
    #[serde(skip)]
    pub bases: Vec<DMatrix<f64>>,
    pub spectra: Vec<EigenSpectrum>,
    pub penalties: Vec<f64>,
    /// `max_k ‖Û_kÛ_kᵀ − previous‖_2`; `None` for iteration 0.
    pub subspace_change: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterResult {
    /// Ranks selected in the last completed sweep.
    pub ranks: Vec<usize>,
    #[serde(skip)]
    pub bases: Vec<DMatrix<f64>>,
    pub history: Vec<IterationState>,
    pub converged: bool,
}

impl IterResult {
    /// Ranks of the non-iterative estimator.
    pub fn initial(&self) -> &[usize] {
        &self.history[0].selected
    }

    /// Ranks after the first sweep.
    pub fn one_step(&self) -> &[usize] {
        &self.history[1].selected
    }

    pub fn final_ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn iterations(&self) -> usize {
        self.history.len() - 1
    }
}

/// `x ×_{j≠k} Û_jᵀ`, applied in ascending mode order.
pub fn project_except(x: &Tensor, bases: &[DMatrix<f64>], k: usize) -> Result<Tensor> {
    if bases.len() != x.order() {
        return Err(Error::mismatch(format!(
            "{} bases for an order-{} tensor",
            bases.len(),
            x.order()
        )));
    }
    if k >= x.order() {
        return Err(Error::InvalidMode {
            mode: k,
            order: x.order(),
        });
    }
    let mut z = x.clone();
    for (j, u) in bases.iter().enumerate() {
        if j == k {
            continue;
        }
        if u.nrows() != x.dims()[j] {
            return Err(Error::mismatch(format!(
                "basis for mode {} has {} rows, expected {}",
                j,
                u.nrows(),
                x.dims()[j]
            )));
        }
        z = z.mode_product(&u.transpose(), j)?;
    }
    Ok(z)
}

/// Shape `(r_1, …, r_{k−1}, d_k, r_{k+1}, …, r_K)` of the projected series.
/// Penalty sizes under [`PenaltyDims::Projected`].
pub fn projected_dims(dims: &[usize], ranks: &[usize], k: usize) -> Vec<usize> {
    dims.iter()
        .zip(ranks)
        .enumerate()
        .map(|(j, (&d, &r))| if j == k { d } else { r })
        .collect()
}

/// `min(2r, r + 3)`, kept inside `[1, m*]`.
pub fn inflate_rank(r: usize, m_star: usize) -> usize {
    (2 * r).min(r + 3).clamp(1, m_star.max(1))
}

/// Working ranks for the first sweep.
pub fn initial_ranks(series: &TensorSeries, opts: &IterOptions) -> Result<Vec<usize>> {
    Ok(initial_state(series, opts)?.ranks)
}

fn check_series(series: &TensorSeries, opts: &IterOptions) -> Result<()> {
    opts.validate()?;
    if series.len() <= opts.h0 {
        return Err(Error::invalid(format!(
            "series length {} must exceed h0 = {}",
            series.len(),
            opts.h0
        )));
    }
    if series.dims().iter().any(|&d| d < 2) {
        return Err(Error::invalid(format!(
            "every mode needs at least 2 coordinates, got {:?}",
            series.dims()
        )));
    }
    Ok(())
}

/// The non-iterative start: selected ranks, inflated working ranks and
/// their bases. This is `history[0]` of [`iterate`].
pub fn initial_state(series: &TensorSeries, opts: &IterOptions) -> Result<IterationState> {
    check_series(series, opts)?;
    let dims = series.dims();
    let m_stars = opts.m_stars(dims)?;
    if let Some(fixed) = &opts.fixed_initial_ranks {
        if fixed.len() != dims.len() {
            return Err(Error::mismatch(format!(
                "{} fixed initial ranks for an order-{} series",
                fixed.len(),
                dims.len()
            )));
        }
    }
    let t = series.len();
    let k_count = dims.len();
    let mut state = IterationState {
        iter: 0,
        selected: Vec::with_capacity(k_count),
        ranks: Vec::with_capacity(k_count),
        bases: Vec::with_capacity(k_count),
        spectra: Vec::with_capacity(k_count),
        penalties: Vec::with_capacity(k_count),
        subspace_change: None,
        converged: false,
    };
    for k in 0..k_count {
        let mm = moments::moment(series, opts.method, k, opts.h0, &opts.moment)?;
        let dec = mm.decompose(true)?;
        let mut values = dec.values.clone();
        values.resize(dims[k], 0.0);
        let penalty = opts.penalty.penalty(dims, t, opts.h0, k)?;
        let sel = opts.penalty.select(&values, penalty, m_stars[k])?;
        let working = match &opts.fixed_initial_ranks {
            Some(fixed) => fixed[k].clamp(1, dims[k]),
            None if opts.initial_inflation => inflate_rank(sel.rank, m_stars[k]),
            None => sel.rank.clamp(1, m_stars[k]),
        };
        let basis = basis_from(&mm, &dec, working)?;
        state.selected.push(sel.rank);
        state.ranks.push(working);
        state.bases.push(basis);
        state.penalties.push(penalty);
        state.spectra.push(EigenSpectrum {
            mode: k,
            method: opts.method,
            h0: opts.h0,
            values,
        });
    }
    Ok(state)
}

fn basis_from(
    mm: &moments::MomentMatrix,
    dec: &moments::Decomposition,
    r: usize,
) -> Result<DMatrix<f64>> {
    match &dec.vectors {
        Some(v) if v.ncols() >= r => Ok(v.columns(0, r).into_owned()),
        _ => moments::leading_subspace(mm, r),
    }
}

fn sweep(
    series: &TensorSeries,
    opts: &IterOptions,
    m_stars: &[usize],
    prev: &IterationState,
) -> Result<IterationState> {
    let dims = series.dims();
    let t = series.len();
    let mut ranks = prev.ranks.clone();
    let mut bases = prev.bases.clone();
    let mut selected = Vec::with_capacity(dims.len());
    let mut spectra = Vec::with_capacity(dims.len());
    let mut penalties = Vec::with_capacity(dims.len());
    for k in 0..dims.len() {
        let z = series.map(|x| project_except(x, &bases, k))?;
        let zdims = projected_dims(dims, &ranks, k);
        debug_assert_eq!(z.dims(), zdims.as_slice());
        let mm = moments::moment(&z, opts.method, k, opts.h0, &opts.moment)?;
        let dec = mm.decompose(true)?;
        let mut values = dec.values.clone();
        values.resize(dims[k], 0.0);
        let pdims = match opts.penalty_dims {
            PenaltyDims::Projected => zdims.as_slice(),
            PenaltyDims::Original => dims,
        };
        let penalty = opts.penalty.penalty(pdims, t, opts.h0, k)?;
        let sel = opts.penalty.select(&values, penalty, m_stars[k])?;
        if sel.rank == 0 {
            log::warn!(
                "iteration {}: mode {} selected rank 0; continuing with rank 1",
                prev.iter + 1,
                k
            );
        }
        let working = sel.rank.clamp(1, m_stars[k]);
        bases[k] = basis_from(&mm, &dec, working)?;
        ranks[k] = working;
        selected.push(sel.rank);
        penalties.push(penalty);
        spectra.push(EigenSpectrum {
            mode: k,
            method: opts.method,
            h0: opts.h0,
            values,
        });
    }
    let change = bases
        .iter()
        .zip(&prev.bases)
        .map(|(u, v)| projector_distance(u, v))
        .fold(0.0, f64::max);
    let same_ranks = ranks == prev.ranks;
    let converged = same_ranks && (opts.rank_only_convergence || change < opts.subspace_tol);
    Ok(IterationState {
        iter: prev.iter + 1,
        selected,
        ranks,
        bases,
        spectra,
        penalties,
        subspace_change: Some(change),
        converged,
    })
}

/// Run sweeps until the ranks and loading spaces stop changing or
/// `max_iter` sweeps are done. Non-convergence is reported through
/// [`IterResult::converged`].
pub fn iterate(series: &TensorSeries, opts: &IterOptions) -> Result<IterResult> {
    let m_stars = opts.m_stars(series.dims())?;
    let mut history = vec![initial_state(series, opts)?];
    for _ in 0..opts.max_iter {
        let next = sweep(series, opts, &m_stars, history.last().expect("non-empty"))?;
        let done = next.converged;
        history.push(next);
        if done {
            break;
        }
    }
    let last = history.last().expect("non-empty");
    if !last.converged && opts.max_iter > 1 {
        log::debug!("no convergence within {} sweeps", opts.max_iter);
    }
    Ok(IterResult {
        ranks: last.selected.clone(),
        bases: last.bases.clone(),
        converged: last.converged,
        history,
    })
}

/// A single sweep after the non-iterative start.
pub fn one_step(series: &TensorSeries, opts: &IterOptions) -> Result<IterResult> {
    let mut one = opts.clone();
    one.max_iter = 1;
    iterate(series, &one)
}
