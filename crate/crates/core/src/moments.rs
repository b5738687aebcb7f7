//! Lagged auto-cross-moment statistics of a tensor series along one mode.
//!
//! For lag `h` write `n = T − h`. The two statistics are built from per-lag
//! blocks concatenated left to right for `h = 1..=h0`:
//!
//! ```text
//! TOPUP_k block h = mat_1( Σ_{t>h} mat_k(X_{t−h}) ⊗ mat_k(X_t) / n )   d_k × (d_{-k}·d_k·d_{-k})
//! TIPUP_k block h =        Σ_{t>h} mat_k(X_{t−h}) · mat_k(X_t)ᵀ / n     d_k × d_k
//! ```
//!
//! and the Gram matrix is `W = stat·statᵀ = Σ_h B_h B_hᵀ`.
//!
//! In a TOPUP block the column of `(c, i', c')` is `c + d_{-k}·(i' + d_k·c')`,
//! where `c`, `c'` are mode-`k` unfolding columns of the lagged and current
//! observation. The TOPUP statistic grows like `d²·h0` entries, so it is only
//! materialized below [`MomentOptions::stat_cap`]; above the cap the Gram matrix
//! is accumulated directly, which leaves the spectrum unchanged.

use nalgebra::{DMatrix, DMatrixView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, sorted_symmetric_eigen};
use crate::tensor::{split_dims, TensorSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Topup,
    Tipup,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Topup => "TOPUP",
            Method::Tipup => "TIPUP",
        }
    }

    /// Short label used in result tables (`TOP`/`TIP`).
    pub fn short(self) -> &'static str {
        match self {
            Method::Topup => "TOP",
            Method::Tipup => "TIP",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "TOPUP" | "TOP" => Ok(Method::Topup),
            "TIPUP" | "TIP" => Ok(Method::Tipup),
            other => Err(Error::invalid(format!("unknown method '{other}'"))),
        }
    }
}

/// Iteration cap handed to the SVD; unbounded iteration can spin on
/// pathological input.
const SVD_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentOptions {
    /// Largest number of statistic entries that will be materialized.
    pub stat_cap: usize,
}

impl Default for MomentOptions {
    fn default() -> Self {
        Self {
            stat_cap: 100_000_000,
        }
    }
}

impl MomentOptions {
    /// Never materialize a TOPUP statistic; only the Gram matrix is formed.
    pub fn gram_only() -> Self {
        Self { stat_cap: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct MomentMatrix {
    pub mode: usize,
    pub method: Method,
    pub h0: usize,
    stat: Option<DMatrix<f64>>,
    gram: DMatrix<f64>,
}

impl MomentMatrix {
    /// The rectangular statistic, when it was materialized.
    pub fn stat(&self) -> Option<&DMatrix<f64>> {
        self.stat.as_ref()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    /// Column count of the statistic for a series of shape `dims`.
    pub fn stat_cols(method: Method, dims: &[usize], k: usize, h0: usize) -> usize {
        let d: usize = dims.iter().product();
        match method {
            Method::Topup => (d / dims[k]) * d * h0,
            Method::Tipup => dims[k] * h0,
        }
    }

    /// Eigenvalues of the Gram matrix in descending order, clamped at zero, and
    /// optionally the matching eigenvectors (left singular vectors of the
    /// statistic).
    pub fn decompose(&self, with_vectors: bool) -> Result<Decomposition> {
        let dk = self.dim();
        match &self.stat {
            Some(stat) if stat.ncols() >= dk => {
                if stat.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numerical("statistic has non-finite entries".into()));
                }
                let svd = stat
                    .clone()
                    .try_svd(with_vectors, false, f64::EPSILON, SVD_MAX_SWEEPS)
                    .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
                let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
                order.sort_by(|&a, &b| {
                    svd.singular_values[b].total_cmp(&svd.singular_values[a])
                });
                let values: Vec<f64> = order
                    .iter()
                    .map(|&i| svd.singular_values[i].powi(2))
                    .collect();
                let vectors = if with_vectors {
                    let u = svd
                        .u
                        .as_ref()
                        .ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
                    let mut sorted = DMatrix::zeros(dk, order.len());
                    for (dst, &src) in order.iter().enumerate() {
                        sorted.set_column(dst, &u.column(src));
                    }
                    Some(sorted)
                } else {
                    None
                };
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numerical("non-finite singular values".into()));
                }
                Ok(Decomposition { values, vectors })
            }
            _ => {
                let mut eig = sorted_symmetric_eigen(&self.gram)?;
                let scale = eig.values.first().copied().unwrap_or(0.0);
                linalg::clamp_nonnegative(&mut eig.values, scale)?;
                Ok(Decomposition {
                    values: eig.values,
                    vectors: with_vectors.then_some(eig.vectors),
                })
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub values: Vec<f64>,
    pub vectors: Option<DMatrix<f64>>,
}

impl Decomposition {
    pub fn leading(&self, r: usize) -> Result<DMatrix<f64>> {
        let v = self
            .vectors
            .as_ref()
            .ok_or_else(|| Error::invalid("decomposition was computed without vectors"))?;
        if r == 0 || r > v.ncols() {
            return Err(Error::invalid(format!(
                "subspace rank {} must lie in 1..={}",
                r,
                v.ncols()
            )));
        }
        Ok(v.columns(0, r).into_owned())
    }
}

/// Descending, non-negative eigenvalues of one Gram matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSpectrum {
    pub mode: usize,
    pub method: Method,
    pub h0: usize,
    pub values: Vec<f64>,
}

impl EigenSpectrum {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn topup(series: &TensorSeries, k: usize, h0: usize) -> Result<MomentMatrix> {
    moment(series, Method::Topup, k, h0, &MomentOptions::default())
}

pub fn tipup(series: &TensorSeries, k: usize, h0: usize) -> Result<MomentMatrix> {
    moment(series, Method::Tipup, k, h0, &MomentOptions::default())
}

pub fn moment(
    series: &TensorSeries,
    method: Method,
    k: usize,
    h0: usize,
    opts: &MomentOptions,
) -> Result<MomentMatrix> {
    check_args(series, k, h0)?;
    match method {
        Method::Tipup => {
            let stat = tipup_stat(series, k, h0)?;
            let gram = symmetric_product(&stat);
            Ok(MomentMatrix {
                mode: k,
                method,
                h0,
                stat: Some(stat),
                gram,
            })
        }
        Method::Topup => {
            let cols = MomentMatrix::stat_cols(method, series.dims(), k, h0);
            let entries = cols.saturating_mul(series.dims()[k]);
            if entries <= opts.stat_cap {
                let stat = topup_stat(series, k, h0)?;
                let gram = symmetric_product(&stat);
                Ok(MomentMatrix {
                    mode: k,
                    method,
                    h0,
                    stat: Some(stat),
                    gram,
                })
            } else {
                let gram = lag_grams(series, method, k, h0)?
                    .into_iter()
                    .reduce(|a, b| a + b)
                    .expect("h0 >= 1");
                Ok(MomentMatrix {
                    mode: k,
                    method,
                    h0,
                    stat: None,
                    gram,
                })
            }
        }
    }
}

pub fn spectrum(m: &MomentMatrix) -> Result<EigenSpectrum> {
    let dec = m.decompose(false)?;
    let mut values = dec.values;
    values.resize(m.dim(), 0.0);
    Ok(EigenSpectrum {
        mode: m.mode,
        method: m.method,
        h0: m.h0,
        values,
    })
}

/// Top-`r` left singular vectors of the statistic, as a `d_k × r` matrix with
/// orthonormal columns.
pub fn leading_subspace(m: &MomentMatrix, r: usize) -> Result<DMatrix<f64>> {
    if r == 0 || r > m.dim() {
        return Err(Error::invalid(format!(
            "subspace rank {} must lie in 1..={}",
            r,
            m.dim()
        )));
    }
    let dec = m.decompose(true)?;
    if dec.vectors.as_ref().is_some_and(|v| v.ncols() >= r) {
        return dec.leading(r);
    }
    sorted_symmetric_eigen(m.gram()).map(|e| e.vectors.columns(0, r).into_owned())
}

/// Per-lag Gram contributions `B_h B_hᵀ`, `h = 1..=h_max`. Their partial sums
/// are the Gram matrices for every `h0 ≤ h_max`.
pub fn lag_grams(
    series: &TensorSeries,
    method: Method,
    k: usize,
    h_max: usize,
) -> Result<Vec<DMatrix<f64>>> {
    check_args(series, k, h_max)?;
    match method {
        Method::Tipup => {
            let stacked = series.stacked_unfolding(k)?;
            let dk = series.dims()[k];
            Ok((1..=h_max)
                .map(|h| {
                    let b = tipup_block(&stacked, series, dk, h);
                    symmetric_product(&b)
                })
                .collect())
        }
        Method::Topup => {
            let vecs = series.vec_matrix();
            (1..=h_max)
                .map(|h| topup_lag_gram(&vecs, series.dims(), k, h))
                .collect()
        }
    }
}

fn check_args(series: &TensorSeries, k: usize, h0: usize) -> Result<()> {
    if series.is_empty() {
        return Err(Error::invalid("empty series"));
    }
    if k >= series.order() {
        return Err(Error::InvalidMode {
            mode: k,
            order: series.order(),
        });
    }
    if h0 == 0 || h0 >= series.len() {
        return Err(Error::invalid(format!(
            "lag h0 = {} must satisfy 1 <= h0 < T = {}",
            h0,
            series.len()
        )));
    }
    Ok(())
}

fn symmetric_product(a: &DMatrix<f64>) -> DMatrix<f64> {
    let g = a * a.transpose();
    (&g + g.transpose()) * 0.5
}

fn tipup_block(stacked: &DMatrix<f64>, series: &TensorSeries, dk: usize, h: usize) -> DMatrix<f64> {
    let rest = series.entries_per_obs() / dk;
    let n = series.len() - h;
    let lagged = stacked.columns(0, rest * n);
    let current = stacked.columns(rest * h, rest * n);
    (lagged * current.transpose()) / n as f64
}

fn tipup_stat(series: &TensorSeries, k: usize, h0: usize) -> Result<DMatrix<f64>> {
    let dk = series.dims()[k];
    let stacked = series.stacked_unfolding(k)?;
    let mut stat = DMatrix::zeros(dk, dk * h0);
    for h in 1..=h0 {
        let block = tipup_block(&stacked, series, dk, h);
        stat.columns_mut(dk * (h - 1), dk).copy_from(&block);
    }
    Ok(stat)
}

/// `P_h = Σ_{t>h} vec(X_{t−h}) vec(X_t)ᵀ / (T − h)`, a `d × d` matrix.
fn lag_product(vecs: &DMatrix<f64>, h: usize) -> DMatrix<f64> {
    let n = vecs.ncols() - h;
    (vecs.columns(0, n) * vecs.columns(h, n).transpose()) / n as f64
}

/// Linear index in `vec(X)` of the element with mode-`k` index `i` and
/// unfolding column `c`, tabulated as `table[i + d_k·c]`.
fn unfold_index_table(dims: &[usize], k: usize) -> Vec<usize> {
    let (left, dk, right) = split_dims(dims, k);
    let mut table = vec![0; dk * left * right];
    for r in 0..right {
        for l in 0..left {
            let c = l + left * r;
            for i in 0..dk {
                table[i + dk * c] = l + left * (i + dk * r);
            }
        }
    }
    table
}

fn topup_stat(series: &TensorSeries, k: usize, h0: usize) -> Result<DMatrix<f64>> {
    let dims = series.dims();
    let dk = dims[k];
    let d = series.entries_per_obs();
    let rest = d / dk;
    let block_cols = rest * d;
    let vecs = series.vec_matrix();
    let table = unfold_index_table(dims, k);
    let mut stat = DMatrix::zeros(dk, block_cols * h0);
    for h in 1..=h0 {
        let p = lag_product(&vecs, h);
        let offset = block_cols * (h - 1);
        for c2 in 0..rest {
            for i2 in 0..dk {
                let b = table[i2 + dk * c2];
                let pcol = p.column(b);
                let base = offset + rest * (i2 + dk * c2);
                for c in 0..rest {
                    let col = base + c;
                    for i in 0..dk {
                        stat[(i, col)] = pcol[table[i + dk * c]];
                    }
                }
            }
        }
    }
    Ok(stat)
}

/// Gram contribution of one TOPUP lag block without forming the block.
///
/// The block is a column permutation of the mode-`k` unfolding of `P_h` viewed
/// as a tensor of shape `(d_1, …, d_K, d)`, so its Gram matrix only depends on
/// `P_h P_hᵀ`. When `d > T − h` the `d × d` product is replaced by a
/// `d × (T − h)` factor `Q` with `Q Qᵀ = P_h P_hᵀ`.
fn topup_lag_gram(vecs: &DMatrix<f64>, dims: &[usize], k: usize, h: usize) -> Result<DMatrix<f64>> {
    let d = vecs.nrows();
    let n = vecs.ncols() - h;
    let p_route = d * d * n + dims[k] * d * d;
    let g_route = 2 * d * n * n + 10 * n * n * n + dims[k] * d * n;
    let factor = if p_route <= g_route {
        lag_product(vecs, h)
    } else {
        let lagged = vecs.columns(0, n);
        let current = vecs.columns(h, n);
        let g = current.transpose() * current;
        let root = linalg::symmetric_sqrt(&((&g + g.transpose()) * 0.5))?;
        (lagged * root) / n as f64
    };
    let mut extended = dims.to_vec();
    extended.push(factor.ncols());
    let (left, dk, right) = split_dims(&extended, k);
    let unfolded = if k == 0 {
        DMatrixView::from_slice(factor.as_slice(), dk, left * right).into_owned()
    } else {
        let mut m = DMatrix::zeros(dk, left * right);
        let data = factor.as_slice();
        for r in 0..right {
            for i in 0..dk {
                let src = &data[left * (i + dk * r)..left * (i + dk * r + 1)];
                m.row_mut(i)
                    .columns_mut(left * r, left)
                    .iter_mut()
                    .zip(src)
                    .for_each(|(dst, &v)| *dst = v);
            }
        }
        m
    };
    Ok(symmetric_product(&unfolded))
}

/// Singular values of the TOPUP and TIPUP statistics at one maximal lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauRow {
    pub h0: usize,
    /// Raw `σ_m`, `m = 1..=m_max`, of the TOPUP statistic.
    pub topup: Vec<f64>,
    /// Raw `σ_m` of the TIPUP statistic.
    pub tipup: Vec<f64>,
}

/// Signal-cancellation diagnostic: leading singular values of both statistics
/// across a range of maximal lags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauTable {
    pub mode: usize,
    pub m_max: usize,
    /// Exponent `a` of the reported normalization `h0^{-a}·σ_m`.
    pub exponent: f64,
    pub rows: Vec<TauRow>,
}

impl TauTable {
    pub fn normalized(&self, method: Method) -> Vec<(usize, Vec<f64>)> {
        self.rows
            .iter()
            .map(|row| {
                let scale = (row.h0 as f64).powf(-self.exponent);
                let raw = match method {
                    Method::Topup => &row.topup,
                    Method::Tipup => &row.tipup,
                };
                (row.h0, raw.iter().map(|s| s * scale).collect())
            })
            .collect()
    }
}

/// Singular values `σ_1..σ_{m_max}` of both statistics for every `h0` in
/// `h0_range`, normalized as `h0^{-exponent}·σ_m` by [`TauTable::normalized`].
/// An exponent of 0.5 compares singular values; 1.0 applied to squared values
/// compares eigenvalues.
pub fn tau_diagnostic(
    series: &TensorSeries,
    k: usize,
    m_max: usize,
    h0_range: &[usize],
    exponent: f64,
) -> Result<TauTable> {
    let h_max = *h0_range
        .iter()
        .max()
        .ok_or_else(|| Error::invalid("empty h0 range"))?;
    if h0_range.contains(&0) {
        return Err(Error::invalid("h0 values must be at least 1"));
    }
    if m_max == 0 {
        return Err(Error::invalid("m_max must be at least 1"));
    }
    let top = lag_grams(series, Method::Topup, k, h_max)?;
    let tip = lag_grams(series, Method::Tipup, k, h_max)?;
    let sigmas = |grams: &[DMatrix<f64>], h0: usize| -> Result<Vec<f64>> {
        let sum = grams[..h0]
            .iter()
            .skip(1)
            .fold(grams[0].clone(), |acc, g| acc + g);
        let mut eig = sorted_symmetric_eigen(&sum)?;
        let scale = eig.values.first().copied().unwrap_or(0.0);
        linalg::clamp_nonnegative(&mut eig.values, scale)?;
        Ok(eig.values.iter().take(m_max).map(|v| v.sqrt()).collect())
    };
    let rows = h0_range
        .iter()
        .map(|&h0| {
            Ok(TauRow {
                h0,
                topup: sigmas(&top, h0)?,
                tipup: sigmas(&tip, h0)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TauTable {
        mode: k,
        m_max,
        exponent,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn lcg_series(dims: &[usize], t: usize, seed: u64) -> TensorSeries {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let obs = (0..t)
            .map(|_| {
                Tensor::from_fn(dims, |_| {
                    state = state
                        .wrapping_mul(6364136223846793005)
                        .wrapping_add(1442695040888963407);
                    ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
                })
                .unwrap()
            })
            .collect();
        TensorSeries::new(obs).unwrap()
    }

    #[test]
    fn shapes_follow_formulas() {
        let s = lcg_series(&[3, 2, 2], 6, 1);
        for k in 0..3 {
            let top = topup(&s, k, 2).unwrap();
            let tip = tipup(&s, k, 2).unwrap();
            let dk = s.dims()[k];
            assert_eq!(top.stat().unwrap().shape(), (dk, (12 / dk) * 12 * 2));
            assert_eq!(tip.stat().unwrap().shape(), (dk, dk * 2));
        }
    }

    #[test]
    fn gram_route_matches_materialized() {
        for (dims, t) in [(vec![3usize, 4], 20usize), (vec![4, 3, 2], 8), (vec![2, 5], 5)] {
            let s = lcg_series(&dims, t, 7);
            for k in 0..dims.len() {
                let full = topup(&s, k, 2).unwrap();
                let lean = moment(&s, Method::Topup, k, 2, &MomentOptions::gram_only()).unwrap();
                assert!(lean.stat().is_none());
                let diff = (full.gram() - lean.gram()).amax();
                assert!(diff < 1e-12 * full.gram().amax(), "dims {dims:?} k {k}: {diff:e}");
            }
        }
    }

    #[test]
    fn spectrum_of_zero_and_identity_stat() {
        let m = MomentMatrix {
            mode: 0,
            method: Method::Tipup,
            h0: 1,
            stat: Some(DMatrix::zeros(3, 3)),
            gram: DMatrix::zeros(3, 3),
        };
        assert_eq!(spectrum(&m).unwrap().values, vec![0.0; 3]);
        let m = MomentMatrix {
            stat: Some(DMatrix::identity(3, 3)),
            gram: DMatrix::identity(3, 3),
            ..m
        };
        let v = spectrum(&m).unwrap().values;
        assert!(v.iter().all(|x| (x - 1.0).abs() < 1e-14));
    }

    #[test]
    fn argument_errors() {
        let s = lcg_series(&[2, 2], 4, 3);
        assert!(topup(&s, 0, 4).is_err());
        assert!(tipup(&s, 0, 0).is_err());
        assert!(matches!(tipup(&s, 2, 1), Err(Error::InvalidMode { .. })));
        let m = tipup(&s, 0, 1).unwrap();
        assert!(leading_subspace(&m, 0).is_err());
        assert!(leading_subspace(&m, 3).is_err());
        assert!(tau_diagnostic(&s, 0, 1, &[], 0.5).is_err());
    }

    #[test]
    fn leading_subspace_full_rank_is_orthogonal() {
        let s = lcg_series(&[4, 3], 10, 5);
        let m = tipup(&s, 0, 1).unwrap();
        let u = leading_subspace(&m, 4).unwrap();
        assert!((u.transpose() * &u - DMatrix::identity(4, 4)).amax() < 1e-10);
    }
}
