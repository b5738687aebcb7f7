//! Dense order-K tensors and the mode-wise kernels built on them.
//!
//! Storage is a single contiguous `Vec<f64>` with the first mode varying fastest,
//! so element `(i_1, …, i_K)` lives at `i_1 + d_1·(i_2 + d_2·(i_3 + ⋯))`.
//!
//! The mode-`k` unfolding `mat_k(x)` is the `d_k × d_{-k}` matrix whose columns
//! enumerate the remaining modes in ascending order with the lowest remaining
//! mode fastest. Writing `left = Π_{j<k} d_j`, the column of a multi-index is
//! `l + left·r` where `l` and `r` are the linear indices of the modes before and
//! after `k`.

use nalgebra::{DMatrix, DMatrixView};

use crate::error::{Error, Result};
use crate::linalg;

/// Tensors above this order are rejected.
pub const MAX_ORDER: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        validate_dims(&dims)?;
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::mismatch(format!(
                "data length {} does not match dims {:?} (expected {})",
                data.len(),
                dims,
                len
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        validate_dims(dims)?;
        let len = dims.iter().product();
        Ok(Self {
            dims: dims.to_vec(),
            data: vec![0.0; len],
        })
    }

    /// Build a tensor by evaluating `f` at every multi-index.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        validate_dims(dims)?;
        let len: usize = dims.iter().product();
        let mut idx = vec![0usize; dims.len()];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f(&idx));
            increment(&mut idx, dims);
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    /// An order-1 tensor holding a single value.
    pub fn scalar(value: f64) -> Self {
        Self {
            dims: vec![1],
            data: vec![value],
        }
    }

    /// View a matrix as an order-2 tensor. Column-major storage already matches
    /// the first-mode-fastest layout.
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self {
            dims: vec![m.nrows(), m.ncols()],
            data: m.as_slice().to_vec(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut lin = 0;
        for (&i, &d) in idx.iter().zip(&self.dims).rev() {
            debug_assert!(i < d);
            lin = lin * d + i;
        }
        lin
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear_index(idx)]
    }

    /// Reinterpret an order-2 tensor as a matrix.
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.order() != 2 {
            return Err(Error::mismatch(format!(
                "expected an order-2 tensor, got order {}",
                self.order()
            )));
        }
        Ok(DMatrix::from_column_slice(
            self.dims[0],
            self.dims[1],
            &self.data,
        ))
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Keep the leading `sizes[k]` coordinates of every mode.
    pub fn leading_block(&self, sizes: &[usize]) -> Result<Self> {
        if sizes.len() != self.order() {
            return Err(Error::mismatch(format!(
                "block sizes {:?} do not match order {}",
                sizes,
                self.order()
            )));
        }
        if sizes.iter().zip(&self.dims).any(|(&s, &d)| s == 0 || s > d) {
            return Err(Error::invalid(format!(
                "block sizes {:?} must lie within 1..=dims {:?}",
                sizes, self.dims
            )));
        }
        Tensor::from_fn(sizes, |idx| self.get(idx))
    }

    /// `mat_k(x)`: rows indexed by mode `k`.
    pub fn unfold(&self, k: usize) -> Result<DMatrix<f64>> {
        self.check_mode(k)?;
        let (left, dk, right) = split_dims(&self.dims, k);
        if k == 0 {
            return Ok(DMatrix::from_column_slice(dk, left * right, &self.data));
        }
        let mut m = DMatrix::zeros(dk, left * right);
        for r in 0..right {
            for i in 0..dk {
                let src = &self.data[left * (i + dk * r)..left * (i + dk * r + 1)];
                for (l, &v) in src.iter().enumerate() {
                    m[(i, l + left * r)] = v;
                }
            }
        }
        Ok(m)
    }

    /// `x ×_k u`, replacing mode `k` of size `d_k` with `u.nrows()`.
    pub fn mode_product(&self, u: &DMatrix<f64>, k: usize) -> Result<Self> {
        self.check_mode(k)?;
        let (left, dk, right) = split_dims(&self.dims, k);
        if u.ncols() != dk {
            return Err(Error::mismatch(format!(
                "mode-{} product needs a matrix with {} columns, got {}x{}",
                k,
                dk,
                u.nrows(),
                u.ncols()
            )));
        }
        let out_k = u.nrows();
        let mut dims = self.dims.clone();
        dims[k] = out_k;
        let mut data = vec![0.0; left * out_k * right];
        if out_k > 0 {
            let ut = u.transpose();
            for r in 0..right {
                // Slab r is a left × d_k column-major matrix.
                let slab = DMatrixView::from_slice(
                    &self.data[left * dk * r..left * dk * (r + 1)],
                    left,
                    dk,
                );
                let prod = slab * &ut;
                data[left * out_k * r..left * out_k * (r + 1)].copy_from_slice(prod.as_slice());
            }
        }
        Ok(Self { dims, data })
    }

    fn check_mode(&self, k: usize) -> Result<()> {
        if k >= self.order() {
            return Err(Error::InvalidMode {
                mode: k,
                order: self.order(),
            });
        }
        Ok(())
    }
}

/// Inverse of [`Tensor::unfold`].
pub fn mode_refold(m: &DMatrix<f64>, k: usize, dims: &[usize]) -> Result<Tensor> {
    validate_dims(dims)?;
    if k >= dims.len() {
        return Err(Error::InvalidMode {
            mode: k,
            order: dims.len(),
        });
    }
    let (left, dk, right) = split_dims(dims, k);
    if m.nrows() != dk || m.ncols() != left * right {
        return Err(Error::mismatch(format!(
            "matrix {}x{} cannot refold along mode {} into dims {:?}",
            m.nrows(),
            m.ncols(),
            k,
            dims
        )));
    }
    let mut data = vec![0.0; left * dk * right];
    for r in 0..right {
        for i in 0..dk {
            for l in 0..left {
                data[l + left * (i + dk * r)] = m[(i, l + left * r)];
            }
        }
    }
    Tensor::new(dims.to_vec(), data)
}

/// `(a ⊗ b)[i…, j…] = a[i…]·b[j…]`, an order `K+N` tensor.
pub fn outer_product(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut dims = a.dims.clone();
    dims.extend_from_slice(&b.dims);
    if dims.len() > MAX_ORDER {
        return Err(Error::invalid(format!(
            "outer product order {} exceeds the supported maximum {}",
            dims.len(),
            MAX_ORDER
        )));
    }
    let mut data = Vec::with_capacity(a.len() * b.len());
    for &bv in &b.data {
        data.extend(a.data.iter().map(|&av| av * bv));
    }
    Ok(Tensor { dims, data })
}

/// Symmetric square root of a positive semi-definite matrix.
pub fn symmetric_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    linalg::symmetric_sqrt(s)
}

/// `(Π_{j<k} d_j, d_k, Π_{j>k} d_j)`.
pub(crate) fn split_dims(dims: &[usize], k: usize) -> (usize, usize, usize) {
    let left = dims[..k].iter().product();
    let right = dims[k + 1..].iter().product();
    (left, dims[k], right)
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() {
        return Err(Error::invalid("tensor order must be at least 1"));
    }
    if dims.len() > MAX_ORDER {
        return Err(Error::invalid(format!(
            "tensor order {} exceeds the supported maximum {}",
            dims.len(),
            MAX_ORDER
        )));
    }
    if dims.contains(&0) {
        return Err(Error::invalid(format!(
            "every dimension must be positive, got {dims:?}"
        )));
    }
    Ok(())
}

fn increment(idx: &mut [usize], dims: &[usize]) {
    for (i, &d) in idx.iter_mut().zip(dims) {
        *i += 1;
        if *i < d {
            return;
        }
        *i = 0;
    }
}

/// `T` observations of a common shape.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSeries {
    obs: Vec<Tensor>,
    dims: Vec<usize>,
}

impl TensorSeries {
    pub fn new(obs: Vec<Tensor>) -> Result<Self> {
        if obs.len() < 2 {
            return Err(Error::invalid(format!(
                "a tensor series needs at least 2 observations, got {}",
                obs.len()
            )));
        }
        let dims = obs[0].dims.clone();
        if let Some((t, x)) = obs.iter().enumerate().find(|(_, x)| x.dims != dims) {
            return Err(Error::mismatch(format!(
                "observation {} has dims {:?}, expected {:?}",
                t, x.dims, dims
            )));
        }
        Ok(Self { obs, dims })
    }

    pub fn from_matrices(mats: &[DMatrix<f64>]) -> Result<Self> {
        Self::new(mats.iter().map(Tensor::from_matrix).collect())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    /// Number of time points `T`.
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn obs(&self) -> &[Tensor] {
        &self.obs
    }

    pub fn into_obs(self) -> Vec<Tensor> {
        self.obs
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Tensor> {
        self.obs.iter()
    }

    /// `d = Π_k d_k`.
    pub fn entries_per_obs(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn map(&self, f: impl FnMut(&Tensor) -> Result<Tensor>) -> Result<Self> {
        Self::new(self.obs.iter().map(f).collect::<Result<Vec<_>>>()?)
    }

    /// The first `t` observations restricted to the leading `sizes[k]`
    /// coordinates of every mode.
    pub fn subsample(&self, sizes: &[usize], t: usize) -> Result<Self> {
        if t < 2 || t > self.len() {
            return Err(Error::invalid(format!(
                "subsample length {} must lie in 2..={}",
                t,
                self.len()
            )));
        }
        if sizes == self.dims.as_slice() {
            return Self::new(self.obs[..t].to_vec());
        }
        Self::new(
            self.obs[..t]
                .iter()
                .map(|x| x.leading_block(sizes))
                .collect::<Result<Vec<_>>>()?,
        )
    }

    /// Column `t` holds `vec(X_t)`.
    pub fn vec_matrix(&self) -> DMatrix<f64> {
        let d = self.entries_per_obs();
        let mut m = DMatrix::zeros(d, self.len());
        for (t, x) in self.obs.iter().enumerate() {
            m.column_mut(t).copy_from_slice(&x.data);
        }
        m
    }

    /// `[mat_k(X_1) ⋯ mat_k(X_T)]`, a `d_k × (d_{-k}·T)` matrix.
    pub fn stacked_unfolding(&self, k: usize) -> Result<DMatrix<f64>> {
        if k >= self.order() {
            return Err(Error::InvalidMode {
                mode: k,
                order: self.order(),
            });
        }
        if k == 0 {
            let d = self.entries_per_obs();
            let rows = self.dims[0];
            let mut flat = Vec::with_capacity(d * self.len());
            for x in &self.obs {
                flat.extend_from_slice(&x.data);
            }
            return Ok(DMatrix::from_vec(rows, flat.len() / rows, flat));
        }
        let dk = self.dims[k];
        let rest = self.entries_per_obs() / dk;
        let mut m = DMatrix::zeros(dk, rest * self.len());
        for (t, x) in self.obs.iter().enumerate() {
            let u = x.unfold(k)?;
            m.columns_mut(t * rest, rest).copy_from(&u);
        }
        Ok(m)
    }
}
