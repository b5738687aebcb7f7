#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tenrank_core::{Tensor, TensorSeries};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_series(dims: &[usize], t: usize, seed: u64) -> TensorSeries {
    let mut r = rng(seed);
    let obs = (0..t)
        .map(|_| Tensor::from_fn(dims, |_| r.random_range(-1.0..1.0)).unwrap())
        .collect();
    TensorSeries::new(obs).unwrap()
}

/// Random matrix with orthonormal columns (QR of a Gaussian-ish matrix).
pub fn random_orthonormal(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    let m = DMatrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0));
    m.qr().q().columns(0, cols).into_owned()
}

/// Mode-`k` unfolding entry `(i, c)` read straight from multi-indices.
pub fn unfold_entry(x: &Tensor, k: usize, i: usize, c: usize) -> f64 {
    let dims = x.dims();
    let mut idx = vec![0; dims.len()];
    idx[k] = i;
    let mut rem = c;
    for (j, &d) in dims.iter().enumerate() {
        if j == k {
            continue;
        }
        idx[j] = rem % d;
        rem /= d;
    }
    x.get(&idx)
}

/// Index-loop TIPUP statistic.
pub fn naive_tipup(s: &TensorSeries, k: usize, h0: usize) -> DMatrix<f64> {
    let dims = s.dims();
    let dk = dims[k];
    let rest: usize = dims.iter().product::<usize>() / dk;
    let t = s.len();
    let mut out = DMatrix::zeros(dk, dk * h0);
    for h in 1..=h0 {
        for i in 0..dk {
            for j in 0..dk {
                let mut acc = 0.0;
                for tt in h..t {
                    for c in 0..rest {
                        acc += unfold_entry(&s.obs()[tt - h], k, i, c) * unfold_entry(&s.obs()[tt], k, j, c);
                    }
                }
                out[(i, dk * (h - 1) + j)] = acc / (t - h) as f64;
            }
        }
    }
    out
}

/// Index-loop TOPUP statistic; column of `(c, i', c')` in block `h` is
/// `c + D·(i' + d_k·c')` with `D = d_{-k}`.
pub fn naive_topup(s: &TensorSeries, k: usize, h0: usize) -> DMatrix<f64> {
    let dims = s.dims();
    let dk = dims[k];
    let rest: usize = dims.iter().product::<usize>() / dk;
    let block = rest * dk * rest;
    let t = s.len();
    let mut out = DMatrix::zeros(dk, block * h0);
    for h in 1..=h0 {
        for i in 0..dk {
            for c in 0..rest {
                for i2 in 0..dk {
                    for c2 in 0..rest {
                        let mut acc = 0.0;
                        for tt in h..t {
                            acc += unfold_entry(&s.obs()[tt - h], k, i, c)
                                * unfold_entry(&s.obs()[tt], k, i2, c2);
                        }
                        out[(i, block * (h - 1) + c + rest * (i2 + dk * c2))] = acc / (t - h) as f64;
                    }
                }
            }
        }
    }
    out
}
