//! Matrix factor simulation designs.
//!
//! `X_t = A_1 F_t A_2ᵀ + E_t` with
//!
//! - `f_{ij,t} = φ_{ij} f_{ij,t−1} + ε_{ij,t}`, `ε ~ N(0,1)`, each path started
//!   from its stationary law `N(0, 1/(1 − φ_{ij}²))`;
//! - loading entries `N(0,1)·d_k^{−e_c}` with a per-column exponent `e_c`;
//! - `E_t = Ψ_1^{1/2} Z_t Ψ_2^{1/2}`, `Ψ_k` equicorrelation with off-diagonal
//!   `ρ`, `Z_t` i.i.d. standard normal.
//!
//! Random numbers come from ChaCha8 (`rand_chacha`) seeded with
//! `seed_from_u64(seed)`; loadings, factors and noise each draw from their own
//! stream of that seed. Normal variates use `rand_distr::StandardNormal`
//! (ziggurat). Replication `r` of an experiment with master seed `s` uses
//! [`replication_seed`]`(s, r)`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{symmetric_sqrt, TensorSeries};

const LOADING_STREAM: u64 = 1;
const FACTOR_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;

/// The AR coefficient matrix shared by M1, M2 and M3.
pub const PHI_M1: [[f64; 5]; 5] = [
    [0.8, 0.5, 0.5, 0.3, 0.3],
    [0.5, 0.8, 0.5, 0.3, 0.3],
    [0.3, 0.5, 0.8, 0.5, 0.3],
    [0.3, 0.3, 0.5, 0.8, 0.5],
    [0.3, 0.3, 0.5, 0.5, 0.8],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    M0,
    M1,
    M2,
    M3,
    M4,
    #[serde(alias = "custom")]
    Custom,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::M0 => "M0",
            ModelKind::M1 => "M1",
            ModelKind::M2 => "M2",
            ModelKind::M3 => "M3",
            ModelKind::M4 => "M4",
            ModelKind::Custom => "custom",
        }
    }

    /// True ranks `(r_1, r_2)` of a preset.
    pub fn ranks(self) -> Result<(usize, usize)> {
        match self {
            ModelKind::M0 | ModelKind::M4 => Ok((2, 2)),
            ModelKind::M1 | ModelKind::M2 | ModelKind::M3 => Ok((5, 5)),
            ModelKind::Custom => Err(Error::invalid("custom models have no preset ranks")),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "M0" => Ok(ModelKind::M0),
            "M1" => Ok(ModelKind::M1),
            "M2" => Ok(ModelKind::M2),
            "M3" => Ok(ModelKind::M3),
            "M4" => Ok(ModelKind::M4),
            "CUSTOM" => Ok(ModelKind::Custom),
            other => Err(Error::invalid(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub model: ModelKind,
    pub d1: usize,
    pub d2: usize,
    pub t: usize,
    pub r1: usize,
    pub r2: usize,
    pub phi: DMatrix<f64>,
    /// Column exponents `e_c` of `A_1` and `A_2`: entries are `N(0,1)·d_k^{−e_c}`.
    pub loading_exponents: [Vec<f64>; 2],
    /// Off-diagonal of the noise covariances `Ψ_1`, `Ψ_2`.
    pub noise_rho: f64,
    /// Multiplier on `E_t`; zero gives a noiseless signal.
    pub noise_scale: f64,
    pub seed: u64,
}

impl ModelSpec {
    pub fn preset(model: ModelKind, d1: usize, d2: usize, t: usize, seed: u64) -> Result<Self> {
        let (r1, r2) = model.ranks()?;
        let spec = Self {
            model,
            d1,
            d2,
            t,
            r1,
            r2,
            phi: make_phi(model)?,
            loading_exponents: loading_exponents(model, r1, r2)?,
            noise_rho: 0.2,
            noise_scale: 1.0,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// A custom design with N(0,1) loadings.
    pub fn custom(d1: usize, d2: usize, t: usize, phi: DMatrix<f64>, seed: u64) -> Result<Self> {
        let (r1, r2) = phi.shape();
        let spec = Self {
            model: ModelKind::Custom,
            d1,
            d2,
            t,
            r1,
            r2,
            phi,
            loading_exponents: [vec![0.0; r1], vec![0.0; r2]],
            noise_rho: 0.2,
            noise_scale: 1.0,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_noise_scale(mut self, scale: f64) -> Self {
        self.noise_scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.phi.shape() != (self.r1, self.r2) {
            return Err(Error::mismatch(format!(
                "phi is {}x{}, ranks are ({}, {})",
                self.phi.nrows(),
                self.phi.ncols(),
                self.r1,
                self.r2
            )));
        }
        check_stationary(&self.phi)?;
        if self.r1 == 0 || self.r2 == 0 || self.r1 > self.d1 || self.r2 > self.d2 {
            return Err(Error::invalid(format!(
                "ranks ({}, {}) must lie in 1..=dims ({}, {})",
                self.r1, self.r2, self.d1, self.d2
            )));
        }
        if self.t < 2 {
            return Err(Error::invalid("T must be at least 2"));
        }
        if self.loading_exponents[0].len() != self.r1 || self.loading_exponents[1].len() != self.r2
        {
            return Err(Error::mismatch("one loading exponent per factor column required"));
        }
        if !(0.0..1.0).contains(&self.noise_rho) {
            return Err(Error::invalid(format!(
                "noise correlation must lie in [0, 1), got {}",
                self.noise_rho
            )));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return Err(Error::invalid("noise scale must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub series: TensorSeries,
    pub true_ranks: (usize, usize),
    pub loadings: (DMatrix<f64>, DMatrix<f64>),
}

pub fn make_phi(model: ModelKind) -> Result<DMatrix<f64>> {
    match model {
        ModelKind::M1 | ModelKind::M2 | ModelKind::M3 => {
            Ok(DMatrix::from_fn(5, 5, |i, j| PHI_M1[i][j]))
        }
        ModelKind::M0 => Ok(DMatrix::from_row_slice(2, 2, &[0.8, 0.3, 0.3, 0.8])),
        ModelKind::M4 => Ok(DMatrix::from_row_slice(2, 2, &[0.98, 0.15, 0.15, 0.15])),
        ModelKind::Custom => Err(Error::invalid(
            "a custom model needs an explicit AR coefficient matrix",
        )),
    }
}

/// Column strength exponents of a preset: M2 has two strong columns and three
/// scaled by `d^{−0.2}`; M3 scales every column by `d^{−0.3}`.
pub fn loading_exponents(model: ModelKind, r1: usize, r2: usize) -> Result<[Vec<f64>; 2]> {
    let per_mode = |r: usize| -> Result<Vec<f64>> {
        match model {
            ModelKind::M0 | ModelKind::M1 | ModelKind::M4 => Ok(vec![0.0; r]),
            ModelKind::M2 => Ok((0..r).map(|c| if c < 2 { 0.0 } else { 0.2 }).collect()),
            ModelKind::M3 => Ok(vec![0.3; r]),
            ModelKind::Custom => Err(Error::invalid("custom models have no preset loadings")),
        }
    };
    Ok([per_mode(r1)?, per_mode(r2)?])
}

fn check_stationary(phi: &DMatrix<f64>) -> Result<()> {
    if let Some(v) = phi.iter().find(|v| !(v.abs() < 1.0)) {
        return Err(Error::invalid(format!(
            "AR coefficient {v} is not stationary (|phi| must be < 1)"
        )));
    }
    Ok(())
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `T` factor matrices of shape `φ.shape()`, each entry an independent
/// stationary AR(1) path.
pub fn gen_factors(phi: &DMatrix<f64>, t: usize, seed: u64) -> Result<Vec<DMatrix<f64>>> {
    check_stationary(phi)?;
    let mut rng = stream_rng(seed, FACTOR_STREAM);
    let (r1, r2) = phi.shape();
    let mut out = Vec::with_capacity(t);
    if t == 0 {
        return Ok(out);
    }
    let first = DMatrix::from_fn(r1, r2, |i, j| {
        let p = phi[(i, j)];
        normal(&mut rng) / (1.0 - p * p).sqrt()
    });
    out.push(first);
    for s in 1..t {
        let prev = &out[s - 1];
        let next = DMatrix::from_fn(r1, r2, |i, j| phi[(i, j)] * prev[(i, j)] + normal(&mut rng));
        out.push(next);
    }
    Ok(out)
}

pub fn gen_loadings(
    model: ModelKind,
    d1: usize,
    d2: usize,
    r1: usize,
    r2: usize,
    seed: u64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let exps = loading_exponents(model, r1, r2)?;
    gen_loadings_with(&exps, d1, d2, seed)
}

pub fn gen_loadings_with(
    exponents: &[Vec<f64>; 2],
    d1: usize,
    d2: usize,
    seed: u64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (r1, r2) = (exponents[0].len(), exponents[1].len());
    if r1 > d1 || r2 > d2 {
        return Err(Error::invalid(format!(
            "ranks ({r1}, {r2}) exceed dims ({d1}, {d2})"
        )));
    }
    let mut rng = stream_rng(seed, LOADING_STREAM);
    let mut draw = |d: usize, exps: &[f64]| {
        let scales: Vec<f64> = exps.iter().map(|&e| (d as f64).powf(-e)).collect();
        // Column-major fill keeps each column's draws contiguous in the stream.
        let mut a = DMatrix::zeros(d, exps.len());
        for (c, &s) in scales.iter().enumerate() {
            for i in 0..d {
                a[(i, c)] = normal(&mut rng) * s;
            }
        }
        a
    };
    let a1 = draw(d1, &exponents[0]);
    let a2 = draw(d2, &exponents[1]);
    Ok((a1, a2))
}

pub fn equicorrelation(d: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { rho })
}

/// `E_t = Ψ_1^{1/2} Z_t Ψ_2^{1/2}` for `t = 1..=T`.
pub fn gen_noise(d1: usize, d2: usize, t: usize, rho: f64, seed: u64) -> Result<Vec<DMatrix<f64>>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::invalid(format!(
            "noise correlation must lie in [0, 1), got {rho}"
        )));
    }
    let mut rng = stream_rng(seed, NOISE_STREAM);
    let identity = rho == 0.0;
    let (s1, s2) = if identity {
        (DMatrix::identity(d1, d1), DMatrix::identity(d2, d2))
    } else {
        (
            symmetric_sqrt(&equicorrelation(d1, rho))?,
            symmetric_sqrt(&equicorrelation(d2, rho))?,
        )
    };
    Ok((0..t)
        .map(|_| {
            let z = DMatrix::from_fn(d1, d2, |_, _| normal(&mut rng));
            if identity {
                z
            } else {
                &s1 * z * &s2
            }
        })
        .collect())
}

pub fn generate(spec: &ModelSpec) -> Result<SimOutput> {
    spec.validate()?;
    let (a1, a2) = gen_loadings_with(&spec.loading_exponents, spec.d1, spec.d2, spec.seed)?;
    let factors = gen_factors(&spec.phi, spec.t, spec.seed)?;
    let a2t = a2.transpose();
    let mut obs: Vec<DMatrix<f64>> = factors.iter().map(|f| &a1 * f * &a2t).collect();
    if spec.noise_scale > 0.0 {
        let noise = gen_noise(spec.d1, spec.d2, spec.t, spec.noise_rho, spec.seed)?;
        for (x, e) in obs.iter_mut().zip(noise) {
            *x += e * spec.noise_scale;
        }
    }
    Ok(SimOutput {
        series: TensorSeries::from_matrices(&obs)?,
        true_ranks: (spec.r1, spec.r2),
        loadings: (a1, a2),
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `r` under master seed `master`. Depends only on the
/// pair, so serial and parallel schedules draw identical data.
pub fn replication_seed(master: u64, r: u64) -> u64 {
    splitmix64(master ^ splitmix64(r))
}
