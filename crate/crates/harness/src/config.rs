//! Experiment configuration, read from TOML.
//!
//! ```toml
//! version = 1
//! replications = 200
//! seed = 7
//! h0 = 1
//! m_star = [10, 10]          # optional; default min(floor(d_k/2), 20)
//! threads = 4                # optional; TENRANK_THREADS caps it
//! demean = false
//! penalty_dims = "original"  # or "projected"
//!
//! [[cells]]
//! model = "M1"               # M0..M4, or "custom" with a `phi` table
//! dims = [[20, 20], [40, 40]]
//! t = [100, 300]
//!
//! [[estimators]]
//! method = "TIPUP"
//! criterion = "IC"
//! variant = 2
//! nu = 0.0
//! stages = ["initial", "one_step", "final"]
//!
//! [output]
//! csv = "results.csv"
//! frequencies_csv = "frequencies.csv"
//! json = "results.json"
//! ```

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use tenrank_core::iterative::PenaltyDims;
use tenrank_core::simgen::{ModelKind, ModelSpec};

use crate::error::{Error, Result};
use crate::estimator::{EstimatorSpec, RunSettings};

pub const CONFIG_VERSION: u32 = 1;

fn default_h0() -> usize {
    1
}

fn default_max_iter() -> usize {
    50
}

fn default_m_star_cap() -> usize {
    tenrank_core::criteria::DEFAULT_M_STAR_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub replications: usize,
    pub seed: u64,
    #[serde(default = "default_h0")]
    pub h0: usize,
    #[serde(default)]
    pub m_star: Option<Vec<usize>>,
    #[serde(default = "default_m_star_cap")]
    pub m_star_cap: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub threads: Option<usize>,
    /// Simulated designs have zero mean, so demeaning is off by default here.
    #[serde(default)]
    pub demean: bool,
    #[serde(default)]
    pub penalty_dims: PenaltyDims,
    pub cells: Vec<CellGrid>,
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default)]
    pub output: OutputPaths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellGrid {
    pub model: ModelKind,
    pub dims: Vec<[usize; 2]>,
    pub t: Vec<usize>,
    /// Factor AR coefficients, required for `custom`.
    #[serde(default)]
    pub phi: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub noise_scale: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    pub csv: Option<PathBuf>,
    pub frequencies_csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

/// One `(model, d1, d2, T)` cell of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub label: String,
    pub spec: ModelSpec,
}

impl Cell {
    pub fn true_ranks(&self) -> [usize; 2] {
        [self.spec.r1, self.spec.r2]
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.version != CONFIG_VERSION {
            return fail(format!(
                "unsupported version {}, expected {CONFIG_VERSION}",
                self.version
            ));
        }
        if self.replications == 0 {
            return fail("replications must be at least 1".into());
        }
        if self.estimators.is_empty() {
            return fail("at least one estimator is required".into());
        }
        if self.cells.is_empty() {
            return fail("at least one cell is required".into());
        }
        if self.threads == Some(0) {
            return fail("threads must be at least 1".into());
        }
        for e in &self.estimators {
            e.validate()?;
        }
        self.settings().options(&self.estimators[0])?.validate()?;
        self.expand_cells()?;
        Ok(())
    }

    pub fn settings(&self) -> RunSettings {
        RunSettings {
            h0: self.h0,
            m_star: self.m_star.clone(),
            m_star_cap: self.m_star_cap,
            max_iter: self.max_iter,
            penalty_dims: self.penalty_dims,
        }
    }

    /// The full grid in declaration order: models, then dims, then T.
    pub fn expand_cells(&self) -> Result<Vec<Cell>> {
        let mut out = Vec::new();
        for grid in &self.cells {
            if grid.dims.is_empty() || grid.t.is_empty() {
                return Err(Error::Config(format!("{}: empty dims or t list", grid.model)));
            }
            for &[d1, d2] in &grid.dims {
                for &t in &grid.t {
                    let mut spec = match (grid.model, &grid.phi) {
                        (ModelKind::Custom, Some(rows)) => {
                            ModelSpec::custom(d1, d2, t, phi_matrix(rows)?, 0)?
                        }
                        (ModelKind::Custom, None) => {
                            return Err(Error::Config("custom model needs phi".into()))
                        }
                        (m, None) => ModelSpec::preset(m, d1, d2, t, 0)?,
                        (m, Some(_)) => {
                            return Err(Error::Config(format!("phi is only allowed for custom, not {m}")))
                        }
                    };
                    if let Some(s) = grid.noise_scale {
                        spec = spec.with_noise_scale(s);
                        spec.validate()?;
                    }
                    out.push(Cell {
                        label: grid.model.name().to_string(),
                        spec,
                    });
                }
            }
        }
        Ok(out)
    }
}

fn phi_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config("phi must be a non-empty rectangular table".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}
