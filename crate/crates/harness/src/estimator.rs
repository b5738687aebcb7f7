//! Estimator descriptors (`IC2-TIPUP`, `ER1-TOPUP`, ...) and how to run them.

use serde::{Deserialize, Serialize};
use tenrank_core::iterative::{self, IterOptions, IterationState, PenaltyDims};
use tenrank_core::{Criterion, Method, PenaltySpec, TensorSeries};

use crate::error::{Error, Result};

/// Which point of the iteration a rank estimate is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Non-iterative selection, before any sweep.
    Initial,
    OneStep,
    Final,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Initial, Stage::OneStep, Stage::Final];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Initial => "initial",
            Stage::OneStep => "one_step",
            Stage::Final => "final",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "initial" | "init" => Ok(Stage::Initial),
            "one_step" | "onestep" => Ok(Stage::OneStep),
            "final" => Ok(Stage::Final),
            other => Err(Error::input(format!("unknown stage '{other}'"))),
        }
    }
}

fn default_stages() -> Vec<Stage> {
    Stage::ALL.to_vec()
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    pub method: Method,
    pub criterion: Criterion,
    pub variant: u8,
    #[serde(default)]
    pub nu: f64,
    #[serde(default = "one")]
    pub c_mult: f64,
    #[serde(default = "default_stages")]
    pub stages: Vec<Stage>,
}

impl EstimatorSpec {
    pub fn new(method: Method, criterion: Criterion, variant: u8) -> Self {
        Self {
            method,
            criterion,
            variant,
            nu: 0.0,
            c_mult: 1.0,
            stages: default_stages(),
        }
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    pub fn with_stages(mut self, stages: &[Stage]) -> Self {
        self.stages = stages.to_vec();
        self
    }

    /// `IC2-TIPUP`, with `(nu=…)` or `(c=…)` appended when not at defaults.
    pub fn label(&self) -> String {
        let mut s = format!("{}{}-{}", self.criterion, self.variant, self.method);
        if self.criterion == Criterion::Ic && self.nu != 0.0 {
            s.push_str(&format!("(nu={})", self.nu));
        }
        if self.criterion == Criterion::Ic && self.c_mult != 1.0 {
            s.push_str(&format!("(c={})", self.c_mult));
        }
        s
    }

    pub fn penalty(&self) -> Result<PenaltySpec> {
        let mut p = PenaltySpec::new(self.criterion, self.variant)?;
        if self.criterion == Criterion::Ic {
            p = p.with_nu(self.nu)?.with_c_mult(self.c_mult)?;
        }
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.penalty()?;
        if self.stages.is_empty() {
            return Err(Error::Config(format!("{}: no stages requested", self.label())));
        }
        Ok(())
    }

    /// Deepest stage requested, which decides how far the iteration runs.
    pub fn depth(&self) -> Stage {
        self.stages.iter().copied().max().unwrap_or(Stage::Final)
    }
}

impl std::str::FromStr for EstimatorSpec {
    type Err = Error;

    /// Parses `IC2-TIPUP`, `er1-topup`, `IC2-TIP`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::input(format!("estimator '{s}' is not of the form IC2-TIPUP"));
        let (pen, method) = s.split_once('-').ok_or_else(bad)?;
        if pen.len() < 3 || !pen.is_char_boundary(2) {
            return Err(bad());
        }
        let criterion: Criterion = pen[..2].parse().map_err(|_| bad())?;
        let variant: u8 = pen[2..].parse().map_err(|_| bad())?;
        let method: Method = method.parse().map_err(|_| bad())?;
        let spec = Self::new(method, criterion, variant);
        spec.penalty()?;
        Ok(spec)
    }
}

/// Settings shared by every estimator of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub h0: usize,
    pub m_star: Option<Vec<usize>>,
    pub m_star_cap: usize,
    pub max_iter: usize,
    pub penalty_dims: PenaltyDims,
}

impl Default for RunSettings {
    fn default() -> Self {
        let base = IterOptions::new(Method::Tipup, PenaltySpec::ic(2).expect("valid"));
        Self {
            h0: base.h0,
            m_star: None,
            m_star_cap: base.m_star_cap,
            max_iter: base.max_iter,
            penalty_dims: base.penalty_dims,
        }
    }
}

impl RunSettings {
    pub fn options(&self, est: &EstimatorSpec) -> Result<IterOptions> {
        let mut o = IterOptions::new(est.method, est.penalty()?).with_h0(self.h0);
        o.m_star = self.m_star.clone();
        o.m_star_cap = self.m_star_cap;
        o.max_iter = self.max_iter;
        o.penalty_dims = self.penalty_dims;
        Ok(o)
    }
}

/// Iteration history of one estimator, run only as deep as its stages need.
#[derive(Debug, Clone)]
pub struct StageRun {
    pub history: Vec<IterationState>,
    pub converged: bool,
    /// Whether the full iteration was run, so that `Final` is meaningful.
    pub complete: bool,
}

impl StageRun {
    pub fn ranks(&self, stage: Stage) -> Option<&[usize]> {
        match stage {
            Stage::Initial => self.history.first(),
            Stage::OneStep => self.history.get(1),
            Stage::Final if self.complete => self.history.last(),
            Stage::Final => None,
        }
        .map(|s| s.selected.as_slice())
    }

    /// Stage bookkeeping: `history[i]` carries iteration `i`, and the result
    /// ranks equal the last state's selection. Panics otherwise.
    pub fn assert_stages(&self, final_ranks: &[usize]) {
        for (i, s) in self.history.iter().enumerate() {
            assert_eq!(s.iter, i, "history entry {i} out of order");
        }
        let last = self.history.last().expect("non-empty history");
        assert_eq!(final_ranks, last.selected.as_slice(), "final ranks differ from the last state");
    }
}

pub fn run_stages(series: &TensorSeries, est: &EstimatorSpec, settings: &RunSettings) -> Result<StageRun> {
    let mut opts = settings.options(est)?;
    match est.depth() {
        Stage::Initial => {
            let state = iterative::initial_state(series, &opts)?;
            Ok(StageRun {
                history: vec![state],
                converged: false,
                complete: false,
            })
        }
        depth => {
            if depth == Stage::OneStep {
                opts.max_iter = 1;
            }
            let res = iterative::iterate(series, &opts)?;
            let run = StageRun {
                converged: res.converged,
                complete: depth == Stage::Final,
                history: res.history,
            };
            run.assert_stages(&res.ranks);
            Ok(run)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_label() {
        let e: EstimatorSpec = "ic2-tipup".parse().unwrap();
        assert_eq!(e.label(), "IC2-TIPUP");
        assert_eq!(e.method, Method::Tipup);
        let e: EstimatorSpec = "ER1-TOP".parse().unwrap();
        assert_eq!(e.label(), "ER1-TOPUP");
        assert_eq!(e.clone().with_nu(0.6).label(), "ER1-TOPUP");
        let ic: EstimatorSpec = "IC2-TIPUP".parse().unwrap();
        assert_eq!(ic.with_nu(0.6).label(), "IC2-TIPUP(nu=0.6)");
        for bad in ["IC-TIPUP", "IC9-TIPUP", "XX1-TIPUP", "IC2", "IC2-FOO", "é2-TIPUP"] {
            assert!(bad.parse::<EstimatorSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn stage_parsing_and_depth() {
        assert_eq!("one-step".parse::<Stage>().unwrap(), Stage::OneStep);
        let e = EstimatorSpec::new(Method::Tipup, Criterion::Er, 1).with_stages(&[Stage::Initial]);
        assert_eq!(e.depth(), Stage::Initial);
        assert_eq!(e.with_stages(&[Stage::Final, Stage::Initial]).depth(), Stage::Final);
    }
}
