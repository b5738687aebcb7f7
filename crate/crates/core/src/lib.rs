//! Rank determination for tensor factor models.
//!
//! An observed tensor time series `X_t = F_t ×_1 A_1 ⋯ ×_K A_K + E_t` carries a
//! low-dimensional core `F_t` of size `r_1 × ⋯ × r_K`. This crate estimates the
//! per-mode ranks `r_k` from lagged auto-cross-moment statistics:
//!
//! - [`tensor`]: dense tensors, mode unfolding and mode products.
//! - [`moments`]: the TOPUP and TIPUP statistics, their Gram matrices and spectra.
//! - [`criteria`]: eigenvalue-truncation (IC) and eigen-ratio (ER) selection rules,
//!   penalty families and the subsample-stability tuner for the IC constant.
//! - [`iterative`]: the projected refinements iTOPUP and iTIPUP.
//! - [`simgen`]: matrix factor simulation designs M0–M4.
//! - [`io`]: the `TFMS` binary series format.
//!
//! Mode indices are zero-based throughout the library.

pub mod criteria;
pub mod error;
pub mod io;
pub mod iterative;
pub mod linalg;
pub mod moments;
pub mod simgen;
pub mod tensor;

pub use criteria::{Criterion, PenaltySpec, SelectionResult};
pub use error::{Error, Result};
pub use iterative::{IterOptions, IterResult, IterationState, PenaltyDims};
pub use moments::{EigenSpectrum, Method, MomentMatrix, MomentOptions};
pub use tensor::{Tensor, TensorSeries};
