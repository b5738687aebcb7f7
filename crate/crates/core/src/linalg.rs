//! Small dense helpers on top of nalgebra's symmetric eigensolver and SVD.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative asymmetry tolerated before a matrix is rejected as non-symmetric.
const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalues below `-NEG_EIG_TOL · scale` are treated as a hard error rather
/// than round-off.
pub const NEG_EIG_TOL: f64 = 1e-10;

/// Iteration cap for the eigensolver; 0 would mean unbounded.
const EIGEN_MAX_SWEEPS: usize = 10_000;

/// Eigen-decomposition with eigenvalues sorted in descending order and the
/// eigenvectors permuted to match.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn sorted_symmetric_eigen(s: &DMatrix<f64>) -> Result<SortedEigen> {
    if !s.is_square() {
        return Err(Error::mismatch(format!(
            "expected a square matrix, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    let n = s.nrows();
    // Symmetrize to remove accumulated round-off before factoring.
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, EIGEN_MAX_SWEEPS)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SortedEigen { values, vectors })
}

pub fn check_symmetric(s: &DMatrix<f64>) -> Result<()> {
    if !s.is_square() {
        return Err(Error::invalid(format!(
            "expected a square matrix, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    let scale = s.amax().max(f64::MIN_POSITIVE);
    let asym = (s - s.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::invalid(format!(
            "matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    Ok(())
}

/// Clamp round-off negatives to zero; anything below `-NEG_EIG_TOL · scale`
/// is rejected.
pub fn clamp_nonnegative(values: &mut [f64], scale: f64) -> Result<()> {
    let floor = -NEG_EIG_TOL * scale.abs().max(f64::MIN_POSITIVE);
    for v in values.iter_mut() {
        if *v < floor {
            return Err(Error::Numerical(format!(
                "eigenvalue {v:e} is below the round-off floor {floor:e}"
            )));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(())
}

pub fn symmetric_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(s)?;
    let mut eig = sorted_symmetric_eigen(s)?;
    let scale = eig.values.first().copied().unwrap_or(0.0).abs().max(1.0);
    clamp_nonnegative(&mut eig.values, scale)?;
    let mut scaled = eig.vectors.clone();
    for (j, &lam) in eig.values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(lam.sqrt());
    }
    let r = &scaled * eig.vectors.transpose();
    Ok((&r + r.transpose()) * 0.5)
}

/// `‖U Uᵀ − V Vᵀ‖_2` for two column-orthonormal bases.
///
/// Equal ranks reduce this to the sine of the largest principal angle,
/// `sqrt(1 − σ_min(UᵀV)²)`. Unequal ranks always give 1.
pub fn projector_distance(u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    if u.ncols() != v.ncols() || u.nrows() != v.nrows() {
        return 1.0;
    }
    if u.ncols() == 0 {
        return 0.0;
    }
    let cross = u.transpose() * v;
    let sv = cross.singular_values();
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min).min(1.0);
    (1.0 - smin * smin).max(0.0).sqrt()
}
