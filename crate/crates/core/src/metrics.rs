//! Reconstruction error metrics and success criteria.

use faer::MatRef;

use crate::c64;
use crate::error::{HvafError, Result};
use crate::hankel::norm;

/// Relative error threshold for a successful reconstruction.
pub const RECOVERY_THRESHOLD: f64 = 1e-3;

/// Relative least normalized error `||x - y|| / ||y||`.
pub fn rlne(x: &[c64], y: &[c64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(HvafError::InvalidDimension(format!(
            "cannot compare lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    let denom = norm(y);
    if denom == 0.0 {
        return Err(HvafError::InvalidReference("reference signal is zero".into()));
    }
    let num = x.iter().zip(y).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    Ok(num / denom)
}

/// Frobenius-norm RLNE for matrices.
pub fn rlne_matrix(x: MatRef<'_, c64>, y: MatRef<'_, c64>) -> Result<f64> {
    if x.nrows() != y.nrows() || x.ncols() != y.ncols() {
        return Err(HvafError::InvalidDimension(format!(
            "cannot compare {}x{} with {}x{}",
            x.nrows(),
            x.ncols(),
            y.nrows(),
            y.ncols()
        )));
    }
    let denom = y.norm_l2();
    if denom == 0.0 {
        return Err(HvafError::InvalidReference("reference matrix is zero".into()));
    }
    Ok((x - y).norm_l2() / denom)
}

/// `rlne(x, y) <= 1e-3`.
pub fn recovery_success(x: &[c64], y: &[c64]) -> bool {
    matches!(rlne(x, y), Ok(e) if e <= RECOVERY_THRESHOLD)
}

/// `-10 log10(||e||^2 / ||observed||^2)`.
pub fn snr_db(noise: &[c64], observed: &[c64]) -> Result<f64> {
    let s = norm(observed);
    if s == 0.0 {
        return Err(HvafError::InvalidReference("observed signal is zero".into()));
    }
    let e = norm(noise);
    Ok(-10.0 * (e * e / (s * s)).log10())
}
