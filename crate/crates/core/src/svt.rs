//! Singular value soft-thresholding, the proximal map of the nuclear norm.

use faer::{Mat, MatRef};

use crate::c64;
#[cfg(feature = "lapack")]
use crate::dense::hermitian_eigs_in;
use crate::dense::{thin_svd, Svd};
use crate::error::{HvafError, Result};

/// `A max(S - t, 0) B^H` for the SVD `X = A S B^H`.
///
/// This is the unique minimizer of `t ||Z||_* + 0.5 ||Z - X||_F^2`.
pub fn soft_threshold_singular_values(x: MatRef<'_, c64>, threshold: f64) -> Result<Mat<c64>> {
    Ok(soft_threshold_with_spectrum(x, threshold)?.0)
}

/// Like [`soft_threshold_singular_values`], also returning the singular values
/// of the input in non-increasing order.
pub fn soft_threshold_with_spectrum(x: MatRef<'_, c64>, threshold: f64) -> Result<(Mat<c64>, Vec<f64>)> {
    if !(threshold >= 0.0) {
        return Err(HvafError::InvalidConfig(format!(
            "threshold {threshold} must be nonnegative"
        )));
    }
    let (m, n) = (x.nrows(), x.ncols());
    if m == 0 || n == 0 {
        return Ok((Mat::zeros(m, n), Vec::new()));
    }
    // Every singular value is at most the Frobenius norm, so a small input is
    // thresholded to zero without factorizing it.
    let fro = x.norm_l2();
    if fro <= threshold {
        let sv = if fro == 0.0 { vec![0.0; m.min(n)] } else { singular_values(x)? };
        return Ok((Mat::zeros(m, n), sv));
    }
    let Svd { u, s: sv, v } = thin_svd(x)?;
    let keep = sv.iter().take_while(|&&v| v > threshold).count();
    let mut out = Mat::<c64>::zeros(m, n);
    if keep > 0 {
        let scaled = Mat::from_fn(m, keep, |i, k| u[(i, k)] * (sv[k] - threshold));
        out = &scaled * v.get(.., ..keep).adjoint();
    }
    Ok((out, sv))
}

/// `(S_t(X), X - S_t(X))`, the second part built from the same SVD as
/// `A min(S, t) B^H`. Its spectral norm is at most `t` up to the accuracy of
/// the factorization, which subtracting the two matrices does not guarantee.
pub fn split_at_threshold(x: MatRef<'_, c64>, threshold: f64) -> Result<(Mat<c64>, Mat<c64>)> {
    if !(threshold >= 0.0) {
        return Err(HvafError::InvalidConfig(format!(
            "threshold {threshold} must be nonnegative"
        )));
    }
    let (m, n) = (x.nrows(), x.ncols());
    if m == 0 || n == 0 || x.norm_l2() <= threshold {
        return Ok((Mat::zeros(m, n), x.to_owned()));
    }
    #[cfg(feature = "lapack")]
    if let Some(parts) = split_by_gram(x, threshold)? {
        return Ok(parts);
    }
    let Svd { u, s, v } = thin_svd(x)?;
    let k = m.min(n);
    let kept = Mat::from_fn(m, k, |i, j| u[(i, j)] * (s[j] - threshold).max(0.0));
    let clipped = Mat::from_fn(m, k, |i, j| u[(i, j)] * s[j].min(threshold));
    Ok((&kept * v.adjoint(), &clipped * v.adjoint()))
}

// Only the singular pairs above the threshold are needed, and typically
// there are few: take them from the eigenpairs of the Gram matrix `G`. The
// clipped part then comes from a subtraction, so unlike the SVD form its
// spectral norm is not `<= t` by construction; this returns `None` (and the
// caller takes the SVD) unless the excess is provably negligible.
//
// With `E ~ eps m ||X||_F^2` bounding the error of the computed `G`:
// - kept singular pairs are recomputed from `X V_k`, accurate to second
//   order in the eigenvector error, where `sqrt(lambda_i)` is only accurate
//   to `E / lambda_i`;
// - an eigenvector tilted by `E / gap` towards the next one below the
//   threshold raises the clipped norm by the smaller of
//   `E^2 / (lambda_k (t^2 - lambda_{k+1}))` and `E / (s_k t)`, relatively;
// - the subtraction itself costs `eps ||X||_F / t`, relatively.
#[cfg(feature = "lapack")]
fn split_by_gram(x: MatRef<'_, c64>, t: f64) -> Result<Option<(Mat<c64>, Mat<c64>)>> {
    const BUDGET: f64 = 1e-12;
    let (m, n) = (x.nrows(), x.ncols());
    let tall = m >= n;
    let fro2 = x.squared_norm_l2();
    let err = 1e-16 * m.max(n) as f64 * fro2;
    let t2 = t * t;
    if 1e-16 * m.max(n) as f64 * fro2.sqrt() > BUDGET * t {
        return Ok(None);
    }
    let g = if tall { x.adjoint() * x } else { x * x.adjoint() };
    let (lam, vecs) = hermitian_eigs_in(g.as_ref(), 0.25 * t2, 2.0 * fro2 + f64::MIN_POSITIVE)?;
    let keep_from = lam.iter().position(|&l| l > t2).unwrap_or(lam.len());
    if keep_from == lam.len() {
        // The largest singular value is at most `t` up to `E / t^2`.
        return Ok(if err > BUDGET * t2 { None } else { Some((Mat::zeros(m, n), x.to_owned())) });
    }
    let next = if keep_from > 0 { lam[keep_from - 1] } else { 0.25 * t2 };
    let lk = lam[keep_from];
    let tilt = (err * err / (lk * (t2 - next).max(0.0))).min(err / (lk.sqrt() * t));
    if !(tilt <= BUDGET) {
        return Ok(None);
    }
    let kv = vecs.get(.., keep_from..);
    // The eigenvectors may be rotated within the kept subspace, which would
    // make `X v_i` non-orthogonal; a small SVD of the projection restores
    // exact singular pairs on that subspace.
    let kept = if tall {
        let Svd { u, s, v } = thin_svd((x * kv).as_ref())?;
        let scaled = Mat::from_fn(m, s.len(), |i, c| u[(i, c)] * (s[c] - t).max(0.0));
        &scaled * (kv * &v).adjoint()
    } else {
        let Svd { u, s, v } = thin_svd((kv.adjoint() * x).as_ref())?;
        let left = kv * &u;
        let scaled = Mat::from_fn(m, s.len(), |i, c| left[(i, c)] * (s[c] - t).max(0.0));
        &scaled * v.adjoint()
    };
    let clipped = x - &kept;
    Ok(Some((kept, clipped)))
}

pub fn singular_values(x: MatRef<'_, c64>) -> Result<Vec<f64>> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Ok(Vec::new());
    }
    x.singular_values().map_err(|e| {
        HvafError::Numerical(format!(
            "singular values of a {}x{} matrix failed: {e:?}",
            x.nrows(),
            x.ncols()
        ))
    })
}

/// Largest singular value.
pub fn spectral_norm(x: MatRef<'_, c64>) -> Result<f64> {
    Ok(singular_values(x)?.first().copied().unwrap_or(0.0))
}

/// Sum of singular values.
pub fn nuclear_norm(x: MatRef<'_, c64>) -> Result<f64> {
    Ok(singular_values(x)?.iter().sum())
}
