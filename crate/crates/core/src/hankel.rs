//! Hankel lifting of vectors and the associated adjoint, weights and
//! column selection operators.
//!
//! A vector `x` of length `n = n1 + n2 - 1` lifts to the `n1 x n2` matrix with
//! entries `x[i + j - 1]` (1-based). The adjoint sums anti-diagonals, and the
//! composition adjoint-after-lift is the diagonal scaling by the anti-diagonal
//! lengths `w`.

use faer::{Mat, MatRef};

use crate::error::{HvafError, Result};
use crate::{c64, ComplexSignal};

/// Row/column counts of a Hankel lift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct HankelShape {
    pub n1: usize,
    pub n2: usize,
}

impl HankelShape {
    pub fn new(n1: usize, n2: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(HvafError::InvalidDimension(format!(
                "Hankel shape {n1}x{n2} must have at least one row and column"
            )));
        }
        Ok(Self { n1, n2 })
    }

    /// Length of the vector this shape lifts.
    pub fn signal_len(&self) -> usize {
        self.n1 + self.n2 - 1
    }
}

/// The square (odd `n`) or near-square (even `n`) shape used for a signal of
/// length `n`: `n1 = n / 2 + 1`, `n2 = n + 1 - n1`.
pub fn default_square_shape(n: usize) -> Result<HankelShape> {
    if n == 0 {
        return Err(HvafError::InvalidDimension(
            "signal length must be positive".into(),
        ));
    }
    let n1 = n / 2 + 1;
    HankelShape::new(n1, n + 1 - n1)
}

/// Anti-diagonal lengths of an `n1 x n2` Hankel matrix.
///
/// `w[k-1]` counts the pairs `(i, j)` with `i + j - 1 = k`. This is the
/// diagonal of `R* R`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AntidiagWeights(Vec<usize>);

impl AntidiagWeights {
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }

    pub(crate) fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&w| w as f64).collect()
    }
}

pub fn antidiag_weights(shape: HankelShape) -> AntidiagWeights {
    let n = shape.signal_len();
    let short = shape.n1.min(shape.n2);
    let w = (0..n)
        .map(|k| {
            // k is 0-based; the anti-diagonal i + j = k (0-based) has
            // min(k + 1, n - k, n1, n2) entries.
            (k + 1).min(n - k).min(short)
        })
        .collect();
    AntidiagWeights(w)
}

/// Lift `x` to its `n1 x n2` Hankel matrix.
pub fn hankelize(x: &[c64], shape: HankelShape) -> Result<Mat<c64>> {
    if x.len() != shape.signal_len() {
        return Err(HvafError::InvalidDimension(format!(
            "vector of length {} cannot fill a {}x{} Hankel matrix (needs {})",
            x.len(),
            shape.n1,
            shape.n2,
            shape.signal_len()
        )));
    }
    Ok(lift(x, shape.n1, shape.n2))
}

/// Sum the anti-diagonals of `mat`.
pub fn hankel_adjoint(mat: MatRef<'_, c64>) -> Result<ComplexSignal> {
    check_nonempty(mat)?;
    let mut out = vec![c64::new(0.0, 0.0); mat.nrows() + mat.ncols() - 1];
    adjoint_into(mat, &mut out);
    Ok(out)
}

/// Moore-Penrose pseudoinverse of the lift: anti-diagonal averaging.
pub fn hankel_pinv(mat: MatRef<'_, c64>) -> Result<ComplexSignal> {
    check_nonempty(mat)?;
    let shape = HankelShape::new(mat.nrows(), mat.ncols())?;
    let w = antidiag_weights(shape);
    let mut out = vec![c64::new(0.0, 0.0); shape.signal_len()];
    adjoint_into(mat, &mut out);
    for (v, &wk) in out.iter_mut().zip(w.as_slice()) {
        *v /= wk as f64;
    }
    Ok(out)
}

/// Column `r` (1-based) of `mat`.
pub fn column_select(mat: MatRef<'_, c64>, r: usize) -> Result<ComplexSignal> {
    if r == 0 || r > mat.ncols() {
        return Err(HvafError::IndexOutOfRange {
            index: r,
            len: mat.ncols(),
        });
    }
    Ok(mat.col(r - 1).iter().copied().collect())
}

/// A `len(x) x width` matrix whose column `r` (1-based) is `x` and whose other
/// columns are zero.
pub fn column_embed(x: &[c64], r: usize, width: usize) -> Result<Mat<c64>> {
    if r == 0 || r > width {
        return Err(HvafError::IndexOutOfRange {
            index: r,
            len: width,
        });
    }
    let mut out = Mat::zeros(x.len(), width);
    for (i, &v) in x.iter().enumerate() {
        out[(i, r - 1)] = v;
    }
    Ok(out)
}

fn check_nonempty(mat: MatRef<'_, c64>) -> Result<()> {
    if mat.nrows() == 0 || mat.ncols() == 0 {
        return Err(HvafError::InvalidDimension(format!(
            "empty {}x{} matrix",
            mat.nrows(),
            mat.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn lift(x: &[c64], n1: usize, n2: usize) -> Mat<c64> {
    debug_assert_eq!(x.len(), n1 + n2 - 1);
    Mat::from_fn(n1, n2, |i, j| x[i + j])
}

/// `out[k] = sum_{i + j = k} mat[(i, j)]` (0-based), overwriting `out`.
pub(crate) fn adjoint_into(mat: MatRef<'_, c64>, out: &mut [c64]) {
    debug_assert_eq!(out.len(), mat.nrows() + mat.ncols() - 1);
    out.fill(c64::new(0.0, 0.0));
    for j in 0..mat.ncols() {
        let dst = &mut out[j..j + mat.nrows()];
        for (i, v) in dst.iter_mut().enumerate() {
            *v += mat[(i, j)];
        }
    }
}

pub(crate) fn norm(x: &[c64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}
