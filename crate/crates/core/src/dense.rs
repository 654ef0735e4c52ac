//! Small dense factorizations for the inner loops, on the system LAPACK when
//! the `lapack` feature is on and on faer otherwise.

use faer::Mat;
#[cfg(feature = "lapack")]
use faer::MatRef;

use crate::c64;
use crate::error::{HvafError, Result};

/// Thin SVD `X = U diag(s) V^H`, singular values non-increasing.
pub(crate) struct Svd {
    pub u: Mat<c64>,
    pub s: Vec<f64>,
    pub v: Mat<c64>,
}

fn failure(m: usize, n: usize, detail: impl std::fmt::Display) -> HvafError {
    HvafError::Numerical(format!("SVD of a {m}x{n} matrix failed: {detail}"))
}

#[cfg(not(feature = "lapack"))]
pub(crate) fn thin_svd(x: faer::MatRef<'_, c64>) -> Result<Svd> {
    let (m, n) = (x.nrows(), x.ncols());
    let svd = x.thin_svd().map_err(|e| failure(m, n, format!("{e:?}")))?;
    Ok(Svd {
        u: svd.U().to_owned(),
        s: svd.S().column_vector().iter().map(|v| v.re).collect(),
        v: svd.V().to_owned(),
    })
}

#[cfg(feature = "lapack")]
pub(crate) fn thin_svd(x: MatRef<'_, c64>) -> Result<Svd> {
    use lapack_sys::zgesdd_;

    let (m, n) = (x.nrows(), x.ncols());
    let k = m.min(n);
    if k == 0 {
        return Ok(Svd { u: Mat::zeros(m, 0), s: Vec::new(), v: Mat::zeros(n, 0) });
    }
    let mut a = x.to_owned();
    let mut s = vec![0.0; k];
    let mut u = Mat::<c64>::zeros(m, k);
    let mut vt = Mat::<c64>::zeros(k, n);
    let big = m.max(n);
    let mut rwork = vec![0.0; (5 * k * k + 5 * k).max(2 * big * k + 2 * k * k + k)];
    let mut iwork = vec![0i32; 8 * k];
    let (mi, ni) = (m as i32, n as i32);
    let (lda, ldu, ldvt) = (a.col_stride() as i32, u.col_stride() as i32, vt.col_stride() as i32);
    let mut info = 0;
    let mut query = c64::new(0.0, 0.0);
    // SAFETY: every buffer matches the dimensions and leading strides given,
    // and faer matrices are column-major with `c64` laid out as two f64.
    unsafe {
        zgesdd_(
            &(b'S' as _), &mi, &ni, a.as_ptr_mut().cast(), &lda, s.as_mut_ptr(),
            u.as_ptr_mut().cast(), &ldu, vt.as_ptr_mut().cast(), &ldvt,
            (&mut query as *mut c64).cast(), &-1, rwork.as_mut_ptr(), iwork.as_mut_ptr(), &mut info,
        );
    }
    if info != 0 {
        return Err(failure(m, n, format!("workspace query returned info {info}")));
    }
    let lwork = query.re as i32;
    let mut work = vec![c64::new(0.0, 0.0); lwork.max(1) as usize];
    // SAFETY: as above, with a workspace of the queried size.
    unsafe {
        zgesdd_(
            &(b'S' as _), &mi, &ni, a.as_ptr_mut().cast(), &lda, s.as_mut_ptr(),
            u.as_ptr_mut().cast(), &ldu, vt.as_ptr_mut().cast(), &ldvt,
            work.as_mut_ptr().cast(), &lwork, rwork.as_mut_ptr(), iwork.as_mut_ptr(), &mut info,
        );
    }
    if info != 0 {
        return Err(failure(m, n, format!("zgesdd returned info {info}")));
    }
    Ok(Svd { u, s, v: vt.adjoint().to_owned() })
}

/// All eigenpairs of the Hermitian `g` (lower triangle read), ascending,
/// vectors as columns.
#[cfg(not(feature = "lapack"))]
pub(crate) fn hermitian_eigen(g: faer::MatRef<'_, c64>) -> Result<(Vec<f64>, Mat<c64>)> {
    let n = g.nrows();
    let eig = g
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| HvafError::Numerical(format!("eigendecomposition of a {n}x{n} matrix failed: {e:?}")))?;
    Ok((eig.S().column_vector().iter().map(|v| v.re).collect(), eig.U().to_owned()))
}

#[cfg(feature = "lapack")]
pub(crate) fn hermitian_eigen(g: MatRef<'_, c64>) -> Result<(Vec<f64>, Mat<c64>)> {
    zheevr(g, b'A', 0.0, 0.0)
}

/// Eigenpairs of the Hermitian `g` with eigenvalues in `(lower, upper]`,
/// ascending, vectors as columns.
#[cfg(feature = "lapack")]
pub(crate) fn hermitian_eigs_in(g: MatRef<'_, c64>, lower: f64, upper: f64) -> Result<(Vec<f64>, Mat<c64>)> {
    zheevr(g, b'V', lower, upper)
}

#[cfg(feature = "lapack")]
fn zheevr(g: MatRef<'_, c64>, range: u8, lower: f64, upper: f64) -> Result<(Vec<f64>, Mat<c64>)> {
    use lapack_sys::zheevr_;

    let n = g.nrows();
    let mut a = g.to_owned();
    let mut w = vec![0.0; n];
    let mut z = Mat::<c64>::zeros(n, n);
    let mut isuppz = vec![0i32; 2 * n];
    let lwork = (64 * n) as i32;
    let mut work = vec![c64::new(0.0, 0.0); lwork as usize];
    let lrwork = (24 * n) as i32;
    let mut rwork = vec![0.0; lrwork as usize];
    let liwork = (10 * n) as i32;
    let mut iwork = vec![0i32; liwork as usize];
    let ni = n as i32;
    let (lda, ldz) = (a.col_stride() as i32, z.col_stride() as i32);
    let mut found = 0;
    let mut info = 0;
    // SAFETY: buffer sizes meet the documented minimums for `n`, and the
    // strides are those of the column-major faer matrices passed.
    unsafe {
        zheevr_(
            &(b'V' as _), &(range as _), &(b'L' as _), &ni, a.as_ptr_mut().cast(), &lda,
            &lower, &upper, &0, &0, &0.0, &mut found, w.as_mut_ptr(), z.as_ptr_mut().cast(), &ldz,
            isuppz.as_mut_ptr(), work.as_mut_ptr().cast(), &lwork, rwork.as_mut_ptr(), &lrwork,
            iwork.as_mut_ptr(), &liwork, &mut info,
        );
    }
    if info != 0 {
        return Err(HvafError::Numerical(format!("zheevr on a {n}x{n} matrix returned info {info}")));
    }
    let found = found as usize;
    w.truncate(found);
    Ok((w, z.get(.., ..found).to_owned()))
}
