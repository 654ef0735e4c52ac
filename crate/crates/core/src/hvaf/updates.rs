//! The individual block updates of the HVaF ADMM iteration.
//!
//! Notation: `H` lifts the signal to its `n1 x n2` Hankel matrix, `R` lifts a
//! factor column (length `n1` for `U`, `n2` for `V`) to its own near-square
//! Hankel matrix, `w` are anti-diagonal weights.

use faer::{Mat, MatRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::InitStrategy;
use crate::dense::hermitian_eigen;
use crate::error::{HvafError, Result};
use crate::hankel::{adjoint_into, antidiag_weights, default_square_shape, lift, HankelShape};
use crate::signal::ObservationSet;
use crate::svt::{nuclear_norm, split_at_threshold};
use crate::c64;

/// Shapes and weights shared by every iteration of one solve.
#[derive(Debug, Clone)]
pub struct Geometry {
    /// Shape of `H x`.
    pub signal_shape: HankelShape,
    /// Lift of a column of `U` (length `n1`).
    pub u_lift: HankelShape,
    /// Lift of a column of `V` (length `n2`).
    pub v_lift: HankelShape,
    /// Anti-diagonal weights of `signal_shape`.
    pub w: Vec<f64>,
    pub w_u: Vec<f64>,
    pub w_v: Vec<f64>,
}

impl Geometry {
    pub fn new(signal_shape: HankelShape) -> Result<Self> {
        let u_lift = default_square_shape(signal_shape.n1)?;
        let v_lift = default_square_shape(signal_shape.n2)?;
        Ok(Self {
            w: antidiag_weights(signal_shape).to_f64(),
            w_u: antidiag_weights(u_lift).to_f64(),
            w_v: antidiag_weights(v_lift).to_f64(),
            signal_shape,
            u_lift,
            v_lift,
        })
    }

    pub fn for_length(n: usize) -> Result<Self> {
        Self::new(default_square_shape(n)?)
    }
}

/// Every variable of the augmented Lagrangian.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub x: Vec<c64>,
    pub u: Mat<c64>,
    pub v: Mat<c64>,
    /// Auxiliaries tracking `R Q_r U`.
    pub b: Vec<Mat<c64>>,
    /// Auxiliaries tracking `R Q_r V`.
    pub c: Vec<Mat<c64>>,
    /// Multipliers of `R Q_r U = B_r`.
    pub d: Vec<Mat<c64>>,
    /// Multipliers of `R Q_r V = C_r`.
    pub m: Vec<Mat<c64>>,
    pub mu: f64,
    pub beta: f64,
}

impl AdmmState {
    /// Start from the given factors with `x = P_Omega(y)`, auxiliaries equal
    /// to the factor-column lifts and zero multipliers.
    pub fn new(obs: &ObservationSet, geom: &Geometry, u: Mat<c64>, v: Mat<c64>, mu: f64, beta: f64) -> Self {
        let b: Vec<Mat<c64>> = column_lifts(u.as_ref(), geom.u_lift);
        let c: Vec<Mat<c64>> = column_lifts(v.as_ref(), geom.v_lift);
        let d = b.iter().map(|x| Mat::zeros(x.nrows(), x.ncols())).collect();
        let m = c.iter().map(|x| Mat::zeros(x.nrows(), x.ncols())).collect();
        Self {
            x: obs.zero_filled(),
            u,
            v,
            b,
            c,
            d,
            m,
            mu,
            beta,
        }
    }

    /// `||H x - U V^T||_F`.
    pub fn factor_residual(&self, geom: &Geometry) -> f64 {
        let hx = lift(&self.x, geom.signal_shape.n1, geom.signal_shape.n2);
        (&hx - &self.u * self.v.transpose()).norm_l2()
    }
}

fn column_lifts(f: MatRef<'_, c64>, shape: HankelShape) -> Vec<Mat<c64>> {
    (0..f.ncols())
        .map(|r| {
            let col: Vec<c64> = f.col(r).iter().copied().collect();
            lift(&col, shape.n1, shape.n2)
        })
        .collect()
}

fn check_rank(rank: usize, shape: HankelShape) -> Result<()> {
    let max = shape.n1.min(shape.n2);
    if rank == 0 || rank > max {
        return Err(HvafError::InvalidRank { rank, max });
    }
    Ok(())
}

/// Initial factors `U` (`n1 x rank`) and `V` (`n2 x rank`).
pub fn init_factors(
    obs: &ObservationSet,
    shape: HankelShape,
    rank: usize,
    strategy: InitStrategy,
    seed: u64,
) -> Result<(Mat<c64>, Mat<c64>)> {
    check_rank(rank, shape)?;
    if obs.signal_len() != shape.signal_len() {
        return Err(HvafError::InvalidDimension(format!(
            "observations of length {} do not fit a {}x{} Hankel matrix",
            obs.signal_len(),
            shape.n1,
            shape.n2
        )));
    }
    match strategy {
        InitStrategy::SvdWarmStart => {
            let h = lift(&obs.zero_filled(), shape.n1, shape.n2);
            let svd = h.thin_svd().map_err(|e| {
                HvafError::Numerical(format!("SVD of a {}x{} matrix failed: {e:?}", shape.n1, shape.n2))
            })?;
            let s = svd.S().column_vector();
            let root: Vec<f64> = (0..rank).map(|k| s[k].re.max(0.0).sqrt()).collect();
            let (a, b) = (svd.U(), svd.V());
            let u = Mat::from_fn(shape.n1, rank, |i, k| a[(i, k)] * root[k]);
            let v = Mat::from_fn(shape.n2, rank, |j, k| b[(j, k)].conj() * root[k]);
            Ok((u, v))
        }
        InitStrategy::SeededRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let scale = obs.norm() / ((shape.signal_len() * rank) as f64).sqrt();
            let mut draw = |_: usize, _: usize| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                c64::new(re, im) * scale
            };
            let u = Mat::from_fn(shape.n1, rank, &mut draw);
            let v = Mat::from_fn(shape.n2, rank, &mut draw);
            Ok((u, v))
        }
    }
}

/// Right-hand side `Y` of the factor normal equations:
/// column `r` is `R*(mu A_r - L_r)`, plus `beta data conj(companion)`.
pub fn factor_rhs(
    companion: MatRef<'_, c64>,
    data: MatRef<'_, c64>,
    aux: &[Mat<c64>],
    mult: &[Mat<c64>],
    mu: f64,
    beta: f64,
) -> Mat<c64> {
    let rows = data.nrows();
    let rank = companion.ncols();
    let mut y = &data * companion.conjugate() * crate::scale(beta);
    let mut buf = vec![c64::new(0.0, 0.0); rows];
    for r in 0..rank {
        let target = &aux[r] * crate::scale(mu) - &mult[r];
        adjoint_into(target.as_ref(), &mut buf);
        for (i, v) in buf.iter().enumerate() {
            y[(i, r)] += v;
        }
    }
    y
}

/// Update `U` given `V` (or `V` given `U`, passing `(H x)^T` as `data`).
///
/// Row `p` solves `F_p (mu w_p I + beta G) = Y_p` with
/// `G = companion^T conj(companion)`. The system matrix is Hermitian positive
/// definite, so it is inverted through one eigendecomposition of `G` shared
/// by all rows.
pub fn update_factor_rows(
    companion: MatRef<'_, c64>,
    data: MatRef<'_, c64>,
    aux: &[Mat<c64>],
    mult: &[Mat<c64>],
    mu: f64,
    beta: f64,
    w: &[f64],
) -> Result<Mat<c64>> {
    let rows = data.nrows();
    let rank = companion.ncols();
    if companion.nrows() != data.ncols() || w.len() != rows || aux.len() != rank || mult.len() != rank {
        return Err(HvafError::InvalidDimension(format!(
            "factor update: companion {}x{}, data {}x{}, {} weights, {} auxiliaries",
            companion.nrows(),
            companion.ncols(),
            data.nrows(),
            data.ncols(),
            w.len(),
            aux.len()
        )));
    }
    if !(mu > 0.0 && beta > 0.0) {
        return Err(HvafError::InvalidConfig(format!("mu = {mu} and beta = {beta} must be positive")));
    }
    let y = factor_rhs(companion, data, aux, mult, mu, beta);
    let gram = companion.transpose() * companion.conjugate();
    let (lam, q) = hermitian_eigen(gram.as_ref())?;
    let yq = &y * &q;
    let scaled = Mat::from_fn(rows, rank, |p, k| {
        let denom = mu * w[p] + beta * lam[k].max(0.0);
        yq[(p, k)] / denom
    });
    let out = &scaled * q.adjoint();
    if out.has_nan() {
        return Err(HvafError::Numerical("factor update produced NaN (solver bug)".into()));
    }
    Ok(out)
}

/// Largest relative row residual of `F_p (mu w_p I + beta G) = Y_p`.
pub fn factor_row_residual(
    factor: MatRef<'_, c64>,
    companion: MatRef<'_, c64>,
    data: MatRef<'_, c64>,
    aux: &[Mat<c64>],
    mult: &[Mat<c64>],
    mu: f64,
    beta: f64,
    w: &[f64],
) -> f64 {
    let y = factor_rhs(companion, data, aux, mult, mu, beta);
    let gram = companion.transpose() * companion.conjugate();
    let lhs = &factor * &gram * crate::scale(beta);
    let mut worst = 0.0f64;
    for p in 0..factor.nrows() {
        let mut res = 0.0;
        let mut rhs = 0.0;
        for k in 0..factor.ncols() {
            let l = lhs[(p, k)] + factor[(p, k)] * (mu * w[p]);
            res += (l - y[(p, k)]).norm_sqr();
            rhs += y[(p, k)].norm_sqr();
        }
        if rhs > 0.0 {
            worst = worst.max((res / rhs).sqrt());
        } else {
            worst = worst.max(res.sqrt());
        }
    }
    worst
}

/// `H*(U V^T)`.
fn adjoint_of_product(u: MatRef<'_, c64>, v: MatRef<'_, c64>) -> Vec<c64> {
    let p = u * v.transpose();
    let mut out = vec![c64::new(0.0, 0.0); u.nrows() + v.nrows() - 1];
    adjoint_into(p.as_ref(), &mut out);
    out
}

fn check_x_shapes(u: MatRef<'_, c64>, v: MatRef<'_, c64>, obs: &ObservationSet, w: &[f64]) -> Result<()> {
    let n = u.nrows() + v.nrows() - 1;
    if u.ncols() != v.ncols() || obs.signal_len() != n || w.len() != n {
        return Err(HvafError::InvalidDimension(format!(
            "x update: U {}x{}, V {}x{}, signal length {}, {} weights",
            u.nrows(),
            u.ncols(),
            v.nrows(),
            v.ncols(),
            obs.signal_len(),
            w.len()
        )));
    }
    Ok(())
}

/// Exact-mode update: observed entries are copied from the data, the rest
/// are anti-diagonal averages of `U V^T`.
pub fn update_x_exact(u: MatRef<'_, c64>, v: MatRef<'_, c64>, obs: &ObservationSet, w: &[f64]) -> Result<Vec<c64>> {
    check_x_shapes(u, v, obs, w)?;
    let mut x = adjoint_of_product(u, v);
    for (xk, wk) in x.iter_mut().zip(w) {
        *xk /= *wk;
    }
    for (&i, &val) in obs.indices().iter().zip(obs.values()) {
        x[i - 1] = val;
    }
    Ok(x)
}

/// Noisy-mode update: `x_k = (beta [H*(U V^T)]_k + lambda 1[k in Omega] y_k)
/// / (beta w_k + lambda 1[k in Omega])`.
pub fn update_x_noisy(
    u: MatRef<'_, c64>,
    v: MatRef<'_, c64>,
    obs: &ObservationSet,
    w: &[f64],
    beta: f64,
    lambda: f64,
) -> Result<Vec<c64>> {
    check_x_shapes(u, v, obs, w)?;
    let mut x = adjoint_of_product(u, v);
    let mut denom: Vec<f64> = w.iter().map(|wk| beta * wk).collect();
    for xk in x.iter_mut() {
        *xk *= beta;
    }
    for (&i, &val) in obs.indices().iter().zip(obs.values()) {
        x[i - 1] += val * lambda;
        denom[i - 1] += lambda;
    }
    for (xk, dk) in x.iter_mut().zip(&denom) {
        *xk /= *dk;
    }
    Ok(x)
}

/// Singular value thresholding of every auxiliary followed by the
/// multiplier ascent step, which uses the new auxiliaries.
pub fn update_auxiliaries_and_multipliers(state: &mut AdmmState, geom: &Geometry) -> Result<()> {
    let mu = state.mu;
    let AdmmState { u, v, b, c, d, m, .. } = state;
    update_side(u.as_ref(), geom.u_lift, b, d, mu)?;
    update_side(v.as_ref(), geom.v_lift, c, m, mu)
}

fn update_side(
    factor: MatRef<'_, c64>,
    shape: HankelShape,
    aux: &mut [Mat<c64>],
    mult: &mut [Mat<c64>],
    mu: f64,
) -> Result<()> {
    let mut col = vec![c64::new(0.0, 0.0); factor.nrows()];
    for r in 0..factor.ncols() {
        for (i, v) in col.iter_mut().enumerate() {
            *v = factor[(i, r)];
        }
        let lifted = lift(&col, shape.n1, shape.n2);
        let z = &lifted + &mult[r] * crate::scale(1.0 / mu);
        // D + mu (R u - B) = mu (Z - S_{1/mu}(Z)); forming the right side
        // from the SVD keeps the multiplier inside the unit spectral ball
        // even when mu is large and the subtraction would cancel.
        let (shrunk, clipped) = split_at_threshold(z.as_ref(), 1.0 / mu)?;
        aux[r] = shrunk;
        mult[r] = clipped * crate::scale(mu);
    }
    Ok(())
}

/// Augmented Lagrangian at the current state.
pub fn augmented_lagrangian(state: &AdmmState, geom: &Geometry) -> Result<f64> {
    let mut total = 0.5 * state.beta * state.factor_residual(geom).powi(2);
    for (factor, shape, aux, mult) in [
        (&state.u, geom.u_lift, &state.b, &state.d),
        (&state.v, geom.v_lift, &state.c, &state.m),
    ] {
        for r in 0..factor.ncols() {
            let col: Vec<c64> = factor.col(r).iter().copied().collect();
            let gap = lift(&col, shape.n1, shape.n2) - &aux[r];
            let mut inner = 0.0;
            for j in 0..gap.ncols() {
                for i in 0..gap.nrows() {
                    inner += (mult[r][(i, j)].conj() * gap[(i, j)]).re;
                }
            }
            total += nuclear_norm(aux[r].as_ref())? + inner + 0.5 * state.mu * gap.squared_norm_l2();
        }
    }
    Ok(total)
}
