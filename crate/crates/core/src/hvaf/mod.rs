//! Hankel matrix completion with Vandermonde factorization.
//!
//! The completed Hankel matrix is factored as `H x = U V^T`, and every column
//! of `U` and `V` is pushed towards a single exponential by penalizing the
//! nuclear norm of its own Hankel lift. The penalized problem is solved by
//! ADMM, while the factorization weight `beta` is doubled from `beta0` up to
//! `beta_max` (continuation).

mod config;
pub mod updates;

use std::time::Instant;

use faer::{Mat, MatRef};
use rayon::prelude::*;
use serde::{Serialize, Serializer};

pub use config::{FitMode, InitStrategy, MultiplierTrace, SolverConfig, DEFAULT_LAMBDA};
use updates::{
    init_factors, update_auxiliaries_and_multipliers, update_factor_rows, update_x_exact, update_x_noisy,
    AdmmState, Geometry,
};

use crate::error::{HvafError, Result};
use crate::hankel::{lift, norm};
use crate::signal::{ObservationSet, SamplingMask};
use crate::svt::spectral_norm;
use crate::{c64, ComplexSignal};

/// Summary of one continuation stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub beta: f64,
    pub iterations: usize,
    /// `||x_k - x_{k-1}|| / ||x_{k-1}||` at the last iteration.
    pub relative_change: f64,
    /// `||H x - U V^T||_F` at the end of the stage.
    pub factor_residual: f64,
    pub converged: bool,
}

/// One recorded value of the multiplier bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MultiplierSample {
    pub stage: usize,
    pub iteration: usize,
    /// Largest spectral norm over all `D_r` and `M_r`.
    pub max_spectral_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverReport {
    #[serde(serialize_with = "serialize_signal")]
    pub recovered: ComplexSignal,
    pub stages: Vec<StageReport>,
    pub multiplier_trace: Vec<MultiplierSample>,
    /// The last continuation stage met the tolerance before the iteration cap.
    pub converged: bool,
    pub total_iterations: usize,
    pub wall_time_secs: f64,
}

impl SolverReport {
    /// Largest multiplier spectral norm seen, if any were recorded.
    pub fn max_multiplier_norm(&self) -> Option<f64> {
        self.multiplier_trace.iter().map(|s| s.max_spectral_norm).reduce(f64::max)
    }
}

pub(crate) fn serialize_signal<S: Serializer>(x: &[c64], s: S) -> std::result::Result<S::Ok, S::Error> {
    let pairs: Vec<[f64; 2]> = x.iter().map(|v| [v.re, v.im]).collect();
    pairs.serialize(s)
}

/// Stepwise driver. [`solve`] is the usual entry point; this type exposes
/// the state between iterations for diagnostics.
pub struct HvafSolver<'a> {
    obs: &'a ObservationSet,
    config: SolverConfig,
    geom: Geometry,
    state: AdmmState,
}

impl<'a> HvafSolver<'a> {
    pub fn new(obs: &'a ObservationSet, config: &SolverConfig) -> Result<Self> {
        config.validate()?;
        if obs.count() == 0 {
            return Err(HvafError::InvalidCount { count: 0, n: obs.signal_len() });
        }
        let geom = Geometry::for_length(obs.signal_len())?;
        let (u, v) = init_factors(obs, geom.signal_shape, config.rank, config.init, config.seed)?;
        let state = AdmmState::new(obs, &geom, u, v, config.mu0, config.beta0);
        Ok(Self {
            obs,
            config: config.clone(),
            geom,
            state,
        })
    }

    pub fn state(&self) -> &AdmmState {
        &self.state
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    /// Start a continuation stage at the given `beta`.
    pub fn begin_stage(&mut self, beta: f64, first: bool) {
        self.state.beta = beta;
        if first || self.config.reset_mu_per_stage {
            self.state.mu = self.config.mu0;
        }
    }

    /// One ADMM sweep; returns the relative change of `x`.
    pub fn iterate(&mut self) -> Result<f64> {
        let st = &mut self.state;
        let shape = self.geom.signal_shape;
        let hx = lift(&st.x, shape.n1, shape.n2);
        st.u = update_factor_rows(st.v.as_ref(), hx.as_ref(), &st.b, &st.d, st.mu, st.beta, &self.geom.w_u)?;
        st.v = update_factor_rows(st.u.as_ref(), hx.transpose(), &st.c, &st.m, st.mu, st.beta, &self.geom.w_v)?;
        let x_new = match self.config.mode {
            FitMode::Exact => update_x_exact(st.u.as_ref(), st.v.as_ref(), self.obs, &self.geom.w)?,
            FitMode::Noisy { lambda } => {
                update_x_noisy(st.u.as_ref(), st.v.as_ref(), self.obs, &self.geom.w, st.beta, lambda)?
            }
        };
        let change = relative_change(&x_new, &st.x);
        st.x = x_new;
        update_auxiliaries_and_multipliers(st, &self.geom)?;
        st.mu *= self.config.rho;
        if !change.is_finite() {
            return Err(HvafError::Numerical("iterate diverged to a non-finite value".into()));
        }
        Ok(change)
    }

    /// Largest spectral norm over all multipliers.
    pub fn multiplier_norm(&self) -> Result<f64> {
        let mut worst = 0.0f64;
        for d in self.state.d.iter().chain(&self.state.m) {
            worst = worst.max(spectral_norm(d.as_ref())?);
        }
        Ok(worst)
    }

    /// Run the whole continuation schedule.
    pub fn run(mut self) -> Result<SolverReport> {
        let start = Instant::now();
        let schedule = self.config.beta_schedule();
        let mut stages = Vec::with_capacity(schedule.len());
        let mut trace = Vec::new();
        let mut total = 0;
        for (s, &beta) in schedule.iter().enumerate() {
            self.begin_stage(beta, s == 0);
            let mut change = f64::INFINITY;
            let mut iterations = 0;
            while iterations < self.config.max_inner_iters {
                change = self.iterate()?;
                iterations += 1;
                if self.config.multiplier_trace == MultiplierTrace::EveryIteration {
                    trace.push(MultiplierSample {
                        stage: s,
                        iteration: iterations,
                        max_spectral_norm: self.multiplier_norm()?,
                    });
                }
                if change <= self.config.tol {
                    break;
                }
            }
            total += iterations;
            if self.config.multiplier_trace == MultiplierTrace::StageEnd {
                trace.push(MultiplierSample {
                    stage: s,
                    iteration: iterations,
                    max_spectral_norm: self.multiplier_norm()?,
                });
            }
            let residual = self.state.factor_residual(&self.geom);
            let converged = change <= self.config.tol;
            log::debug!("stage {s}: beta {beta:e}, {iterations} iterations, change {change:.2e}, residual {residual:.2e}");
            stages.push(StageReport {
                beta,
                iterations,
                relative_change: change,
                factor_residual: residual,
                converged,
            });
        }
        let converged = stages.last().is_some_and(|s| s.converged);
        if !converged {
            log::warn!("final continuation stage hit the iteration cap");
        }
        Ok(SolverReport {
            recovered: self.state.x,
            stages,
            multiplier_trace: trace,
            converged,
            total_iterations: total,
            wall_time_secs: start.elapsed().as_secs_f64(),
        })
    }
}

fn relative_change(new: &[c64], old: &[c64]) -> f64 {
    let diff = new.iter().zip(old).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let base = norm(old);
    if base > 0.0 {
        diff / base
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Recover the full signal from its observed samples.
pub fn solve(obs: &ObservationSet, config: &SolverConfig) -> Result<SolverReport> {
    HvafSolver::new(obs, config)?.run()
}

/// Column-by-column recovery of a matrix.
#[derive(Debug)]
pub struct ColumnRecovery {
    /// Recovered columns; a failed column holds its zero-filled observations.
    pub matrix: Mat<c64>,
    pub reports: Vec<Result<SolverReport>>,
}

impl ColumnRecovery {
    pub fn failures(&self) -> impl Iterator<Item = (usize, &HvafError)> {
        self.reports.iter().enumerate().filter_map(|(j, r)| r.as_ref().err().map(|e| (j, e)))
    }
}

/// Recover every column of `matrix` independently from the entries selected
/// by its mask. Columns run in parallel on the rayon pool.
pub fn solve_columns(matrix: MatRef<'_, c64>, masks: &[SamplingMask], config: &SolverConfig) -> Result<ColumnRecovery> {
    if masks.len() != matrix.ncols() {
        return Err(HvafError::InvalidDimension(format!(
            "{} masks for {} columns",
            masks.len(),
            matrix.ncols()
        )));
    }
    config.validate()?;
    let n = matrix.nrows();
    let columns: Vec<ComplexSignal> = (0..matrix.ncols())
        .map(|j| matrix.col(j).iter().copied().collect())
        .collect();
    let observed: Vec<Result<ObservationSet>> = columns
        .iter()
        .zip(masks)
        .map(|(col, mask)| mask.observe(col))
        .collect();
    let reports: Vec<Result<SolverReport>> = observed
        .par_iter()
        .map(|obs| obs.as_ref().map_err(clone_error).and_then(|o| solve(o, config)))
        .collect();
    let mut out = Mat::<c64>::zeros(n, matrix.ncols());
    for (j, rep) in reports.iter().enumerate() {
        let col = match (rep, &observed[j]) {
            (Ok(r), _) => r.recovered.clone(),
            (Err(e), Ok(o)) => {
                log::warn!("column {}: {e}", j + 1);
                o.zero_filled()
            }
            (Err(e), Err(_)) => {
                log::warn!("column {}: {e}", j + 1);
                vec![c64::new(0.0, 0.0); n]
            }
        };
        for (i, v) in col.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(ColumnRecovery { matrix: out, reports })
}

fn clone_error(e: &HvafError) -> HvafError {
    HvafError::InvalidSignal(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::rlne;
    use crate::signal::{random_mask, random_model, synthesize};

    #[test]
    fn full_observation_returns_input() {
        let y = synthesize(&random_model(3, true, None, 3).unwrap(), 31).unwrap();
        let obs = SamplingMask::full(31).observe(&y).unwrap();
        let rep = solve(&obs, &SolverConfig::with_rank(3)).unwrap();
        assert_eq!(rep.recovered, y);
        assert_eq!(rep.stages.len(), 26);
    }

    #[test]
    fn rejects_empty_observations_and_bad_config() {
        let obs = ObservationSet::new(9, vec![], vec![]).unwrap();
        assert!(matches!(solve(&obs, &SolverConfig::with_rank(1)), Err(HvafError::InvalidCount { .. })));
        let y = vec![c64::new(1.0, 0.0); 9];
        let obs = SamplingMask::full(9).observe(&y).unwrap();
        let bad = SolverConfig { rho: 2.0, ..SolverConfig::with_rank(1) };
        assert!(matches!(solve(&obs, &bad), Err(HvafError::InvalidConfig(_))));
        assert!(matches!(
            solve(&obs, &SolverConfig::with_rank(6)),
            Err(HvafError::InvalidRank { rank: 6, max: 5 })
        ));
    }

    #[test]
    fn recovers_small_undamped_signal() {
        let y = synthesize(&random_model(2, false, None, 11).unwrap(), 41).unwrap();
        let obs = random_mask(41, 24, 11).unwrap().observe(&y).unwrap();
        let rep = solve(&obs, &SolverConfig::with_rank(2)).unwrap();
        for (&i, &v) in obs.indices().iter().zip(obs.values()) {
            assert_eq!(rep.recovered[i - 1], v);
        }
        assert!(rlne(&rep.recovered, &y).unwrap() <= 1e-3);
    }

    #[test]
    fn identical_columns_give_identical_outputs() {
        let y = synthesize(&random_model(2, true, None, 5).unwrap(), 21).unwrap();
        let mat = Mat::from_fn(21, 2, |i, _| y[i]);
        let mask = random_mask(21, 14, 5).unwrap();
        let cfg = SolverConfig::with_rank(2).noisy(DEFAULT_LAMBDA);
        let out = solve_columns(mat.as_ref(), &[mask.clone(), mask], &cfg).unwrap();
        assert_eq!(out.failures().count(), 0);
        for i in 0..21 {
            assert_eq!(out.matrix[(i, 0)], out.matrix[(i, 1)]);
        }
    }

    #[test]
    fn column_failures_do_not_abort_others() {
        let mat = Mat::from_fn(11, 2, |i, j| c64::new((i + j) as f64, 1.0));
        let masks = [SamplingMask::full(11), SamplingMask::full(9)];
        let out = solve_columns(mat.as_ref(), &masks, &SolverConfig::with_rank(1)).unwrap();
        let failed: Vec<usize> = out.failures().map(|(j, _)| j).collect();
        assert_eq!(failed, vec![1]);
        assert_eq!(out.matrix[(3, 0)], mat[(3, 0)]);
    }
}
