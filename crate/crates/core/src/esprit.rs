//! Least-squares ESPRIT: frequencies, dampings and amplitudes of a sum of
//! exponentials from its samples.

use std::f64::consts::PI;

use faer::linalg::solvers::SolveLstsq;
use faer::Mat;

use crate::error::{HvafError, Result};
use crate::hankel::{default_square_shape, lift};
use crate::signal::{Component, ExponentialModel};
use crate::svt::singular_values;
use crate::c64;

/// Condition number of the Vandermonde fit above which a warning is raised.
pub const ILL_CONDITIONED: f64 = 1e12;

/// Relative error bound used by [`estimation_success`].
pub const ESTIMATION_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    /// Components sorted by frequency.
    pub model: ExponentialModel,
    pub warnings: Vec<String>,
}

/// Estimate `rank` exponentials from `x` (samples at times `1..=n`).
pub fn estimate(x: &[c64], rank: usize) -> Result<Estimate> {
    let n = x.len();
    if rank == 0 || n < 2 * rank + 1 {
        return Err(HvafError::InvalidRank {
            rank,
            max: n.saturating_sub(1) / 2,
        });
    }
    let shape = default_square_shape(n)?;
    let h = lift(x, shape.n1, shape.n2);
    let svd = h
        .thin_svd()
        .map_err(|e| HvafError::Numerical(format!("SVD of a {}x{} matrix failed: {e:?}", shape.n1, shape.n2)))?;
    let a = svd.U().get(.., ..rank);
    let n1 = shape.n1;
    let top = a.get(..n1 - 1, ..).to_owned();
    let bottom = a.get(1.., ..).to_owned();
    let psi = top.qr().solve_lstsq(&bottom);
    let nodes = psi
        .eigenvalues()
        .map_err(|e| HvafError::Numerical(format!("eigenvalues of the {rank}x{rank} rotation failed: {e:?}")))?;

    let mut warnings = Vec::new();
    let mut parts: Vec<(f64, f64, c64)> = nodes
        .iter()
        .map(|z| {
            let freq = wrap_unit(z.arg() / (2.0 * PI));
            let damping = (-z.norm().ln()).max(0.0);
            let node = c64::from_polar((-damping).exp(), 2.0 * PI * freq);
            (freq, damping, node)
        })
        .collect();
    if parts.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(HvafError::Numerical("non-finite node estimate".into()));
    }
    parts.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Amplitudes: least squares on y_k = sum_r c_r z_r^k.
    let vander = Mat::from_fn(n, rank, |k, r| parts[r].2.powu(k as u32 + 1));
    let sv = singular_values(vander.as_ref())?;
    let cond = sv[0] / sv[rank - 1];
    if !(cond <= ILL_CONDITIONED) {
        warnings.push(format!("Vandermonde fit is ill-conditioned (condition number {cond:.3e})"));
    }
    let rhs = Mat::from_fn(n, 1, |k, _| x[k]);
    let amps = vander.qr().solve_lstsq(&rhs);
    let components = parts
        .iter()
        .enumerate()
        .map(|(r, &(freq, damping, _))| Component::new(freq, amps[(r, 0)], damping))
        .collect();
    Ok(Estimate {
        model: ExponentialModel::new(components)?,
        warnings,
    })
}

fn wrap_unit(f: f64) -> f64 {
    let w = f.rem_euclid(1.0);
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Both relative errors, over components paired by sorted frequency:
/// `(frequency error, amplitude-magnitude error)`.
pub fn estimation_errors(truth: &ExponentialModel, est: &ExponentialModel) -> Result<(f64, f64)> {
    if truth.len() != est.len() {
        return Err(HvafError::InvalidComparison(format!(
            "{} true components but {} estimated",
            truth.len(),
            est.len()
        )));
    }
    let t = truth.sorted_by_frequency();
    let e = est.sorted_by_frequency();
    let (mut df, mut f2, mut dc, mut c2) = (0.0, 0.0, 0.0, 0.0);
    for (a, b) in t.components.iter().zip(&e.components) {
        df += (b.freq - a.freq).powi(2);
        f2 += a.freq.powi(2);
        dc += (b.amplitude.norm() - a.amplitude.norm()).powi(2);
        c2 += a.amplitude.norm_sqr();
    }
    if f2 == 0.0 || c2 == 0.0 {
        return Err(HvafError::InvalidReference(
            "true frequencies and amplitudes must not all be zero".into(),
        ));
    }
    Ok((df.sqrt() / f2.sqrt(), dc.sqrt() / c2.sqrt()))
}

/// Frequencies and amplitude magnitudes both within `1e-3` relative error.
pub fn estimation_success(truth: &ExponentialModel, est: &ExponentialModel) -> Result<bool> {
    let (ef, ec) = estimation_errors(truth, est)?;
    Ok(ef <= ESTIMATION_THRESHOLD && ec <= ESTIMATION_THRESHOLD)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{random_model, synthesize};

    #[test]
    fn pure_tone() {
        let m = ExponentialModel::new(vec![Component::undamped(0.25, c64::new(1.0, 0.0))]).unwrap();
        let x = synthesize(&m, 63).unwrap();
        let est = estimate(&x, 1).unwrap();
        let c = est.model.components[0];
        assert!((c.freq - 0.25).abs() <= 1e-10);
        assert!(c.damping <= 1e-10);
        assert!((c.amplitude.norm() - 1.0).abs() <= 1e-10);
        assert!(est.warnings.is_empty());
    }

    #[test]
    fn two_random_nodes_round_trip() {
        for seed in 0..10 {
            let m = random_model(2, true, Some(0.05), seed).unwrap().sorted_by_frequency();
            let x = synthesize(&m, 31).unwrap();
            let est = estimate(&x, 2).unwrap().model;
            for (a, b) in m.components.iter().zip(&est.components) {
                assert!((a.freq - b.freq).abs() <= 1e-6 * a.freq.max(1e-3));
                assert!((a.damping - b.damping).abs() <= 1e-6 * a.damping);
                assert!((a.amplitude - b.amplitude).norm() <= 1e-6 * a.amplitude.norm());
            }
        }
    }

    #[test]
    fn rank_too_large() {
        let x = vec![c64::new(1.0, 0.0); 8];
        assert!(matches!(estimate(&x, 4), Err(HvafError::InvalidRank { .. })));
        assert!(matches!(estimate(&x, 0), Err(HvafError::InvalidRank { .. })));
    }

    #[test]
    fn global_phase_rotates_amplitudes_only() {
        let m = random_model(3, true, Some(0.1), 21).unwrap();
        let x = synthesize(&m, 45).unwrap();
        let phase = c64::from_polar(1.0, 0.7);
        let y: Vec<c64> = x.iter().map(|v| v * phase).collect();
        let a = estimate(&x, 3).unwrap().model;
        let b = estimate(&y, 3).unwrap().model;
        for (p, q) in a.components.iter().zip(&b.components) {
            assert!((p.freq - q.freq).abs() <= 1e-9);
            assert!((p.damping - q.damping).abs() <= 1e-9);
            assert!((p.amplitude * phase - q.amplitude).norm() <= 1e-9 * p.amplitude.norm());
        }
    }

    #[test]
    fn success_criterion() {
        let m = random_model(4, false, Some(0.05), 3).unwrap();
        assert!(estimation_success(&m, &m).unwrap());
        // Perturb the largest frequency so the 1% shift is also large
        // relative to the whole frequency vector.
        let big = m.components.iter().map(|c| c.freq).fold(0.0, f64::max);
        let mut off2 = m.clone();
        for c in off2.components.iter_mut() {
            if c.freq == big {
                c.freq *= 1.01;
            }
        }
        assert!(!estimation_success(&m, &off2).unwrap());
        let fewer = ExponentialModel::new(m.components[..3].to_vec()).unwrap();
        assert!(matches!(estimation_success(&m, &fewer), Err(HvafError::InvalidComparison(_))));
    }

    #[test]
    fn success_boundary_is_inclusive() {
        // |1001 - 1000| / 1000 evaluates to exactly 1e-3.
        let t = ExponentialModel::new(vec![Component::undamped(0.5, c64::new(1000.0, 0.0))]).unwrap();
        let e = ExponentialModel::new(vec![Component::undamped(0.5, c64::new(1001.0, 0.0))]).unwrap();
        assert_eq!(estimation_errors(&t, &e).unwrap(), (0.0, 1e-3));
        assert!(estimation_success(&t, &e).unwrap());
    }
}
