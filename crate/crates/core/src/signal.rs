//! Exponential signal models, random test ensembles, sampling masks and the
//! additive noise model.
//!
//! Samples are indexed from 1: a model evaluated at length `n` produces
//! `y_k = sum_r c_r exp((2 pi i f_r - tau_r) k)` for `k = 1..=n`.

use std::f64::consts::PI;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{HvafError, Result};
use crate::hankel::norm;
use crate::{c64, ComplexSignal};

/// Maximum number of frequency redraws when a minimum separation is imposed.
pub const MAX_SEPARATION_RESAMPLES: usize = 10_000;

/// One damped complex exponential `c exp((2 pi i f - tau) k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    /// Normalized frequency in `[0, 1)`.
    pub freq: f64,
    pub amplitude: c64,
    /// Damping factor, `>= 0`.
    pub damping: f64,
}

impl Component {
    pub fn new(freq: f64, amplitude: c64, damping: f64) -> Self {
        Self {
            freq,
            amplitude,
            damping,
        }
    }

    pub fn undamped(freq: f64, amplitude: c64) -> Self {
        Self::new(freq, amplitude, 0.0)
    }

    /// The node `z = exp(2 pi i f - tau)`.
    pub fn node(&self) -> c64 {
        c64::from_polar((-self.damping).exp(), 2.0 * PI * self.freq)
    }
}

/// A finite sum of damped complex exponentials.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExponentialModel {
    pub components: Vec<Component>,
}

impl ExponentialModel {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let model = Self { components };
        model.validate()?;
        Ok(model)
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(HvafError::InvalidModel("model has no components".into()));
        }
        for (k, c) in self.components.iter().enumerate() {
            if !c.freq.is_finite() || !c.damping.is_finite() || !c.amplitude.is_finite() {
                return Err(HvafError::InvalidModel(format!("component {} is not finite", k + 1)));
            }
            if c.damping < 0.0 {
                return Err(HvafError::InvalidModel(format!(
                    "component {} has negative damping {}",
                    k + 1,
                    c.damping
                )));
            }
        }
        let mut freqs: Vec<f64> = self.components.iter().map(|c| c.freq).collect();
        freqs.sort_by(f64::total_cmp);
        if freqs.windows(2).any(|w| w[0] == w[1]) {
            return Err(HvafError::InvalidModel("frequencies must be distinct".into()));
        }
        Ok(())
    }

    /// Components ordered by increasing frequency.
    pub fn sorted_by_frequency(&self) -> Self {
        let mut components = self.components.clone();
        components.sort_by(|a, b| a.freq.total_cmp(&b.freq));
        Self { components }
    }

    /// Multiply every amplitude by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            components: self
                .components
                .iter()
                .map(|c| Component { amplitude: c.amplitude * s, ..*c })
                .collect(),
        }
    }
}

/// Evaluate the model at `k = 1..=n`.
pub fn synthesize(model: &ExponentialModel, n: usize) -> Result<ComplexSignal> {
    model.validate()?;
    if n == 0 {
        return Err(HvafError::InvalidDimension("signal length must be positive".into()));
    }
    let mut y = vec![c64::new(0.0, 0.0); n];
    for comp in &model.components {
        let z = comp.node();
        let mut term = comp.amplitude * z;
        for v in y.iter_mut() {
            *v += term;
            term *= z;
        }
    }
    Ok(y)
}

/// Vandermonde factorization of the square Hankel matrix of a model.
///
/// `nodes[(k, r)] = z_r^k` (0-based `k`) and `amplitudes[r] = c_r`. Because
/// samples start at index 1, the `rows x rows` Hankel matrix of
/// `synthesize(model, 2 rows - 1)` equals `E diag(c_r z_r) E^T`; see
/// [`VandermondeFactor::shifted_weights`].
#[derive(Debug, Clone)]
pub struct VandermondeFactor {
    pub nodes: Mat<c64>,
    pub amplitudes: Vec<c64>,
    zs: Vec<c64>,
}

impl VandermondeFactor {
    /// The diagonal `c_r z_r` absorbing the one-sample shift.
    pub fn shifted_weights(&self) -> Vec<c64> {
        self.amplitudes.iter().zip(&self.zs).map(|(c, z)| c * z).collect()
    }

    /// `E diag(c_r z_r) E^T`.
    pub fn reconstruct(&self) -> Mat<c64> {
        let d = self.shifted_weights();
        let scaled = Mat::from_fn(self.nodes.nrows(), self.nodes.ncols(), |i, r| self.nodes[(i, r)] * d[r]);
        &scaled * self.nodes.transpose()
    }
}

pub fn vandermonde_factor(model: &ExponentialModel, rows: usize) -> Result<VandermondeFactor> {
    model.validate()?;
    if rows == 0 {
        return Err(HvafError::InvalidDimension("Vandermonde factor needs at least one row".into()));
    }
    let zs: Vec<c64> = model.components.iter().map(Component::node).collect();
    let nodes = Mat::from_fn(rows, zs.len(), |k, r| zs[r].powi(k as i32));
    Ok(VandermondeFactor {
        nodes,
        amplitudes: model.components.iter().map(|c| c.amplitude).collect(),
        zs,
    })
}

/// Minimum wrap-around distance between any two frequencies.
pub fn min_wrap_distance(freqs: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in freqs.iter().enumerate() {
        for b in &freqs[i + 1..] {
            let d = (a - b).abs().rem_euclid(1.0);
            best = best.min(d.min(1.0 - d));
        }
    }
    best
}

/// Draw a model from the synthetic test ensemble.
///
/// Frequencies are uniform on `[0, 1)`. Amplitudes are
/// `(1 + 10^(0.5 m)) exp(2 pi i theta)` with `m, theta ~ U[0, 1]`; damped
/// models use `tau = 1 / (10 + 30 u)` with `u ~ U[0, 1]`. When `separation`
/// is given, frequencies are redrawn until their minimum wrap-around
/// distance reaches it.
pub fn random_model(
    count: usize,
    damped: bool,
    separation: Option<f64>,
    seed: u64,
) -> Result<ExponentialModel> {
    if count == 0 {
        return Err(HvafError::InvalidModel("at least one component is required".into()));
    }
    if let Some(delta) = separation {
        if !(delta >= 0.0) || count as f64 * delta >= 1.0 {
            return Err(HvafError::InfeasibleSeparation(format!(
                "{count} frequencies cannot be {delta} apart on the unit circle"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut freqs: Vec<f64> = (0..count).map(|_| rng.random::<f64>()).collect();
    if let Some(delta) = separation {
        let mut tries = 0;
        while count > 1 && min_wrap_distance(&freqs) < delta {
            tries += 1;
            if tries > MAX_SEPARATION_RESAMPLES {
                return Err(HvafError::InfeasibleSeparation(format!(
                    "no draw of {count} frequencies with separation {delta} after {MAX_SEPARATION_RESAMPLES} attempts"
                )));
            }
            freqs.iter_mut().for_each(|f| *f = rng.random::<f64>());
        }
    }
    let components = freqs
        .into_iter()
        .map(|freq| {
            let m: f64 = rng.random();
            let theta: f64 = rng.random();
            let amplitude = c64::from_polar(1.0 + 10f64.powf(0.5 * m), 2.0 * PI * theta);
            let damping = if damped {
                1.0 / (10.0 + 30.0 * rng.random::<f64>())
            } else {
                0.0
            };
            Component::new(freq, amplitude, damping)
        })
        .collect();
    ExponentialModel::new(components)
}

/// A sorted set of observed 1-based sample positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingMask {
    n: usize,
    indices: Vec<usize>,
}

impl SamplingMask {
    /// Build a mask from arbitrary-order 1-based indices.
    pub fn new(n: usize, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        if let Some(&bad) = indices.iter().find(|&&i| i == 0 || i > n) {
            return Err(HvafError::IndexOutOfRange { index: bad, len: n });
        }
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(HvafError::InvalidSignal("mask contains duplicate indices".into()));
        }
        Ok(Self { n, indices })
    }

    pub fn full(n: usize) -> Self {
        Self {
            n,
            indices: (1..=n).collect(),
        }
    }

    pub fn signal_len(&self) -> usize {
        self.n
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn count(&self) -> usize {
        self.indices.len()
    }

    /// Boolean membership vector, 0-based.
    pub fn membership(&self) -> Vec<bool> {
        let mut m = vec![false; self.n];
        for &i in &self.indices {
            m[i - 1] = true;
        }
        m
    }

    /// Sample `signal` on this mask.
    pub fn observe(&self, signal: &[c64]) -> Result<ObservationSet> {
        if signal.len() != self.n {
            return Err(HvafError::InvalidDimension(format!(
                "mask is for length {}, signal has length {}",
                self.n,
                signal.len()
            )));
        }
        Ok(ObservationSet {
            n: self.n,
            values: self.indices.iter().map(|&i| signal[i - 1]).collect(),
            indices: self.indices.clone(),
        })
    }
}

/// Observed samples of a length-`n` signal.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    n: usize,
    indices: Vec<usize>,
    values: Vec<c64>,
}

impl ObservationSet {
    pub fn new(n: usize, indices: Vec<usize>, values: Vec<c64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(HvafError::InvalidDimension(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HvafError::InvalidSignal(
                "observation indices must be strictly increasing".into(),
            ));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i == 0 || i > n) {
            return Err(HvafError::IndexOutOfRange { index: bad, len: n });
        }
        Ok(Self { n, indices, values })
    }

    pub fn signal_len(&self) -> usize {
        self.n
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[c64] {
        &self.values
    }

    pub fn count(&self) -> usize {
        self.indices.len()
    }

    pub fn mask(&self) -> SamplingMask {
        SamplingMask {
            n: self.n,
            indices: self.indices.clone(),
        }
    }

    /// `P_Omega(y)` as a length-`n` vector with zeros off the mask.
    pub fn zero_filled(&self) -> ComplexSignal {
        let mut x = vec![c64::new(0.0, 0.0); self.n];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            x[i - 1] = v;
        }
        x
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }
}

/// Uniformly random `count`-subset of `1..=n`, sorted.
pub fn random_mask(n: usize, count: usize, seed: u64) -> Result<SamplingMask> {
    if count == 0 || count > n {
        return Err(HvafError::InvalidCount { count, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices: Vec<usize> = rand::seq::index::sample(&mut rng, n, count)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    SamplingMask::new(n, indices)
}

/// The noise vector `e = sigma ||P_Omega(y)|| w / ||w||` with `w` standard
/// complex Gaussian on the observed entries.
pub fn noise_vector(obs: &ObservationSet, sigma: f64, seed: u64) -> Vec<c64> {
    if sigma == 0.0 || obs.count() == 0 {
        return vec![c64::new(0.0, 0.0); obs.count()];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<c64> = (0..obs.count())
        .map(|_| c64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let scale = sigma * obs.norm() / norm(&w);
    w.into_iter().map(|v| v * scale).collect()
}

/// Add noise at level `sigma` (relative to the norm of the observed samples).
pub fn add_noise(obs: &ObservationSet, sigma: f64, seed: u64) -> Result<ObservationSet> {
    if !(sigma >= 0.0) {
        return Err(HvafError::InvalidConfig(format!("noise level {sigma} must be >= 0")));
    }
    let e = noise_vector(obs, sigma, seed);
    Ok(ObservationSet {
        n: obs.n,
        indices: obs.indices.clone(),
        values: obs.values.iter().zip(&e).map(|(v, e)| v + e).collect(),
    })
}

/// Divide by the largest sample magnitude.
pub fn normalize(x: &[c64]) -> Result<ComplexSignal> {
    let peak = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if peak == 0.0 || !peak.is_finite() {
        return Err(HvafError::InvalidSignal("cannot normalize an all-zero signal".into()));
    }
    Ok(x.iter().map(|v| v / peak).collect())
}
