//! Monte-Carlo harnesses: phase transitions, rank robustness, parameter
//! estimation, identifiability of close tones, parameter sensitivity under
//! noise, and a column-wise matrix comparison against the baseline.
//!
//! Every trial draws its signal, mask and noise from seeds derived from the
//! global seed and the trial coordinates, so results do not depend on the
//! order or parallelism of execution. Trials run on a rayon pool whose size
//! can be set with the `HVAF_THREADS` environment variable.

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HvafError, Result};
use crate::esprit::{estimate, estimation_success};
use crate::hvaf::{solve, solve_columns, SolverConfig, SolverReport};
use crate::io::{model_to_records, records_to_model, ComponentRecord};
use crate::lrhm::solve_lrhm;
use crate::metrics::{recovery_success, rlne, rlne_matrix};
use crate::signal::{
    add_noise, normalize, random_mask, random_model, synthesize, Component, ExponentialModel, SamplingMask,
};
use crate::{c64, ComplexSignal};

/// Environment variable holding the worker count for experiment trials.
pub const THREADS_ENV: &str = "HVAF_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Hvaf,
    Lrhm,
}

impl SolverKind {
    pub fn run(self, obs: &crate::signal::ObservationSet, config: &SolverConfig) -> Result<SolverReport> {
        match self {
            SolverKind::Hvaf => solve(obs, config),
            SolverKind::Lrhm => Ok(solve_lrhm(obs, config)?.report),
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable hash of a global seed and trial coordinates.
pub fn derive_seed(global: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(global), |h, &p| splitmix(h ^ splitmix(p)))
}

/// Map `f` over `0..count` on the experiment pool, keeping index order.
pub fn run_trials<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let threads = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok());
    match threads {
        Some(t) if t >= 1 => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| (0..count).into_par_iter().map(&f).collect()),
            Err(e) => {
                log::warn!("cannot build a {t}-thread pool ({e}); using the global pool");
                (0..count).into_par_iter().map(&f).collect()
            }
        },
        _ => (0..count).into_par_iter().map(&f).collect(),
    }
}

fn require_seed(seed: Option<u64>) -> std::result::Result<u64, String> {
    seed.ok_or_else(|| "seed must be set".to_string())
}

fn finish_validation(problems: Vec<String>) -> Result<()> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(HvafError::Validation(problems))
    }
}

fn check_config(config: &SolverConfig, problems: &mut Vec<String>) {
    if let Err(HvafError::InvalidConfig(msg)) = config.validate() {
        problems.push(format!("config: {msg}"));
    }
}

/// Outcome of one recovery trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialOutcome {
    /// `None` when the solver failed.
    pub rlne: Option<f64>,
    pub success: bool,
}

fn recovery_trial(
    truth: &[c64],
    mask: &SamplingMask,
    solver: SolverKind,
    config: &SolverConfig,
) -> TrialOutcome {
    let outcome = mask.observe(truth).and_then(|obs| solver.run(&obs, config));
    match outcome {
        Ok(rep) => TrialOutcome {
            rlne: rlne(&rep.recovered, truth).ok(),
            success: recovery_success(&rep.recovered, truth),
        },
        Err(e) => {
            log::warn!("trial failed: {e}");
            TrialOutcome {
                rlne: None,
                success: false,
            }
        }
    }
}

/// Success count and mean error over a set of trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSummary {
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
    /// Mean RLNE over trials that produced an output.
    pub mean_rlne: Option<f64>,
    pub failures: usize,
}

impl RateSummary {
    pub fn from_outcomes(outcomes: &[TrialOutcome]) -> Self {
        let successes = outcomes.iter().filter(|o| o.success).count();
        let errs: Vec<f64> = outcomes.iter().filter_map(|o| o.rlne).collect();
        let trials = outcomes.len();
        Self {
            trials,
            successes,
            rate: if trials == 0 { 0.0 } else { successes as f64 / trials as f64 },
            mean_rlne: if errs.is_empty() { None } else { Some(errs.iter().sum::<f64>() / errs.len() as f64) },
            failures: trials - errs.len(),
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn to_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    // Writing to memory cannot fail.
    w.write_record(header).expect("in-memory CSV");
    for r in rows {
        w.write_record(r).expect("in-memory CSV");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV")).expect("CSV is UTF-8")
}

// ----------------------------------------------------------------------------
// Phase transition

fn default_n() -> usize {
    127
}

fn default_trials() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseGridSpec {
    #[serde(default = "default_n")]
    pub n: usize,
    pub r_values: Vec<usize>,
    pub m_values: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub damped: bool,
    /// Minimum wrap-around distance between frequencies.
    #[serde(default)]
    pub separation: Option<f64>,
    #[serde(default)]
    pub solver: SolverKind,
    /// Rank given to the solver; the true `R` of each cell when absent.
    #[serde(default)]
    pub estimated_rank: Option<usize>,
    #[serde(default)]
    pub config: SolverConfig,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl PhaseGridSpec {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.n == 0 {
            bad.push("n must be >= 1".into());
        }
        if self.r_values.is_empty() {
            bad.push("r_values must not be empty".into());
        }
        if self.m_values.is_empty() {
            bad.push("m_values must not be empty".into());
        }
        if self.r_values.contains(&0) {
            bad.push("r_values must all be >= 1".into());
        }
        if let Some(&m) = self.m_values.iter().find(|&&m| m == 0 || m > self.n) {
            bad.push(format!("m_values: {m} outside 1..={}", self.n));
        }
        if self.trials == 0 {
            bad.push("trials must be >= 1".into());
        }
        if let Some(d) = self.separation {
            if let Some(&r) = self.r_values.iter().find(|&&r| r as f64 * d >= 1.0 || d < 0.0) {
                bad.push(format!("separation: {r} frequencies cannot be {d} apart"));
            }
        }
        if self.estimated_rank == Some(0) {
            bad.push("estimated_rank must be >= 1".into());
        }
        check_config(&self.config, &mut bad);
        if let Err(e) = require_seed(self.seed) {
            bad.push(e);
        }
        finish_validation(bad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseCell {
    pub r: usize,
    pub m: usize,
    #[serde(flatten)]
    pub summary: RateSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseGrid {
    pub spec: PhaseGridSpec,
    /// Row-major over `(r_values, m_values)`.
    pub cells: Vec<PhaseCell>,
}

impl PhaseGrid {
    pub fn rate(&self, r: usize, m: usize) -> Option<f64> {
        self.cells.iter().find(|c| c.r == r && c.m == m).map(|c| c.summary.rate)
    }

    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .cells
            .iter()
            .map(|c| {
                vec![
                    c.r.to_string(),
                    c.m.to_string(),
                    c.summary.trials.to_string(),
                    c.summary.successes.to_string(),
                    c.summary.rate.to_string(),
                    fmt_opt(c.summary.mean_rlne),
                    c.summary.failures.to_string(),
                ]
            })
            .collect();
        to_csv(&["R", "M", "trials", "successes", "rate", "mean_rlne", "failures"], &rows)
    }
}

/// Test signal of the synthetic ensemble, scaled to unit peak magnitude.
fn ensemble_signal(n: usize, r: usize, damped: bool, separation: Option<f64>, seed: u64) -> Result<ComplexSignal> {
    let model = random_model(r, damped, separation, seed)?;
    normalize(&synthesize(&model, n)?)
}

pub fn phase_transition(spec: &PhaseGridSpec) -> Result<PhaseGrid> {
    spec.validate()?;
    let seed = spec.seed.unwrap_or_default();
    let coords: Vec<(usize, usize, usize)> = spec
        .r_values
        .iter()
        .flat_map(|&r| spec.m_values.iter().flat_map(move |&m| (0..spec.trials).map(move |t| (r, m, t))))
        .collect();
    let outcomes = run_trials(coords.len(), |i| {
        let (r, m, t) = coords[i];
        let key = [r as u64, m as u64, t as u64];
        let trial_seed = |tag: u64| derive_seed(seed, &[key[0], key[1], key[2], tag]);
        let signal = ensemble_signal(spec.n, r, spec.damped, spec.separation, trial_seed(0));
        let mask = random_mask(spec.n, m, trial_seed(1));
        let config = SolverConfig {
            rank: spec.estimated_rank.unwrap_or(r),
            seed: trial_seed(2),
            ..spec.config.clone()
        };
        match (signal, mask) {
            (Ok(y), Ok(mask)) => recovery_trial(&y, &mask, spec.solver, &config),
            (Err(e), _) | (_, Err(e)) => {
                log::warn!("trial (R={r}, M={m}, #{t}) could not be set up: {e}");
                TrialOutcome {
                    rlne: None,
                    success: false,
                }
            }
        }
    });
    let cells = outcomes
        .chunks(spec.trials)
        .zip(coords.chunks(spec.trials))
        .map(|(o, c)| PhaseCell {
            r: c[0].0,
            m: c[0].1,
            summary: RateSummary::from_outcomes(o),
        })
        .collect();
    Ok(PhaseGrid {
        spec: spec.clone(),
        cells,
    })
}

// ----------------------------------------------------------------------------
// Rank robustness

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankSweepSpec {
    #[serde(default = "default_n")]
    pub n: usize,
    pub r_true: usize,
    pub m: usize,
    pub rank_values: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub damped: bool,
    #[serde(default)]
    pub config: SolverConfig,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl RankSweepSpec {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.r_true == 0 {
            bad.push("r_true must be >= 1".into());
        }
        if self.m == 0 || self.m > self.n {
            bad.push(format!("m = {} outside 1..={}", self.m, self.n));
        }
        if self.rank_values.is_empty() || self.rank_values.contains(&0) {
            bad.push("rank_values must be non-empty and >= 1".into());
        }
        if self.trials == 0 {
            bad.push("trials must be >= 1".into());
        }
        check_config(&self.config, &mut bad);
        if let Err(e) = require_seed(self.seed) {
            bad.push(e);
        }
        finish_validation(bad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankCell {
    pub rank: usize,
    #[serde(flatten)]
    pub summary: RateSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankSweep {
    pub spec: RankSweepSpec,
    pub cells: Vec<RankCell>,
}

impl RankSweep {
    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .cells
            .iter()
            .map(|c| {
                vec![
                    c.rank.to_string(),
                    c.summary.trials.to_string(),
                    c.summary.successes.to_string(),
                    c.summary.rate.to_string(),
                    fmt_opt(c.summary.mean_rlne),
                ]
            })
            .collect();
        to_csv(&["rank", "trials", "successes", "rate", "mean_rlne"], &rows)
    }
}

/// Success rate per solver rank. Trial `t` uses the same signal and mask for
/// every rank, so the rates differ only through the rank.
pub fn rank_sweep(spec: &RankSweepSpec) -> Result<RankSweep> {
    spec.validate()?;
    let seed = spec.seed.unwrap_or_default();
    let (r, m) = (spec.r_true as u64, spec.m as u64);
    let coords: Vec<(usize, usize)> = spec
        .rank_values
        .iter()
        .flat_map(|&k| (0..spec.trials).map(move |t| (k, t)))
        .collect();
    let outcomes = run_trials(coords.len(), |i| {
        let (rank, t) = coords[i];
        let ts = |tag: u64| derive_seed(seed, &[r, m, t as u64, tag]);
        let config = SolverConfig {
            rank,
            seed: ts(2),
            ..spec.config.clone()
        };
        match (ensemble_signal(spec.n, spec.r_true, spec.damped, None, ts(0)), random_mask(spec.n, spec.m, ts(1))) {
            (Ok(y), Ok(mask)) => recovery_trial(&y, &mask, SolverKind::Hvaf, &config),
            (Err(e), _) | (_, Err(e)) => {
                log::warn!("trial setup failed: {e}");
                TrialOutcome {
                    rlne: None,
                    success: false,
                }
            }
        }
    });
    let cells = outcomes
        .chunks(spec.trials)
        .zip(&spec.rank_values)
        .map(|(o, &rank)| RankCell {
            rank,
            summary: RateSummary::from_outcomes(o),
        })
        .collect();
    Ok(RankSweep {
        spec: spec.clone(),
        cells,
    })
}

// ----------------------------------------------------------------------------
// Parameter estimation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationSpec {
    #[serde(default = "default_n")]
    pub n: usize,
    pub model: Vec<ComponentRecord>,
    pub m_values: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub config: SolverConfig,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl EstimationSpec {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if let Err(e) = records_to_model(&self.model) {
            bad.push(format!("model: {e}"));
        }
        if self.model.is_empty() {
            bad.push("model must have at least one component".into());
        }
        if self.m_values.is_empty() {
            bad.push("m_values must not be empty".into());
        }
        if let Some(&m) = self.m_values.iter().find(|&&m| m == 0 || m > self.n) {
            bad.push(format!("m_values: {m} outside 1..={}", self.n));
        }
        if self.trials == 0 {
            bad.push("trials must be >= 1".into());
        }
        check_config(&self.config, &mut bad);
        if let Err(e) = require_seed(self.seed) {
            bad.push(e);
        }
        finish_validation(bad)
    }
}

/// The five-peak test signal: three peaks `0.5/127` apart around `0.2` and
/// two peaks `1.5/127` apart from `0.25`. Only the frequencies are
/// prescribed; the magnitudes are borrowed from the published damped
/// five-peak example, with zero phases.
pub fn five_peak_model() -> ExponentialModel {
    let d = 1.0 / 127.0;
    let freqs = [0.2 - 0.5 * d, 0.2, 0.2 + 0.5 * d, 0.25, 0.25 + 1.5 * d];
    let mags = [0.5145, 0.6623, 0.7253, 0.7825, 0.9872];
    let components = freqs
        .iter()
        .zip(mags)
        .map(|(&f, a)| Component::undamped(f, c64::new(a, 0.0)))
        .collect();
    ExponentialModel { components }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationCell {
    pub m: usize,
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
    pub mean_rlne: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationBenchmark {
    pub spec: EstimationSpec,
    pub cells: Vec<EstimationCell>,
}

impl EstimationBenchmark {
    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .cells
            .iter()
            .map(|c| {
                vec![
                    c.m.to_string(),
                    c.trials.to_string(),
                    c.successes.to_string(),
                    c.rate.to_string(),
                    fmt_opt(c.mean_rlne),
                ]
            })
            .collect();
        to_csv(&["M", "trials", "successes", "rate", "mean_rlne"], &rows)
    }
}

/// Recover from random masks, then run ESPRIT with the true component count
/// and score the estimate.
pub fn estimation_benchmark(spec: &EstimationSpec) -> Result<EstimationBenchmark> {
    spec.validate()?;
    let seed = spec.seed.unwrap_or_default();
    let model = records_to_model(&spec.model)?;
    let truth = synthesize(&model, spec.n)?;
    let r = model.len();
    let coords: Vec<(usize, usize)> = spec
        .m_values
        .iter()
        .flat_map(|&m| (0..spec.trials).map(move |t| (m, t)))
        .collect();
    let outcomes: Vec<(bool, Option<f64>)> = run_trials(coords.len(), |i| {
        let (m, t) = coords[i];
        let ts = |tag: u64| derive_seed(seed, &[r as u64, m as u64, t as u64, tag]);
        let config = SolverConfig {
            rank: r,
            seed: ts(2),
            ..spec.config.clone()
        };
        let run = || -> Result<(bool, f64)> {
            let obs = random_mask(spec.n, m, ts(1))?.observe(&truth)?;
            let rep = solve(&obs, &config)?;
            let est = estimate(&rep.recovered, r)?;
            Ok((estimation_success(&model, &est.model)?, rlne(&rep.recovered, &truth)?))
        };
        match run() {
            Ok((ok, e)) => (ok, Some(e)),
            Err(e) => {
                log::warn!("estimation trial (M={m}, #{t}) failed: {e}");
                (false, None)
            }
        }
    });
    let cells = outcomes
        .chunks(spec.trials)
        .zip(&spec.m_values)
        .map(|(o, &m)| {
            let successes = o.iter().filter(|x| x.0).count();
            let errs: Vec<f64> = o.iter().filter_map(|x| x.1).collect();
            EstimationCell {
                m,
                trials: o.len(),
                successes,
                rate: successes as f64 / o.len() as f64,
                mean_rlne: (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64),
            }
        })
        .collect();
    Ok(EstimationBenchmark {
        spec: spec.clone(),
        cells,
    })
}

// ----------------------------------------------------------------------------
// Identifiability of two close tones

fn default_f1() -> f64 {
    0.3
}
fn default_c1() -> f64 {
    0.51
}
fn default_c2() -> f64 {
    0.66
}
fn default_one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifiabilitySpec {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_f1")]
    pub f1: f64,
    /// Magnitude of the tone at `f1` (zero phase).
    #[serde(default = "default_c1")]
    pub c1: f64,
    /// Magnitude of the tone at `f1 + separation` (zero phase).
    #[serde(default = "default_c2")]
    pub c2: f64,
    pub separations: Vec<f64>,
    pub m_values: Vec<usize>,
    #[serde(default = "default_one")]
    pub trials: usize,
    #[serde(default)]
    pub config: SolverConfig,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl IdentifiabilitySpec {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.separations.is_empty() || self.separations.iter().any(|d| !(*d > 0.0 && *d < 0.5)) {
            bad.push("separations must be non-empty and in (0, 0.5)".into());
        }
        if self.m_values.is_empty() || self.m_values.iter().any(|&m| m == 0 || m > self.n) {
            bad.push(format!("m_values must be non-empty and in 1..={}", self.n));
        }
        if !(0.0..1.0).contains(&self.f1) {
            bad.push("f1 must lie in [0, 1)".into());
        }
        if self.trials == 0 {
            bad.push("trials must be >= 1".into());
        }
        check_config(&self.config, &mut bad);
        if let Err(e) = require_seed(self.seed) {
            bad.push(e);
        }
        finish_validation(bad)
    }

    pub fn model(&self, separation: f64) -> Result<ExponentialModel> {
        ExponentialModel::new(vec![
            Component::undamped(self.f1, c64::new(self.c1, 0.0)),
            Component::undamped((self.f1 + separation).rem_euclid(1.0), c64::new(self.c2, 0.0)),
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentifiabilityRow {
    pub separation: f64,
    pub m: usize,
    pub trial: usize,
    pub rlne: Option<f64>,
    /// Two-component ESPRIT estimate of the recovered signal.
    pub estimate: Vec<ComponentRecord>,
}

impl IdentifiabilityRow {
    /// Estimated magnitudes, smallest first.
    pub fn magnitudes(&self) -> Vec<f64> {
        let mut m: Vec<f64> = self.estimate.iter().map(|c| c64::new(c.c_re, c.c_im).norm()).collect();
        m.sort_by(f64::total_cmp);
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentifiabilityReport {
    pub spec: IdentifiabilitySpec,
    pub rows: Vec<IdentifiabilityRow>,
}

impl IdentifiabilityReport {
    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut cols = vec![r.separation.to_string(), r.m.to_string(), r.trial.to_string(), fmt_opt(r.rlne)];
                for k in 0..2 {
                    let c = r.estimate.get(k);
                    cols.push(c.map(|c| c.f.to_string()).unwrap_or_default());
                    cols.push(c.map(|c| c64::new(c.c_re, c.c_im).norm().to_string()).unwrap_or_default());
                }
                cols
            })
            .collect();
        to_csv(&["separation", "M", "trial", "rlne", "f1_hat", "c1_abs_hat", "f2_hat", "c2_abs_hat"], &rows)
    }
}

pub fn identifiability_probe(spec: &IdentifiabilitySpec) -> Result<IdentifiabilityReport> {
    spec.validate()?;
    let seed = spec.seed.unwrap_or_default();
    let coords: Vec<(usize, usize, usize)> = (0..spec.separations.len())
        .flat_map(|s| spec.m_values.iter().flat_map(move |&m| (0..spec.trials).map(move |t| (s, m, t))))
        .collect();
    let rows = run_trials(coords.len(), |i| {
        let (s, m, t) = coords[i];
        let separation = spec.separations[s];
        // The mask depends on M and the trial only, so both separations see
        // the same sampling pattern.
        let ts = |tag: u64| derive_seed(seed, &[2, m as u64, t as u64, tag]);
        let config = SolverConfig {
            rank: 2,
            seed: ts(2),
            ..spec.config.clone()
        };
        let run = || -> Result<(f64, Vec<ComponentRecord>)> {
            let truth = synthesize(&spec.model(separation)?, spec.n)?;
            let obs = random_mask(spec.n, m, ts(1))?.observe(&truth)?;
            let rep = solve(&obs, &config)?;
            let est = estimate(&rep.recovered, 2)?;
            Ok((rlne(&rep.recovered, &truth)?, model_to_records(&est.model)))
        };
        match run() {
            Ok((e, est)) => IdentifiabilityRow {
                separation,
                m,
                trial: t,
                rlne: Some(e),
                estimate: est,
            },
            Err(e) => {
                log::warn!("identifiability case (separation {separation}, M={m}) failed: {e}");
                IdentifiabilityRow {
                    separation,
                    m,
                    trial: t,
                    rlne: None,
                    estimate: Vec::new(),
                }
            }
        }
    });
    Ok(IdentifiabilityReport {
        spec: spec.clone(),
        rows,
    })
}

// ----------------------------------------------------------------------------
// Sensitivity under noise

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    Lambda,
    Beta0,
    Mu0,
}

fn default_five() -> usize {
    5
}
fn default_m64() -> usize {
    64
}
fn default_ten() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivitySpec {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_five")]
    pub r: usize,
    #[serde(default = "default_m64")]
    pub m: usize,
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    /// Noise levels as SNR in dB; `null` means noiseless.
    pub snr_db: Vec<Option<f64>>,
    #[serde(default = "default_ten")]
    pub trials: usize,
    #[serde(default)]
    pub damped: bool,
    /// Base configuration; the swept parameter overrides it. Sweeping
    /// `lambda` switches the solver to noisy mode.
    #[serde(default)]
    pub config: SolverConfig,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl SensitivitySpec {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.r == 0 {
            bad.push("r must be >= 1".into());
        }
        if self.m == 0 || self.m > self.n {
            bad.push(format!("m = {} outside 1..={}", self.m, self.n));
        }
        if self.values.is_empty() || self.values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            bad.push("values must be non-empty and positive".into());
        }
        if self.snr_db.is_empty() {
            bad.push("snr_db must not be empty".into());
        }
        if self.trials == 0 {
            bad.push("trials must be >= 1".into());
        }
        for &v in &self.values {
            if let Err(HvafError::InvalidConfig(msg)) = self.config_for(v).validate() {
                bad.push(format!("value {v}: {msg}"));
            }
        }
        if let Err(e) = require_seed(self.seed) {
            bad.push(e);
        }
        finish_validation(bad)
    }

    pub fn config_for(&self, value: f64) -> SolverConfig {
        let mut c = SolverConfig {
            rank: self.r,
            ..self.config.clone()
        };
        match self.parameter {
            SweepParameter::Lambda => c.mode = crate::hvaf::FitMode::Noisy { lambda: value },
            SweepParameter::Beta0 => {
                c.beta0 = value;
                c.beta_max = c.beta_max.max(value);
            }
            SweepParameter::Mu0 => c.mu0 = value,
        }
        c
    }
}

/// `sigma = 10^(-snr / 20)`.
pub fn sigma_for_snr(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 20.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityCell {
    pub value: f64,
    pub snr_db: Option<f64>,
    #[serde(flatten)]
    pub summary: RateSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityTable {
    pub spec: SensitivitySpec,
    pub cells: Vec<SensitivityCell>,
}

impl SensitivityTable {
    pub fn mean_rlne(&self, value: f64, snr_db: Option<f64>) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.value == value && c.snr_db == snr_db)
            .and_then(|c| c.summary.mean_rlne)
    }

    pub fn to_csv(&self) -> String {
        let name = match self.spec.parameter {
            SweepParameter::Lambda => "lambda",
            SweepParameter::Beta0 => "beta0",
            SweepParameter::Mu0 => "mu0",
        };
        let rows: Vec<Vec<String>> = self
            .cells
            .iter()
            .map(|c| {
                vec![
                    c.value.to_string(),
                    fmt_opt(c.snr_db),
                    c.summary.trials.to_string(),
                    fmt_opt(c.summary.mean_rlne),
                    c.summary.failures.to_string(),
                ]
            })
            .collect();
        to_csv(&[name, "snr_db", "trials", "mean_rlne", "failures"], &rows)
    }
}

/// Mean RLNE per (parameter value, noise level). The signal, mask and noise
/// of trial `t` at a given noise level are shared by all parameter values.
pub fn sensitivity_sweep(spec: &SensitivitySpec) -> Result<SensitivityTable> {
    spec.validate()?;
    let seed = spec.seed.unwrap_or_default();
    let coords: Vec<(usize, usize, usize)> = (0..spec.values.len())
        .flat_map(|v| (0..spec.snr_db.len()).flat_map(move |s| (0..spec.trials).map(move |t| (v, s, t))))
        .collect();
    let outcomes = run_trials(coords.len(), |i| {
        let (v, s, t) = coords[i];
        let ts = |tag: u64| derive_seed(seed, &[spec.r as u64, spec.m as u64, s as u64, t as u64, tag]);
        let config = SolverConfig {
            seed: ts(3),
            ..spec.config_for(spec.values[v])
        };
        let run = || -> Result<TrialOutcome> {
            let truth = ensemble_signal(spec.n, spec.r, spec.damped, None, ts(0))?;
            let clean = random_mask(spec.n, spec.m, ts(1))?.observe(&truth)?;
            let obs = match spec.snr_db[s] {
                Some(db) => add_noise(&clean, sigma_for_snr(db), ts(2))?,
                None => clean,
            };
            let rep = solve(&obs, &config)?;
            let e = rlne(&rep.recovered, &truth)?;
            Ok(TrialOutcome {
                rlne: Some(e),
                success: recovery_success(&rep.recovered, &truth),
            })
        };
        run().unwrap_or_else(|e| {
            log::warn!("sensitivity trial failed: {e}");
            TrialOutcome {
                rlne: None,
                success: false,
            }
        })
    });
    let mut cells = Vec::new();
    for (k, chunk) in outcomes.chunks(spec.trials).enumerate() {
        let (v, s, _) = coords[k * spec.trials];
        cells.push(SensitivityCell {
            value: spec.values[v],
            snr_db: spec.snr_db[s],
            summary: RateSummary::from_outcomes(chunk),
        });
    }
    Ok(SensitivityTable {
        spec: spec.clone(),
        cells,
    })
}

// ----------------------------------------------------------------------------
// Column-wise matrix comparison against the baseline

fn default_rows() -> usize {
    63
}
fn default_cols() -> usize {
    8
}
fn default_components() -> usize {
    4
}
fn default_fraction() -> f64 {
    0.4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnBenchmarkSpec {
    #[serde(default = "default_rows")]
    pub rows: usize,
    #[serde(default = "default_cols")]
    pub cols: usize,
    /// Damped exponentials per column.
    #[serde(default = "default_components")]
    pub components: usize,
    /// Fraction of each column that is observed.
    #[serde(default = "default_fraction")]
    pub sampling: f64,
    #[serde(default = "default_ten")]
    pub trials: usize,
    /// Optional noise on the observed entries.
    #[serde(default)]
    pub snr_db: Option<f64>,
    /// Shared by both solvers; `rank` is set to `components` for HVaF.
    #[serde(default = "noisy_default")]
    pub config: SolverConfig,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn noisy_default() -> SolverConfig {
    SolverConfig::default().noisy(crate::hvaf::DEFAULT_LAMBDA)
}

impl ColumnBenchmarkSpec {
    pub fn samples_per_column(&self) -> usize {
        ((self.sampling * self.rows as f64).round() as usize).clamp(1, self.rows.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.rows < 3 || self.cols == 0 {
            bad.push("matrix must have at least 3 rows and 1 column".into());
        }
        if !(self.sampling > 0.0 && self.sampling <= 1.0) {
            bad.push("sampling must lie in (0, 1]".into());
        }
        if self.components == 0 {
            bad.push("components must be >= 1".into());
        }
        if self.trials == 0 {
            bad.push("trials must be >= 1".into());
        }
        check_config(&self.config, &mut bad);
        if let Err(e) = require_seed(self.seed) {
            bad.push(e);
        }
        finish_validation(bad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnTrial {
    pub trial: usize,
    pub hvaf_rlne: Option<f64>,
    pub lrhm_rlne: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnBenchmark {
    pub spec: ColumnBenchmarkSpec,
    pub trials: Vec<ColumnTrial>,
}

impl ColumnBenchmark {
    /// Trials where HVaF's matrix RLNE is at most the baseline's.
    pub fn hvaf_wins(&self) -> usize {
        self.trials
            .iter()
            .filter(|t| matches!((t.hvaf_rlne, t.lrhm_rlne), (Some(a), Some(b)) if a <= b))
            .count()
    }

    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .trials
            .iter()
            .map(|t| vec![t.trial.to_string(), fmt_opt(t.hvaf_rlne), fmt_opt(t.lrhm_rlne)])
            .collect();
        to_csv(&["trial", "hvaf_rlne", "lrhm_rlne"], &rows)
    }
}

/// Random `rows x cols` matrix whose columns are independent damped
/// ensemble signals, scaled to unit peak magnitude overall.
pub fn damped_matrix(rows: usize, cols: usize, components: usize, seed: u64) -> Result<Mat<c64>> {
    let mut columns = Vec::with_capacity(cols);
    for j in 0..cols {
        let model = random_model(components, true, None, derive_seed(seed, &[j as u64]))?;
        columns.push(synthesize(&model, rows)?);
    }
    let peak = columns.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max);
    Ok(Mat::from_fn(rows, cols, |i, j| columns[j][i] / peak))
}

/// HVaF and the baseline on the same matrices, masks and noise.
pub fn column_benchmark(spec: &ColumnBenchmarkSpec) -> Result<ColumnBenchmark> {
    spec.validate()?;
    let seed = spec.seed.unwrap_or_default();
    let m = spec.samples_per_column();
    let trials = run_trials(spec.trials, |t| {
        let ts = |tag: u64| derive_seed(seed, &[spec.rows as u64, spec.cols as u64, t as u64, tag]);
        let run = || -> Result<ColumnTrial> {
            let truth = damped_matrix(spec.rows, spec.cols, spec.components, ts(0))?;
            let masks: Vec<SamplingMask> = (0..spec.cols)
                .map(|j| random_mask(spec.rows, m, derive_seed(ts(1), &[j as u64])))
                .collect::<Result<_>>()?;
            // Observed values, optionally noisy, written back into the matrix
            // the column solvers read from.
            let mut input = truth.clone();
            for (j, mask) in masks.iter().enumerate() {
                let col: Vec<c64> = truth.col(j).iter().copied().collect();
                let mut obs = mask.observe(&col)?;
                if let Some(db) = spec.snr_db {
                    obs = add_noise(&obs, sigma_for_snr(db), derive_seed(ts(2), &[j as u64]))?;
                }
                for (&i, &v) in obs.indices().iter().zip(obs.values()) {
                    input[(i - 1, j)] = v;
                }
            }
            let config = SolverConfig {
                rank: spec.components,
                ..spec.config.clone()
            };
            let hv = solve_columns(input.as_ref(), &masks, &config)?;
            let hvaf_rlne = (hv.failures().count() == 0)
                .then(|| rlne_matrix(hv.matrix.as_ref(), truth.as_ref()))
                .transpose()?;
            let mut base = Mat::<c64>::zeros(spec.rows, spec.cols);
            let mut base_ok = true;
            for (j, mask) in masks.iter().enumerate() {
                let col: Vec<c64> = input.col(j).iter().copied().collect();
                match solve_lrhm(&mask.observe(&col)?, &config) {
                    Ok(rep) => {
                        for (i, v) in rep.report.recovered.into_iter().enumerate() {
                            base[(i, j)] = v;
                        }
                    }
                    Err(e) => {
                        log::warn!("baseline column {} failed: {e}", j + 1);
                        base_ok = false;
                    }
                }
            }
            let lrhm_rlne = base_ok.then(|| rlne_matrix(base.as_ref(), truth.as_ref())).transpose()?;
            Ok(ColumnTrial {
                trial: t,
                hvaf_rlne,
                lrhm_rlne,
            })
        };
        run().unwrap_or_else(|e| {
            log::warn!("column benchmark trial {t} failed: {e}");
            ColumnTrial {
                trial: t,
                hvaf_rlne: None,
                lrhm_rlne: None,
            }
        })
    });
    Ok(ColumnBenchmark {
        spec: spec.clone(),
        trials,
    })
}

// ----------------------------------------------------------------------------
// Dispatch from a JSON spec

/// Any experiment, as read from a JSON spec file with a `kind` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentSpec {
    PhaseTransition(PhaseGridSpec),
    RankSweep(RankSweepSpec),
    Estimation(EstimationSpec),
    Identifiability(IdentifiabilitySpec),
    Sensitivity(SensitivitySpec),
    ColumnBenchmark(ColumnBenchmarkSpec),
}

impl ExperimentSpec {
    pub fn seed(&self) -> Option<u64> {
        match self {
            Self::PhaseTransition(s) => s.seed,
            Self::RankSweep(s) => s.seed,
            Self::Estimation(s) => s.seed,
            Self::Identifiability(s) => s.seed,
            Self::Sensitivity(s) => s.seed,
            Self::ColumnBenchmark(s) => s.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        let slot = match self {
            Self::PhaseTransition(s) => &mut s.seed,
            Self::RankSweep(s) => &mut s.seed,
            Self::Estimation(s) => &mut s.seed,
            Self::Identifiability(s) => &mut s.seed,
            Self::Sensitivity(s) => &mut s.seed,
            Self::ColumnBenchmark(s) => &mut s.seed,
        };
        *slot = Some(seed);
    }
}

/// CSV table plus a JSON manifest holding the spec (with its seed) and the
/// per-cell summaries.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub csv: String,
    pub manifest: serde_json::Value,
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    fn pack<T: Serialize>(spec: &ExperimentSpec, csv: String, result: &T) -> Result<ExperimentOutput> {
        Ok(ExperimentOutput {
            csv,
            manifest: serde_json::json!({ "spec": spec, "result": result }),
        })
    }
    match spec {
        ExperimentSpec::PhaseTransition(s) => {
            let r = phase_transition(s)?;
            pack(spec, r.to_csv(), &r.cells)
        }
        ExperimentSpec::RankSweep(s) => {
            let r = rank_sweep(s)?;
            pack(spec, r.to_csv(), &r.cells)
        }
        ExperimentSpec::Estimation(s) => {
            let r = estimation_benchmark(s)?;
            pack(spec, r.to_csv(), &r.cells)
        }
        ExperimentSpec::Identifiability(s) => {
            let r = identifiability_probe(s)?;
            pack(spec, r.to_csv(), &r.rows)
        }
        ExperimentSpec::Sensitivity(s) => {
            let r = sensitivity_sweep(s)?;
            pack(spec, r.to_csv(), &r.cells)
        }
        ExperimentSpec::ColumnBenchmark(s) => {
            let r = column_benchmark(s)?;
            pack(spec, r.to_csv(), &r.trials)
        }
    }
}
