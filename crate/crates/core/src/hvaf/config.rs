use serde::{Deserialize, Serialize};

use crate::error::{HvafError, Result};

/// How the observed samples enter the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FitMode {
    /// Observed entries are pinned: `P_Omega(x) = P_Omega(y)`.
    Exact,
    /// Observed entries are fitted with weight `lambda / 2`.
    Noisy { lambda: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// Rank-`R` truncated SVD of the zero-filled Hankel matrix, split evenly
    /// between the two factors.
    SvdWarmStart,
    /// I.i.d. complex Gaussian factors scaled to the data norm.
    SeededRandom,
}

/// How often multiplier spectral norms are recorded in the report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultiplierTrace {
    Off,
    /// Once at the end of every continuation stage.
    StageEnd,
    /// After every iteration; costs one extra SVD per multiplier.
    EveryIteration,
}

/// Tunables of the HVaF solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Number of exponentials assumed (columns of the factors).
    pub rank: usize,
    /// Initial weight of the factorization penalty.
    pub beta0: f64,
    /// Continuation stops once the doubled weight exceeds this.
    pub beta_max: f64,
    /// Initial ADMM penalty.
    pub mu0: f64,
    /// Per-iteration growth of the ADMM penalty, in `(1, 1.1]`.
    pub rho: f64,
    pub mode: FitMode,
    /// Relative change of `x` ending a continuation stage.
    pub tol: f64,
    /// Iteration cap per continuation stage.
    pub max_inner_iters: usize,
    pub init: InitStrategy,
    /// Restart the ADMM penalty at `mu0` when `beta` doubles.
    pub reset_mu_per_stage: bool,
    pub multiplier_trace: MultiplierTrace,
    pub seed: u64,
}

pub const DEFAULT_LAMBDA: f64 = 500.0;

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rank: 1,
            beta0: 32.0,
            beta_max: (1u64 << 30) as f64,
            mu0: 1e-2,
            rho: 1.05,
            mode: FitMode::Exact,
            tol: 1e-7,
            max_inner_iters: 500,
            init: InitStrategy::SvdWarmStart,
            reset_mu_per_stage: true,
            multiplier_trace: MultiplierTrace::StageEnd,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn with_rank(rank: usize) -> Self {
        Self {
            rank,
            ..Self::default()
        }
    }

    pub fn noisy(mut self, lambda: f64) -> Self {
        self.mode = FitMode::Noisy { lambda };
        self
    }

    /// Collects every violated constraint.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.rank == 0 {
            bad.push("rank must be >= 1".to_string());
        }
        if !(self.beta0 > 0.0 && self.beta0.is_finite()) {
            bad.push(format!("beta0 = {} must be positive", self.beta0));
        }
        if !(self.beta_max >= self.beta0 && self.beta_max.is_finite()) {
            bad.push(format!("beta_max = {} must be >= beta0", self.beta_max));
        }
        if !(self.mu0 > 0.0 && self.mu0.is_finite()) {
            bad.push(format!("mu0 = {} must be positive", self.mu0));
        }
        if !(self.rho > 1.0 && self.rho <= 1.1) {
            bad.push(format!("rho = {} must lie in (1, 1.1]", self.rho));
        }
        if let FitMode::Noisy { lambda } = self.mode {
            if !(lambda > 0.0 && lambda.is_finite()) {
                bad.push(format!("lambda = {lambda} must be positive"));
            }
        }
        if !(self.tol > 0.0) {
            bad.push(format!("tol = {} must be positive", self.tol));
        }
        if self.max_inner_iters == 0 {
            bad.push("max_inner_iters must be >= 1".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(HvafError::InvalidConfig(bad.join("; ")))
        }
    }

    /// `beta0, 2 beta0, ...` up to and including `beta_max`.
    pub fn beta_schedule(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut beta = self.beta0;
        while beta <= self.beta_max {
            out.push(beta);
            beta *= 2.0;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_algorithm_constants() {
        let c = SolverConfig::default();
        assert_eq!(c.beta0, 32.0);
        assert_eq!(c.beta_max, 1073741824.0);
        assert_eq!(c.mu0, 0.01);
        assert_eq!(c.rho, 1.05);
        assert_eq!(c.tol, 1e-7);
        assert_eq!(c.beta_schedule().len(), 26);
        c.validate().unwrap();
    }

    #[test]
    fn validation_lists_every_problem() {
        let c = SolverConfig {
            rank: 0,
            rho: 1.2,
            mode: FitMode::Noisy { lambda: 0.0 },
            ..SolverConfig::default()
        };
        match c.validate() {
            Err(HvafError::InvalidConfig(msg)) => {
                assert!(msg.contains("rank"));
                assert!(msg.contains("rho"));
                assert!(msg.contains("lambda"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let ok = SolverConfig { rho: 1.01, ..SolverConfig::with_rank(3) };
        ok.validate().unwrap();
    }

    #[test]
    fn json_round_trip() {
        let c = SolverConfig::with_rank(4).noisy(200.0);
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<SolverConfig>(&s).unwrap(), c);
        let partial: SolverConfig = serde_json::from_str(r#"{"rank": 7, "rho": 1.01}"#).unwrap();
        assert_eq!(partial.rank, 7);
        assert_eq!(partial.beta0, 32.0);
    }
}
