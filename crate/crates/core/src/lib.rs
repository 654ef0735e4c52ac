//! Recovery of sums of (possibly damped) complex exponentials from a random
//! subset of their samples.
//!
//! The main entry point is [`hvaf::solve`], which completes the Hankel matrix
//! of the signal while pushing each column of its two factors towards an
//! exponential (Vandermonde) profile. The crate also ships the pieces needed
//! to evaluate it:
//!
//! - [`hankel`]: Hankel lifting, its adjoint, anti-diagonal weights.
//! - [`signal`]: exponential models, random ensembles, masks and noise.
//! - [`svt`]: singular value soft-thresholding.
//! - [`lrhm`]: nuclear-norm Hankel completion baseline.
//! - [`esprit`]: frequency/damping/amplitude estimation.
//! - [`metrics`]: RLNE, success criteria, SNR.
//! - [`experiments`]: Monte-Carlo harnesses (phase transitions, sweeps).
//! - [`io`]: CSV/JSON file formats shared with the command-line tool.

mod dense;
pub mod error;
pub mod esprit;
pub mod experiments;
pub mod hankel;
pub mod hvaf;
pub mod io;
pub mod lrhm;
pub mod metrics;
pub mod signal;
pub mod svt;

pub use error::{HvafError, Result};
pub use faer::c64;
pub use faer::Mat;

/// A sampled complex signal, `x[0]` holding the sample at time index 1.
pub type ComplexSignal = Vec<c64>;

/// Real scaling factor for `Mat<c64>` arithmetic.
pub(crate) fn scale(s: f64) -> faer::Scale<c64> {
    faer::Scale(c64::new(s, 0.0))
}
