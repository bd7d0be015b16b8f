//! Nonlinear least-squares fitting of line scans, saturation curves, and
//! autocorrelation histograms, with bootstrap uncertainty estimation.
//!
//! All fits share a damped least-squares core with analytic Jacobians and
//! log-transformed positive parameters, Poisson weights, and a deterministic
//! three-point multistart.

mod bootstrap;
mod g2;
mod lm;
mod lorentzian;
mod saturation;

pub use bootstrap::bootstrap_uncertainty;
pub use g2::{autocorrelation_histogram, fit_g2, G2Fit, G2Histogram};
pub use lorentzian::{fit_lorentzian, LineFit, ScanPoint};
pub use saturation::{fit_saturation, SaturationFit};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("fit did not converge within {0} iterations")]
    NonConvergence(usize),

    #[error("insufficient saturation: highest power reaches S = {s_max:.3}, P_sat is unconstrained below S = 0.5")]
    InsufficientSaturation { s_max: f64 },

    #[error("photon record contains no events")]
    EmptyRecord,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("bootstrap unstable: {failed} of {total} resamples failed to converge")]
    BootstrapUnstable { failed: usize, total: usize },
}
