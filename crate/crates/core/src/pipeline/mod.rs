//! QE extraction: both measurement methods, the effective-area estimator,
//! per-molecule analysis, ensemble statistics, and the spectral-factor
//! calibration that reconciles the methods.

mod analyze;
mod area;
mod ensemble;

pub use analyze::{analyze_molecule, AnalyzeOptions, MoleculeAnalysis};
pub use area::{effective_area, effective_area_with_uncertainty, locate_molecule};
pub use ensemble::{
    calibrate_spectral_factor, ensemble_report, qe1_reference_curve, EnsembleReport, Quantiles,
    SpectralCalibration,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::HBAR;
use crate::fitkit::FitError;
use crate::physics::{DetectionChain, EnvironmentParams, PhysicsError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Physics(#[from] PhysicsError),

    #[error(transparent)]
    Fit(#[from] FitError),

    #[error("position ({x:.4e}, {y:.4e}) m is outside the raster interior (3-pixel margin)")]
    PositionOutOfBounds { x: f64, y: f64 },

    #[error("estimated background {background:.3} exceeds the interpolated peak {peak:.3}; effective area undefined")]
    NegativeArea { background: f64, peak: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

/// A value with its one-sigma standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub sigma: f64,
}

impl Measured {
    pub fn new(value: f64, sigma: f64) -> Self {
        Measured { value, sigma }
    }

    /// Relative variance `(sigma/value)^2`.
    pub fn rel_var(&self) -> f64 {
        let r = self.sigma / self.value;
        r * r
    }
}

/// Everything extracted from one molecule's measurements.
///
/// `qe_eff_counts` is method 1, `QE * eta_coll(theta)/eta_coll(0)`;
/// `qe_eff_power` is method 2, `QE * cos^2(theta)`. Both are lower bounds on
/// the quantum efficiency, equal to it only for a horizontal dipole. Fields
/// that need the raster map are `None` when it is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoleculeResult {
    pub id: String,
    /// Vacuum ZPL wavelength (m).
    pub lambda_zpl: f64,
    /// Dead-time-corrected detected rate at infinite power (counts/s).
    pub f_inf: Measured,
    /// Saturation power at the molecule (W).
    pub p_sat: Measured,
    /// Total decay rate from the zero-power linewidth (rad/s).
    pub gamma_tot: Measured,
    /// Effective illumination area (m^2).
    pub a_eff: Option<Measured>,
    /// Inverse saturation intensity `A_eff / P_sat` (m^2/W).
    pub i_sat_inv: Option<Measured>,
    /// Method 1 effective QE.
    pub qe_eff_counts: Measured,
    /// Method 2 effective QE.
    pub qe_eff_power: Option<Measured>,
    /// First-order covariance between the two effective QE values.
    pub qe_cross_cov: f64,
    pub excluded: bool,
    pub exclusion_reason: Option<String>,
}

/// Method 1: quantum efficiency from the saturated count rate.
///
/// Inverts `F_det(inf) = eta_tot(0) * gamma_r / 2` assuming a horizontal
/// dipole, so the result is `QE * eta_coll(theta)/eta_coll(0)` — a lower
/// bound on the QE. `f_inf` must already be dead-time corrected.
pub fn qe_method_saturation_counts(
    f_inf: f64,
    gamma_tot: f64,
    emitter_alpha: f64,
    chain: &DetectionChain,
) -> f64 {
    debug_assert!(f_inf > 0.0 && gamma_tot > 0.0);
    let eta_tot_h =
        chain.eta_coll_h * chain.eta_tr * chain.eta_det * chain.kappa * (1.0 - emitter_alpha);
    let gamma_r = 2.0 * f_inf / eta_tot_h;
    gamma_r / gamma_tot
}

/// Method 2: quantum efficiency from the saturation power.
///
/// Inverts the saturation-power relation for the ZPL radiative rate,
/// `gamma_zpl cos^2(theta) = (pi/3)(n^2/lambda^2) A_eff hbar omega gamma_tot^2 / P_sat`,
/// divides out the branching ratio, and normalizes by `gamma_tot`; the result
/// is `QE * cos^2(theta)`, again a lower bound.
pub fn qe_method_saturation_power(
    p_sat: f64,
    a_eff: f64,
    gamma_tot: f64,
    lambda_zpl: f64,
    env: &EnvironmentParams,
    emitter_alpha: f64,
) -> f64 {
    debug_assert!(p_sat > 0.0 && a_eff > 0.0 && gamma_tot > 0.0 && lambda_zpl > 0.0);
    let omega = 2.0 * std::f64::consts::PI * crate::constants::SPEED_OF_LIGHT / lambda_zpl;
    let gamma_zpl_cos2 = (std::f64::consts::PI / 3.0)
        * (env.n_host * env.n_host / (lambda_zpl * lambda_zpl))
        * a_eff
        * HBAR
        * omega
        * gamma_tot
        * gamma_tot
        / p_sat;
    gamma_zpl_cos2 / emitter_alpha / gamma_tot
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{self, EmitterParams};
    use approx::assert_relative_eq;

    fn paper_chain() -> DetectionChain {
        DetectionChain {
            eta_coll_h: 0.09,
            eta_coll_v: 0.01,
            eta_tr: 0.69,
            eta_det: 0.55,
            kappa: 0.8,
            eta_exc: 0.5,
            tau_dead: 50e-9,
            background_rate: 0.0,
        }
    }

    #[test]
    fn counts_method_paper_regression() {
        // F_det(inf) = 1.00 MCps, gamma_tot = 2*pi*25 MHz, chain of the setup.
        // Frozen from independent arithmetic: 2e6 / (0.01830708 * 2*pi*25e6).
        let qe = qe_method_saturation_counts(
            1.0e6,
            2.0 * std::f64::consts::PI * 25e6,
            0.33,
            &paper_chain(),
        );
        assert_relative_eq!(qe, 0.695_490_239_150_734_4, max_relative = 1e-12);
    }

    #[test]
    fn counts_method_inverts_forward_model() {
        // Construct f_inf from a known emitter at theta = 0: recovers QE exactly.
        let em = EmitterParams {
            gamma_r: 1.1e8,
            gamma_nr: 3.0e7,
            lambda_zpl: 744.0e-9,
            alpha: 0.33,
            theta: 0.0,
            phi_isc: 1e-6,
            tau_triplet: 1e-5,
        };
        let chain = paper_chain();
        let f_inf = physics::total_detection_efficiency(&em, &chain) * em.gamma_r / 2.0;
        let qe = qe_method_saturation_counts(f_inf, em.gamma_tot(), em.alpha, &chain);
        assert_relative_eq!(qe, em.quantum_efficiency(), max_relative = 1e-12);
    }

    #[test]
    fn counts_method_vertical_dipole_ratio() {
        // theta = pi/2: forward model emits through eta_V, inversion assumes
        // eta_H, so the result is QE * eta_V / eta_H = QE / 9 here.
        let em = EmitterParams {
            gamma_r: 1.1e8,
            gamma_nr: 3.0e7,
            lambda_zpl: 744.0e-9,
            alpha: 0.33,
            theta: std::f64::consts::FRAC_PI_2,
            phi_isc: 1e-6,
            tau_triplet: 1e-5,
        };
        let chain = paper_chain();
        let f_inf = physics::total_detection_efficiency(&em, &chain) * em.gamma_r / 2.0;
        let qe = qe_method_saturation_counts(f_inf, em.gamma_tot(), em.alpha, &chain);
        assert_relative_eq!(
            qe,
            em.quantum_efficiency() / 9.0,
            max_relative = 1e-10
        );
    }

    #[test]
    fn power_method_paper_regression() {
        // P_sat = 1.6 nW, A_eff = 2.4 um^2, gamma_tot = 2*pi*25 MHz,
        // lambda = 743.7 nm, n = 1.6, alpha = 0.33. Frozen from independent
        // high-precision arithmetic.
        let qe = qe_method_saturation_power(
            1.6e-9,
            2.4e-12,
            2.0 * std::f64::consts::PI * 25e6,
            743.7e-9,
            &EnvironmentParams { n_host: 1.6 },
            0.33,
        );
        assert_relative_eq!(qe, 0.924_377_076_914_428_9, max_relative = 1e-12);
    }

    #[test]
    fn power_method_inverts_forward_model() {
        let em = EmitterParams {
            gamma_r: 0.9e8,
            gamma_nr: 0.4e8,
            lambda_zpl: 744.5e-9,
            alpha: 0.4,
            theta: 0.0,
            phi_isc: 1e-6,
            tau_triplet: 1e-5,
        };
        let env = EnvironmentParams { n_host: 1.6 };
        let a_eff = 2.0e-12;
        let p_sat = physics::saturation_power(&em, a_eff, &env, 0.0).unwrap();
        let qe = qe_method_saturation_power(
            p_sat,
            a_eff,
            em.gamma_tot(),
            em.lambda_zpl,
            &env,
            em.alpha,
        );
        assert_relative_eq!(qe, em.quantum_efficiency(), max_relative = 1e-12);
    }

    #[test]
    fn power_method_alpha_scaling() {
        let env = EnvironmentParams { n_host: 1.6 };
        let base = qe_method_saturation_power(1.6e-9, 2.4e-12, 1.571e8, 743.7e-9, &env, 0.33);
        let doubled = qe_method_saturation_power(1.6e-9, 2.4e-12, 1.571e8, 743.7e-9, &env, 0.66);
        assert_relative_eq!(doubled / base, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn unit_sanity_power_rescaling() {
        // Multiplying P_sat and A_eff consistently (e.g. relabeled power
        // units cancel in method 2 only through P_sat): scaling P_sat by
        // 1000 and compensating f_inf leaves method 1 untouched and scales
        // method 2 by 1/1000 — i.e. both methods are plain ratios with no
        // hidden unit assumptions.
        let env = EnvironmentParams { n_host: 1.6 };
        let chain = paper_chain();
        let qe_c = qe_method_saturation_counts(1e6, 1.571e8, 0.33, &chain);
        let qe_c_scaled = qe_method_saturation_counts(1e6, 1.571e8, 0.33, &chain);
        assert_eq!(qe_c, qe_c_scaled);
        let qe_p = qe_method_saturation_power(1.6e-9, 2.4e-12, 1.571e8, 743.7e-9, &env, 0.33);
        let qe_p_scaled =
            qe_method_saturation_power(1.6e-6, 2.4e-12, 1.571e8, 743.7e-9, &env, 0.33);
        assert_relative_eq!(qe_p / qe_p_scaled, 1000.0, max_relative = 1e-12);
    }
}
