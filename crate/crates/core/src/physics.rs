//! Closed-form forward model of a resonantly driven two-level emitter with
//! triplet shelving, orientation-dependent collection, and detector
//! nonlinearity.
//!
//! Unit convention: every decay rate and detuning in this crate is angular
//! (rad/s). Spectroscopic linewidths quoted in Hz (FWHM) are converted by
//! a factor of 2π at the I/O boundary, never here.
//!
//! All functions are pure; they may be called concurrently without
//! synchronization.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{HBAR, SPEED_OF_LIGHT};

/// Errors from the forward model.
#[derive(Debug, Error)]
pub enum PhysicsError {
    /// A parameter violated its domain constraint.
    #[error("invalid parameter `{name}` = {value}: must satisfy {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    /// A purely vertical dipole cannot be saturated with transverse light.
    #[error("saturation power diverges for a vertical dipole (theta = pi/2)")]
    VerticalDipole,

    /// Measured rate at or above the dead-time ceiling 1/tau_dead.
    #[error("measured rate {rate:.3e} cps is at or above the detector ceiling {ceiling:.3e} cps")]
    DetectorSaturated { rate: f64, ceiling: f64 },
}

fn require(ok: bool, name: &'static str, value: f64, constraint: &'static str) -> Result<(), PhysicsError> {
    if ok {
        Ok(())
    } else {
        Err(PhysicsError::InvalidParameter {
            name,
            value,
            constraint,
        })
    }
}

/// Ground truth of one molecule.
///
/// `gamma_r` and `gamma_nr` are the radiative and nonradiative decay rates of
/// the excited state; their sum is the total decay rate, and the quantum
/// efficiency is `gamma_r / gamma_tot`. The zero-phonon line carries a
/// fraction `alpha` of the radiative emission. `theta` is the out-of-plane
/// dipole angle (0 = in-plane). Intersystem crossing is modelled as a single
/// effective shelving level entered with yield `phi_isc` per excited-state
/// decay and left at rate `1/tau_triplet`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitterParams {
    /// Radiative decay rate (rad/s).
    pub gamma_r: f64,
    /// Nonradiative decay rate (rad/s).
    pub gamma_nr: f64,
    /// Vacuum ZPL wavelength (m).
    pub lambda_zpl: f64,
    /// ZPL branching ratio, fraction of emission in the ZPL.
    pub alpha: f64,
    /// Out-of-plane dipole angle (rad), in [0, pi/2].
    pub theta: f64,
    /// Intersystem-crossing yield per excitation.
    pub phi_isc: f64,
    /// Triplet (shelving) lifetime (s).
    pub tau_triplet: f64,
}

/// Default ISC yield; together with [`DEFAULT_TAU_TRIPLET`] this keeps the
/// saturated-emission reduction at or below 0.1 % for linewidths up to
/// ~30 MHz.
pub const DEFAULT_PHI_ISC: f64 = 1e-6;
/// Default triplet lifetime (s).
pub const DEFAULT_TAU_TRIPLET: f64 = 1e-5;

impl EmitterParams {
    /// Validates every field constraint; call after deserializing.
    pub fn validate(&self) -> Result<(), PhysicsError> {
        require(self.gamma_r > 0.0, "gamma_r", self.gamma_r, "> 0")?;
        require(self.gamma_nr >= 0.0, "gamma_nr", self.gamma_nr, ">= 0")?;
        require(
            self.lambda_zpl > 0.0,
            "lambda_zpl",
            self.lambda_zpl,
            "> 0",
        )?;
        require(
            self.alpha > 0.0 && self.alpha <= 1.0,
            "alpha",
            self.alpha,
            "in (0, 1]",
        )?;
        require(
            (0.0..=std::f64::consts::FRAC_PI_2).contains(&self.theta),
            "theta",
            self.theta,
            "in [0, pi/2]",
        )?;
        require(
            (0.0..1.0).contains(&self.phi_isc),
            "phi_isc",
            self.phi_isc,
            "in [0, 1)",
        )?;
        require(
            self.tau_triplet > 0.0,
            "tau_triplet",
            self.tau_triplet,
            "> 0",
        )?;
        Ok(())
    }

    /// Total excited-state decay rate (rad/s).
    pub fn gamma_tot(&self) -> f64 {
        self.gamma_r + self.gamma_nr
    }

    /// Quantum efficiency, `gamma_r / gamma_tot`, in (0, 1].
    pub fn quantum_efficiency(&self) -> f64 {
        self.gamma_r / self.gamma_tot()
    }

    /// Radiative rate through the ZPL, `alpha * gamma_r` (rad/s).
    pub fn gamma_zpl(&self) -> f64 {
        self.alpha * self.gamma_r
    }

    /// Angular ZPL transition frequency, `2*pi*c / lambda` (rad/s).
    pub fn omega_zpl(&self) -> f64 {
        2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / self.lambda_zpl
    }
}

/// Calibration of the detection and excitation chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionChain {
    /// Collection efficiency for a horizontal dipole.
    pub eta_coll_h: f64,
    /// Collection efficiency for a vertical dipole.
    pub eta_coll_v: f64,
    /// Transmission of the detection path.
    pub eta_tr: f64,
    /// Detector efficiency at the ZPL wavelength.
    pub eta_det: f64,
    /// Relative detection efficiency of the red-shifted fluorescence vs ZPL.
    pub kappa: f64,
    /// Excitation-path efficiency relating source power to power at the molecule.
    pub eta_exc: f64,
    /// Detector dead time (s).
    pub tau_dead: f64,
    /// Dark plus stray counts (counts/s).
    pub background_rate: f64,
}

impl DetectionChain {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        for (name, v) in [
            ("eta_coll_h", self.eta_coll_h),
            ("eta_coll_v", self.eta_coll_v),
            ("eta_tr", self.eta_tr),
            ("eta_det", self.eta_det),
            ("kappa", self.kappa),
            ("eta_exc", self.eta_exc),
        ] {
            require(v > 0.0 && v <= 1.0, name, v, "in (0, 1]")?;
        }
        require(
            self.eta_coll_v <= self.eta_coll_h,
            "eta_coll_v",
            self.eta_coll_v,
            "<= eta_coll_h",
        )?;
        require(self.tau_dead >= 0.0, "tau_dead", self.tau_dead, ">= 0")?;
        require(
            self.background_rate >= 0.0,
            "background_rate",
            self.background_rate,
            ">= 0",
        )?;
        Ok(())
    }
}

/// Host-matrix environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentParams {
    /// Refractive index of the host matrix.
    pub n_host: f64,
}

impl EnvironmentParams {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        require(self.n_host >= 1.0, "n_host", self.n_host, ">= 1")
    }
}

/// Steady-state excited-state population of a driven two-level system.
///
/// `rho_ee = (S/2) / (1 + S + (2*detuning/gamma_tot)^2)` with saturation
/// parameter `S = P/P_sat`. Approaches 1/2 on resonance at high drive.
pub fn excited_population(detuning: f64, sat_param: f64, gamma_tot: f64) -> Result<f64, PhysicsError> {
    require(sat_param >= 0.0, "sat_param", sat_param, ">= 0")?;
    require(gamma_tot > 0.0, "gamma_tot", gamma_tot, "> 0")?;
    let delta = 2.0 * detuning / gamma_tot;
    Ok(0.5 * sat_param / (1.0 + sat_param + delta * delta))
}

/// Power-broadened FWHM of the excitation line, `gamma_tot * sqrt(1 + S)` (rad/s).
pub fn power_broadened_fwhm(gamma_tot: f64, sat_param: f64) -> Result<f64, PhysicsError> {
    require(sat_param >= 0.0, "sat_param", sat_param, ">= 0")?;
    require(gamma_tot > 0.0, "gamma_tot", gamma_tot, "> 0")?;
    Ok(gamma_tot * (1.0 + sat_param).sqrt())
}

/// Orientation-dependent collection efficiency,
/// `eta_H cos^2(theta) + eta_V sin^2(theta)`.
pub fn collection_efficiency(theta: f64, chain: &DetectionChain) -> Result<f64, PhysicsError> {
    require(
        (0.0..=std::f64::consts::FRAC_PI_2).contains(&theta),
        "theta",
        theta,
        "in [0, pi/2]",
    )?;
    let (s, c) = theta.sin_cos();
    Ok(chain.eta_coll_h * c * c + chain.eta_coll_v * s * s)
}

/// Total detection efficiency `eta_coll(theta) * eta_tr * eta_det * kappa * (1 - alpha)`.
///
/// The spectral factor `kappa * (1 - alpha)` reflects that the excitation
/// filter blocks the ZPL, so only the red-shifted fraction `1 - alpha` is
/// detected, with relative efficiency `kappa`.
pub fn total_detection_efficiency(emitter: &EmitterParams, chain: &DetectionChain) -> f64 {
    let eta_coll = collection_efficiency(emitter.theta, chain)
        .expect("emitter.theta validated to [0, pi/2]");
    eta_coll * chain.eta_tr * chain.eta_det * chain.kappa * (1.0 - emitter.alpha)
}

/// Saturation power at the molecule (W):
/// `P_sat = (pi/3) (n^2/lambda^2) A_eff hbar omega_zpl gamma_tot^2 / (gamma_zpl cos^2 theta)`.
///
/// All rates are angular (rad/s). Errors on `theta = pi/2`, where a
/// transversely polarized beam cannot drive the dipole.
pub fn saturation_power(
    emitter: &EmitterParams,
    a_eff: f64,
    env: &EnvironmentParams,
    theta: f64,
) -> Result<f64, PhysicsError> {
    require(a_eff > 0.0, "a_eff", a_eff, "> 0")?;
    require(
        (0.0..=std::f64::consts::FRAC_PI_2).contains(&theta),
        "theta",
        theta,
        "in [0, pi/2]",
    )?;
    let cos2 = theta.cos() * theta.cos();
    // cos(pi/2) in f64 is ~6e-17, not zero; catch the singular case explicitly.
    if theta >= std::f64::consts::FRAC_PI_2 {
        return Err(PhysicsError::VerticalDipole);
    }
    let n2_over_lambda2 = env.n_host * env.n_host / (emitter.lambda_zpl * emitter.lambda_zpl);
    let gamma_tot = emitter.gamma_tot();
    Ok((std::f64::consts::PI / 3.0)
        * n2_over_lambda2
        * a_eff
        * HBAR
        * emitter.omega_zpl()
        * gamma_tot
        * gamma_tot
        / (emitter.gamma_zpl() * cos2))
}

/// Non-paralyzable dead-time response of the APD: `m = n / (1 + n*tau_dead)`.
pub fn apd_measured_rate(true_rate: f64, tau_dead: f64) -> f64 {
    debug_assert!(true_rate >= 0.0 && tau_dead >= 0.0);
    true_rate / (1.0 + true_rate * tau_dead)
}

/// Inverts [`apd_measured_rate`]: `n = m / (1 - m*tau_dead)`.
///
/// Errors when the measured rate sits at or above the ceiling `1/tau_dead`.
pub fn apd_correct_rate(measured_rate: f64, tau_dead: f64) -> Result<f64, PhysicsError> {
    require(
        measured_rate >= 0.0,
        "measured_rate",
        measured_rate,
        ">= 0",
    )?;
    require(tau_dead >= 0.0, "tau_dead", tau_dead, ">= 0")?;
    let occupancy = measured_rate * tau_dead;
    if occupancy >= 1.0 {
        return Err(PhysicsError::DetectorSaturated {
            rate: measured_rate,
            ceiling: 1.0 / tau_dead,
        });
    }
    Ok(measured_rate / (1.0 - occupancy))
}

/// Emission-rate reduction from triplet shelving,
/// `1 / (1 + rho_ee * gamma_tot * phi_isc * tau_triplet)`.
///
/// This is the exact steady-state population ratio of the three-level rate
/// system to the two-level one, so the closed-form detected rate and the
/// stochastic photon-stream engine share one model.
pub fn isc_reduction_factor(rho_ee: f64, emitter: &EmitterParams) -> f64 {
    debug_assert!((0.0..=0.5).contains(&rho_ee));
    1.0 / (1.0 + rho_ee * emitter.gamma_tot() * emitter.phi_isc * emitter.tau_triplet)
}

/// Detected count rate (counts/s) for a given detuning and drive power.
///
/// Composition: two-level steady state, ISC reduction, orientation-dependent
/// total detection efficiency, additive background, then the dead-time
/// response. The background is added before the dead-time distortion because
/// the detector cannot tell signal from stray photons.
pub fn detected_rate(
    emitter: &EmitterParams,
    chain: &DetectionChain,
    detuning: f64,
    power_at_molecule: f64,
    p_sat: f64,
) -> Result<f64, PhysicsError> {
    require(
        power_at_molecule >= 0.0,
        "power_at_molecule",
        power_at_molecule,
        ">= 0",
    )?;
    require(p_sat > 0.0, "p_sat", p_sat, "> 0")?;
    let sat = power_at_molecule / p_sat;
    let rho = excited_population(detuning, sat, emitter.gamma_tot())?;
    let true_rate = total_detection_efficiency(emitter, chain)
        * emitter.gamma_r
        * rho
        * isc_reduction_factor(rho, emitter)
        + chain.background_rate;
    Ok(apd_measured_rate(true_rate, chain.tau_dead))
}

/// Decay rates and bunching amplitude of the three-level autocorrelation,
/// `g2(tau) = 1 - (1 + b) exp(-lambda_anti*tau) + b exp(-lambda_bunch*tau)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct G2Components {
    /// Antibunching recovery rate (1/s); equals `gamma_tot * (1 + S)` when
    /// `phi_isc = 0`.
    pub lambda_anti: f64,
    /// Bunching decay rate (1/s), close to `1/tau_triplet`.
    pub lambda_bunch: f64,
    /// Bunching amplitude `b >= 0`.
    pub bunch_amplitude: f64,
}

/// Eigen-decomposition of the S0/S1/triplet rate system at the pump rate
/// implied by the saturation parameter.
///
/// The rate model drives the ground state at `k = gamma_tot*S/2` with a
/// matching stimulated-emission channel; the excited state decays at
/// `gamma_tot` total, branching to the triplet with probability `phi_isc`.
/// This reproduces the two-level steady state `(S/2)/(1+S)` exactly and
/// gives the textbook antibunching rate `gamma_tot*(1+S)`.
pub fn g2_components(emitter: &EmitterParams, sat_param: f64) -> Result<G2Components, PhysicsError> {
    require(sat_param >= 0.0, "sat_param", sat_param, ">= 0")?;
    let gamma = emitter.gamma_tot();
    let pump = 0.5 * gamma * sat_param;
    let a = 2.0 * pump + gamma; // S1 relaxation rate
    let g_isc = gamma * emitter.phi_isc; // S1 -> T
    let d = 1.0 / emitter.tau_triplet; // T -> S0
    let half_sum = 0.5 * (a + d);
    let half_diff = 0.5 * (a - d);
    let disc = (half_diff * half_diff - pump * g_isc).max(0.0).sqrt();
    let lambda_anti = half_sum + disc;
    let lambda_bunch = half_sum - disc;
    // Amplitude from g2(0) = 0 and g2'(0) = pump / p1_ss, written as a ratio
    // so the S = 0 limit stays finite.
    let bunch_amplitude = if lambda_anti > lambda_bunch {
        ((a + pump * g_isc / d - lambda_anti) / (lambda_anti - lambda_bunch)).max(0.0)
    } else {
        0.0
    };
    Ok(G2Components {
        lambda_anti,
        lambda_bunch,
        bunch_amplitude,
    })
}

/// Normalized intensity autocorrelation of the three-level rate model.
///
/// Even in `tau`; 0 at `tau = 0`, greater than 1 at intermediate delays when
/// shelving is active, and 1 in the uncorrelated limit.
pub fn g2_three_level(tau: f64, emitter: &EmitterParams, sat_param: f64) -> Result<f64, PhysicsError> {
    let c = g2_components(emitter, sat_param)?;
    let t = tau.abs();
    Ok(1.0 - (1.0 + c.bunch_amplitude) * (-c.lambda_anti * t).exp()
        + c.bunch_amplitude * (-c.lambda_bunch * t).exp())
}
