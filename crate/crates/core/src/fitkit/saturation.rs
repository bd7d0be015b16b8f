//! Joint saturation fit: peak height and linewidth vs excitation power with
//! a shared saturation parameter.

use serde::{Deserialize, Serialize};

use super::lm::{multistart, LsqModel};
use super::lorentzian::LineFit;
use super::FitError;

/// Joint fit of `peak(P) = F_inf * S/(1+S)` and `fwhm(P) = gamma0 * sqrt(1+S)`
/// with `S = P / P_sat`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationFit {
    /// Dead-time-corrected detected rate at infinite power (counts/s).
    pub f_inf: f64,
    /// Saturation power at the molecule (W).
    pub p_sat: f64,
    /// Zero-power FWHM (rad/s).
    pub gamma_tot0: f64,
    /// Covariance over (f_inf, p_sat, gamma_tot0).
    pub covariance: [[f64; 3]; 3],
    /// `sqrt(chi^2 / dof)`.
    pub residual_norm: f64,
    pub converged: bool,
    pub multimodal: bool,
}

impl SaturationFit {
    pub fn f_inf_sigma(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }
    pub fn p_sat_sigma(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }
    pub fn gamma_tot0_sigma(&self) -> f64 {
        self.covariance[2][2].sqrt()
    }
}

struct Observation {
    power: f64,
    peak: f64,
    peak_sigma: f64,
    fwhm: f64,
    fwhm_sigma: f64,
}

/// Internal parameters: (ln F_inf, ln P_sat, ln gamma0). Residuals interleave
/// the peak and width observations of every power.
struct SaturationModel<'a> {
    obs: &'a [Observation],
}

impl LsqModel for SaturationModel<'_> {
    fn n_params(&self) -> usize {
        3
    }
    fn n_residuals(&self) -> usize {
        2 * self.obs.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let (f_inf, p_sat, gamma0) = (p[0].exp(), p[1].exp(), p[2].exp());
        for (i, o) in self.obs.iter().enumerate() {
            let s = o.power / p_sat;
            out[2 * i] = (o.peak - f_inf * s / (1.0 + s)) / o.peak_sigma;
            out[2 * i + 1] = (o.fwhm - gamma0 * (1.0 + s).sqrt()) / o.fwhm_sigma;
        }
    }
    fn jacobian(&self, p: &[f64], out: &mut [f64]) {
        let (f_inf, p_sat, gamma0) = (p[0].exp(), p[1].exp(), p[2].exp());
        for (i, o) in self.obs.iter().enumerate() {
            let s = o.power / p_sat;
            let sat = s / (1.0 + s);
            let root = (1.0 + s).sqrt();
            // d/d ln P_sat of S is -S; propagate through both curves.
            let dpeak_dlnpsat = -f_inf * s / ((1.0 + s) * (1.0 + s));
            let dfwhm_dlnpsat = -gamma0 * 0.5 * s / root;
            let row = 2 * i * 3;
            out[row] = -(f_inf * sat) / o.peak_sigma;
            out[row + 1] = -dpeak_dlnpsat / o.peak_sigma;
            out[row + 2] = 0.0;
            let row = (2 * i + 1) * 3;
            out[row] = 0.0;
            out[row + 1] = -dfwhm_dlnpsat / o.fwhm_sigma;
            out[row + 2] = -(gamma0 * root) / o.fwhm_sigma;
        }
    }
}

/// Initial P_sat: the power where the linewidth first grows past sqrt(2) of
/// the lowest-power width, interpolated in log power.
fn initial_p_sat(obs: &[Observation]) -> f64 {
    let gamma0 = obs[0].fwhm;
    let target = gamma0 * std::f64::consts::SQRT_2;
    for w in obs.windows(2) {
        if w[0].fwhm < target && w[1].fwhm >= target {
            let f = (target - w[0].fwhm) / (w[1].fwhm - w[0].fwhm);
            return w[0].power * (w[1].power / w[0].power).powf(f);
        }
    }
    // No crossing: guess from the broadest line, fwhm = gamma0 sqrt(1+S).
    let last = obs.last().unwrap();
    let s_max = ((last.fwhm / gamma0).powi(2) - 1.0).max(0.1);
    last.power / s_max
}

/// Joint weighted fit over per-power line fits.
///
/// `line_fits` pairs each power at the molecule (W) with its Lorentzian fit.
/// Needs at least 4 distinct powers spanning a factor of 10; errors with
/// [`FitError::InsufficientSaturation`] when even the highest power only
/// reaches `S < 0.5`, where `P_sat` is unconstrained.
pub fn fit_saturation(line_fits: &[(f64, LineFit)]) -> Result<SaturationFit, FitError> {
    let mut obs: Vec<Observation> = line_fits
        .iter()
        .map(|(power, lf)| Observation {
            power: *power,
            peak: lf.amplitude,
            peak_sigma: lf.amplitude_sigma().max(lf.amplitude * 1e-9).max(1e-12),
            fwhm: lf.fwhm,
            fwhm_sigma: lf.fwhm_sigma().max(lf.fwhm * 1e-9),
        })
        .collect();
    obs.sort_by(|a, b| a.power.total_cmp(&b.power));

    let mut distinct = 0usize;
    let mut last = f64::NAN;
    for o in &obs {
        if !(o.power > 0.0) {
            return Err(FitError::InvalidInput(format!(
                "powers must be positive, got {}",
                o.power
            )));
        }
        if o.power != last {
            distinct += 1;
            last = o.power;
        }
    }
    if distinct < 4 {
        return Err(FitError::InsufficientData(format!(
            "need >= 4 distinct powers, got {distinct}"
        )));
    }
    let span = obs.last().unwrap().power / obs.first().unwrap().power;
    if span < 10.0 {
        return Err(FitError::InsufficientData(format!(
            "powers span a factor {span:.2}, need >= 10"
        )));
    }

    let p_sat0 = initial_p_sat(&obs);
    let gamma0 = obs.first().unwrap().fwhm;
    let last_obs = obs.last().unwrap();
    let s_last = last_obs.power / p_sat0;
    let f_inf0 = last_obs.peak * (1.0 + s_last) / s_last;

    let model = SaturationModel { obs: &obs };
    let init = [f_inf0.ln(), p_sat0.ln(), gamma0.ln()];
    let (fit, multimodal) = multistart(&model, &init);
    if !fit.converged {
        return Err(FitError::NonConvergence(200));
    }

    let f_inf = fit.params[0].exp();
    let p_sat = fit.params[1].exp();
    let gamma_tot0 = fit.params[2].exp();

    let s_max = obs.last().unwrap().power / p_sat;
    if s_max < 0.5 {
        return Err(FitError::InsufficientSaturation { s_max });
    }

    let d = [f_inf, p_sat, gamma_tot0];
    let mut covariance = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            covariance[i][j] = d[i] * fit.covariance[i * 3 + j] * d[j];
        }
    }
    let dof = (2 * obs.len()).saturating_sub(3).max(1) as f64;
    Ok(SaturationFit {
        f_inf,
        p_sat,
        gamma_tot0,
        covariance,
        residual_norm: (fit.cost / dof).sqrt(),
        converged: true,
        multimodal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn synth_line_fit(peak: f64, fwhm: f64, rel_sigma: f64) -> LineFit {
        let mut covariance = [[0.0; 4]; 4];
        covariance[0][0] = (peak * rel_sigma).powi(2);
        covariance[2][2] = (fwhm * rel_sigma).powi(2);
        LineFit {
            amplitude: peak,
            center: 0.0,
            fwhm,
            background: 0.0,
            covariance,
            residual_norm: 1.0,
            converged: true,
            multimodal: false,
        }
    }

    fn forward(powers: &[f64], f_inf: f64, p_sat: f64, gamma0: f64) -> Vec<(f64, LineFit)> {
        powers
            .iter()
            .map(|&p| {
                let s = p / p_sat;
                (
                    p,
                    synth_line_fit(f_inf * s / (1.0 + s), gamma0 * (1.0 + s).sqrt(), 1e-3),
                )
            })
            .collect()
    }

    fn log_powers(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
            .collect()
    }

    #[test]
    fn recovers_noiseless_parameters() {
        let (f_inf, p_sat, gamma0) = (1.0e6, 1.6e-9, 1.5708e8);
        let data = forward(&log_powers(1e-11, 1e-7, 12), f_inf, p_sat, gamma0);
        let fit = fit_saturation(&data).unwrap();
        assert_relative_eq!(fit.f_inf, f_inf, max_relative = 1e-6);
        assert_relative_eq!(fit.p_sat, p_sat, max_relative = 1e-6);
        assert_relative_eq!(fit.gamma_tot0, gamma0, max_relative = 1e-6);
    }

    #[test]
    fn paper_like_series_recovery() {
        // Powers 0.01 to 100 nW around P_sat = 1.6 nW, F_inf = 1 MCps.
        let (f_inf, p_sat, gamma0) = (1.0e6, 1.6e-9, 2.0 * std::f64::consts::PI * 25e6);
        let data = forward(&log_powers(1e-11, 1e-7, 10), f_inf, p_sat, gamma0);
        let fit = fit_saturation(&data).unwrap();
        assert!((fit.f_inf - f_inf).abs() < 3.0 * fit.f_inf_sigma() + 1e-6 * f_inf);
        assert!((fit.p_sat - p_sat).abs() < 3.0 * fit.p_sat_sigma() + 1e-6 * p_sat);
    }

    #[test]
    fn unsaturated_series_rejected() {
        // Highest power only reaches S = 0.1.
        let (f_inf, p_sat, gamma0) = (1.0e6, 1.6e-9, 1.5708e8);
        let data = forward(&log_powers(1.6e-13, 1.6e-10, 8), f_inf, p_sat, gamma0);
        assert!(matches!(
            fit_saturation(&data),
            Err(FitError::InsufficientSaturation { .. })
        ));
    }

    #[test]
    fn too_few_powers_rejected() {
        let data = forward(&[1e-10, 1e-9, 1e-8], 1e6, 1.6e-9, 1.5708e8);
        assert!(matches!(
            fit_saturation(&data),
            Err(FitError::InsufficientData(_))
        ));
    }

    #[test]
    fn narrow_power_span_rejected() {
        let data = forward(&[1e-9, 2e-9, 4e-9, 8e-9], 1e6, 1.6e-9, 1.5708e8);
        assert!(matches!(
            fit_saturation(&data),
            Err(FitError::InsufficientData(_))
        ));
    }
}
