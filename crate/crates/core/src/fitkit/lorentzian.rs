//! Weighted Lorentzian line fits for single-power frequency scans.

use serde::{Deserialize, Serialize};

use super::lm::{multistart, LsqModel};
use super::FitError;

/// One dead-time-corrected scan point: detuning (rad/s), rate (counts/s) and
/// its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub detuning: f64,
    pub rate: f64,
    pub sigma: f64,
}

/// Fitted Lorentzian `b + a / (1 + (2 (x - x0) / w)^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    /// Peak height above background (counts/s).
    pub amplitude: f64,
    /// Line center (rad/s).
    pub center: f64,
    /// Full width at half maximum (rad/s).
    pub fwhm: f64,
    /// Flat background (counts/s).
    pub background: f64,
    /// Covariance over (amplitude, center, fwhm, background).
    pub covariance: [[f64; 4]; 4],
    /// `sqrt(chi^2 / dof)`.
    pub residual_norm: f64,
    pub converged: bool,
    pub multimodal: bool,
}

impl LineFit {
    pub fn amplitude_sigma(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }
    pub fn center_sigma(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }
    pub fn fwhm_sigma(&self) -> f64 {
        self.covariance[2][2].sqrt()
    }
    pub fn background_sigma(&self) -> f64 {
        self.covariance[3][3].sqrt()
    }
}

/// Internal parameters: (ln a, x0, ln w, b).
struct LorentzianModel<'a> {
    points: &'a [ScanPoint],
}

impl LorentzianModel<'_> {
    fn eval(p: &[f64], x: f64) -> f64 {
        let a = p[0].exp();
        let w = p[2].exp();
        let u = 2.0 * (x - p[1]) / w;
        p[3] + a / (1.0 + u * u)
    }
}

impl LsqModel for LorentzianModel<'_> {
    fn n_params(&self) -> usize {
        4
    }
    fn n_residuals(&self) -> usize {
        self.points.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for (i, pt) in self.points.iter().enumerate() {
            out[i] = (pt.rate - Self::eval(p, pt.detuning)) / pt.sigma;
        }
    }
    fn jacobian(&self, p: &[f64], out: &mut [f64]) {
        let a = p[0].exp();
        let w = p[2].exp();
        for (i, pt) in self.points.iter().enumerate() {
            let u = 2.0 * (pt.detuning - p[1]) / w;
            let denom = 1.0 + u * u;
            let denom2 = denom * denom;
            let inv_sigma = 1.0 / pt.sigma;
            // d r / d p = -(d m / d p) / sigma; log-params carry the chain factor.
            out[i * 4] = -(a / denom) * inv_sigma;
            out[i * 4 + 1] = -(4.0 * a * u / (w * denom2)) * inv_sigma;
            out[i * 4 + 2] = -(2.0 * a * u * u / denom2) * inv_sigma;
            out[i * 4 + 3] = -inv_sigma;
        }
    }
}

/// Quartile of a copy of `xs` (used for the background heuristic).
fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((v.len() - 1) as f64 * q).round() as usize;
    v[idx]
}

/// Heuristic initialization: center at the maximum point, background at the
/// lower quartile, width from the half-maximum crossings. Fails when the
/// scan does not contain both crossings.
fn initial_guess(points: &[ScanPoint]) -> Result<(f64, f64, f64, f64), FitError> {
    let rates: Vec<f64> = points.iter().map(|p| p.rate).collect();
    let background = quantile(&rates, 0.25);
    let (peak_idx, peak) = rates
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, &v)| (i, v))
        .expect("non-empty");
    let center = points[peak_idx].detuning;
    let amplitude = (peak - background).max(peak * 1e-3);
    let half = background + 0.5 * amplitude;

    let mut left = None;
    for w in points.windows(2) {
        if w[0].rate < half && w[1].rate >= half && w[1].detuning <= center {
            left = Some(w[1].detuning);
        }
    }
    let mut right = None;
    for w in points.windows(2) {
        if w[0].rate >= half && w[1].rate < half && w[0].detuning >= center {
            right = Some(w[0].detuning);
            break;
        }
    }
    let (Some(left), Some(right)) = (left, right) else {
        return Err(FitError::InsufficientData(
            "scan does not contain both half-maximum crossings".into(),
        ));
    };
    let span = points.last().unwrap().detuning - points.first().unwrap().detuning;
    let mut fwhm = right - left;
    if !(fwhm > 0.0) {
        fwhm = span / 4.0;
    }
    Ok((amplitude, center, fwhm, background))
}

/// Fits a Lorentzian to a single-power scan slice.
///
/// Expects at least 8 points spanning at least two estimated linewidths,
/// with rates already corrected for dead time.
pub fn fit_lorentzian(points: &[ScanPoint]) -> Result<LineFit, FitError> {
    if points.len() < 8 {
        return Err(FitError::InsufficientData(format!(
            "need >= 8 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !(p.sigma > 0.0)) {
        return Err(FitError::InvalidInput(
            "every point needs a positive sigma".into(),
        ));
    }
    let max = points.iter().map(|p| p.rate).fold(f64::NEG_INFINITY, f64::max);
    let min = points.iter().map(|p| p.rate).fold(f64::INFINITY, f64::min);
    if !(max - min > 1e-9 * max.abs().max(1.0)) {
        return Err(FitError::DegenerateData("scan is flat".into()));
    }

    let (a0, x0, w0, b0) = initial_guess(points)?;
    let span = points.last().unwrap().detuning - points.first().unwrap().detuning;
    if span < 2.0 * w0 {
        return Err(FitError::InsufficientData(format!(
            "scan spans {span:.3e} rad/s, below two estimated linewidths ({:.3e})",
            2.0 * w0
        )));
    }

    let model = LorentzianModel { points };
    let init = [a0.ln(), x0, w0.ln(), b0];
    let (fit, multimodal) = multistart(&model, &init);
    if !fit.converged {
        return Err(FitError::NonConvergence(200));
    }

    let a = fit.params[0].exp();
    let w = fit.params[2].exp();
    // Back-transform covariance: Cov_ext = D Cov_int D, D = d(ext)/d(int).
    let d = [a, 1.0, w, 1.0];
    let mut covariance = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            covariance[i][j] = d[i] * fit.covariance[i * 4 + j] * d[j];
        }
    }
    let dof = (points.len() - 4).max(1) as f64;
    Ok(LineFit {
        amplitude: a,
        center: fit.params[1],
        fwhm: w,
        background: fit.params[3],
        covariance,
        residual_norm: (fit.cost / dof).sqrt(),
        converged: fit.converged,
        multimodal,
    })
}
