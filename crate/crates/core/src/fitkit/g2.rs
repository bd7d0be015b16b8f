//! Cross-correlation histograms of HBT photon records and fits of the
//! three-level autocorrelation model.

use serde::{Deserialize, Serialize};

use super::lm::{multistart, LsqModel};
use super::FitError;
use crate::simulator::PhotonRecord;

/// Normalized g2 histogram over signed delays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Histogram {
    /// Bin centers (s), symmetric around zero.
    pub tau_centers: Vec<f64>,
    /// Normalized coincidence values; 1 for uncorrelated light.
    pub values: Vec<f64>,
    /// Poisson error bars per bin.
    pub sigmas: Vec<f64>,
    /// Raw pair counts per bin.
    pub counts: Vec<u64>,
    pub bin_width: f64,
    pub duration: f64,
    /// Mean rates of the two channels (counts/s).
    pub rates: (f64, f64),
    /// Set when the zero-delay bin towers over the rest of the histogram,
    /// which indicates duplicated events rather than physics.
    pub zero_bin_anomaly: bool,
}

/// Cross-correlates two photon records into a normalized g2 histogram.
///
/// Pair counts in bin k are divided by `r1 * r2 * bin_width * (T - |tau_k|)`,
/// the expectation for uncorrelated streams over a finite record, so the
/// histogram tends to 1 at large delays.
pub fn autocorrelation_histogram(
    record_a: &PhotonRecord,
    record_b: &PhotonRecord,
    bin_width: f64,
    max_tau: f64,
) -> Result<G2Histogram, FitError> {
    if record_a.timestamps_ps.is_empty() || record_b.timestamps_ps.is_empty() {
        return Err(FitError::EmptyRecord);
    }
    if !(bin_width > 0.0) {
        return Err(FitError::InvalidInput(format!(
            "bin_width must be positive, got {bin_width}"
        )));
    }
    let duration = record_a.duration;
    if max_tau > duration / 10.0 {
        return Err(FitError::InvalidInput(format!(
            "max_tau {max_tau} exceeds duration/10 = {}",
            duration / 10.0
        )));
    }
    if max_tau < bin_width {
        return Err(FitError::InvalidInput(
            "max_tau must be at least one bin".into(),
        ));
    }

    let bw_ps = bin_width * 1e12;
    let half_bins = (max_tau * 1e12 / bw_ps).floor() as i64;
    let n_bins = (2 * half_bins + 1) as usize;
    let window_ps = ((half_bins as f64 + 0.5) * bw_ps) as i64;

    let a = &record_a.timestamps_ps;
    let b = &record_b.timestamps_ps;
    let mut counts = vec![0u64; n_bins];
    let mut lo = 0usize;
    for &t1 in a {
        let t1 = t1 as i64;
        while lo < b.len() && (b[lo] as i64) < t1 - window_ps {
            lo += 1;
        }
        for &t2 in &b[lo..] {
            let dt = t2 as i64 - t1;
            if dt >= window_ps {
                break;
            }
            let k = (dt as f64 / bw_ps).round() as i64;
            if k.abs() <= half_bins {
                counts[(k + half_bins) as usize] += 1;
            }
        }
    }

    let r1 = record_a.rate();
    let r2 = record_b.rate();
    let mut tau_centers = Vec::with_capacity(n_bins);
    let mut values = Vec::with_capacity(n_bins);
    let mut sigmas = Vec::with_capacity(n_bins);
    for (i, &c) in counts.iter().enumerate() {
        let tau = (i as i64 - half_bins) as f64 * bin_width;
        let expected_uncorrelated = r1 * r2 * bin_width * (duration - tau.abs()).max(bin_width);
        tau_centers.push(tau);
        values.push(c as f64 / expected_uncorrelated);
        sigmas.push((c.max(1) as f64).sqrt() / expected_uncorrelated);
    }

    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let zero = values[half_bins as usize];
    let zero_bin_anomaly = zero > 5.0 && zero > 10.0 * median.max(0.1);

    Ok(G2Histogram {
        tau_centers,
        values,
        sigmas,
        counts,
        bin_width,
        duration,
        rates: (r1, r2),
        zero_bin_anomaly,
    })
}

/// Fitted parameters of `1 - (1+b) exp(-l1 |tau|) + b exp(-l2 |tau|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Fit {
    /// Total decay rate mapped back through the drive, `lambda_anti / (1+S)` (rad/s).
    pub gamma_tot: f64,
    pub gamma_tot_sigma: f64,
    /// Antibunching recovery rate (1/s).
    pub lambda_anti: f64,
    pub lambda_anti_sigma: f64,
    /// Bunching amplitude, clamped to be non-negative.
    pub bunch_amplitude: f64,
    pub bunch_amplitude_sigma: f64,
    /// Bunching decay rate (1/s).
    pub bunch_rate: f64,
    pub bunch_rate_sigma: f64,
    /// `sqrt(chi^2 / dof)` of the weighted fit.
    pub residual_norm: f64,
    pub converged: bool,
    /// Bunching amplitude consistent with zero; `bunch_rate` is then meaningless.
    pub bunching_unconstrained: bool,
    /// The antibunching dip is narrower than a bin or the rate error exceeds
    /// the rate itself; `gamma_tot` is then meaningless.
    pub anti_unconstrained: bool,
}

/// Internal parameters: (ln l1, ln l2, b).
struct G2Model<'a> {
    hist: &'a G2Histogram,
}

impl LsqModel for G2Model<'_> {
    fn n_params(&self) -> usize {
        3
    }
    fn n_residuals(&self) -> usize {
        self.hist.values.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let (l1, l2, b) = (p[0].exp(), p[1].exp(), p[2]);
        for (i, ((&tau, &v), &s)) in self
            .hist
            .tau_centers
            .iter()
            .zip(&self.hist.values)
            .zip(&self.hist.sigmas)
            .enumerate()
        {
            let t = tau.abs();
            let model = 1.0 - (1.0 + b) * (-l1 * t).exp() + b * (-l2 * t).exp();
            out[i] = (v - model) / s;
        }
    }
    fn jacobian(&self, p: &[f64], out: &mut [f64]) {
        let (l1, l2, b) = (p[0].exp(), p[1].exp(), p[2]);
        for (i, (&tau, &s)) in self
            .hist
            .tau_centers
            .iter()
            .zip(&self.hist.sigmas)
            .enumerate()
        {
            let t = tau.abs();
            let e1 = (-l1 * t).exp();
            let e2 = (-l2 * t).exp();
            // Log-parameters for both rates: d/d ln l = l * d/d l.
            out[i * 3] = -((1.0 + b) * t * l1 * e1) / s;
            out[i * 3 + 1] = (b * t * l2 * e2) / s;
            out[i * 3 + 2] = -(-e1 + e2) / s;
        }
    }
}

/// Fits the three-level g2 model to a histogram.
///
/// `sat_param` is the saturation parameter of the drive during acquisition,
/// supplied by the caller; the antibunching rate maps to the total decay
/// rate as `gamma_tot = lambda_anti / (1 + S)`.
pub fn fit_g2(hist: &G2Histogram, sat_param: f64) -> Result<G2Fit, FitError> {
    if !(sat_param >= 0.0) {
        return Err(FitError::InvalidInput(format!(
            "sat_param must be non-negative, got {sat_param}"
        )));
    }
    if hist.values.len() < 8 {
        return Err(FitError::InsufficientData(format!(
            "need >= 8 bins, got {}",
            hist.values.len()
        )));
    }

    // Heuristics: plateau from the outer third, dip recovery time from the
    // first crossing of half the plateau, bunching from the plateau excess.
    let n = hist.values.len();
    let outer: Vec<f64> = hist
        .tau_centers
        .iter()
        .zip(&hist.values)
        .filter(|(t, _)| t.abs() > hist.tau_centers[n - 1].abs() * 0.67)
        .map(|(_, &v)| v)
        .collect();
    let plateau = outer.iter().sum::<f64>() / outer.len().max(1) as f64;
    let half = plateau * 0.5;
    let mut recovery = hist.bin_width * 2.0;
    for (t, v) in hist.tau_centers.iter().zip(&hist.values) {
        if *t >= 0.0 && *v >= half {
            recovery = t.max(hist.bin_width * 0.5);
            break;
        }
    }
    let l1_0 = std::f64::consts::LN_2 / recovery;
    let max_v = hist.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let b0 = (max_v - 1.0).clamp(0.0, 10.0) + 1e-3;
    let l2_0 = l1_0 / 50.0;

    let model = G2Model { hist };
    let (fit, _multimodal) = multistart(&model, &[l1_0.ln(), l2_0.ln(), b0]);
    if !fit.converged {
        return Err(FitError::NonConvergence(200));
    }

    let l1 = fit.params[0].exp();
    let l2 = fit.params[1].exp();
    let b = fit.params[2];
    let d = [l1, l2, 1.0];
    let sigma = |i: usize| (d[i] * d[i] * fit.covariance[i * 3 + i]).sqrt();
    let l1_sigma = sigma(0);
    let l2_sigma = sigma(1);
    let b_sigma = fit.covariance[2 * 3 + 2].sqrt();

    let bunching_unconstrained = b <= b_sigma || !b_sigma.is_finite();
    let anti_unconstrained =
        1.0 / l1 < 0.5 * hist.bin_width || l1_sigma >= l1 || !l1_sigma.is_finite();

    let dof = (n - 3).max(1) as f64;
    Ok(G2Fit {
        gamma_tot: l1 / (1.0 + sat_param),
        gamma_tot_sigma: l1_sigma / (1.0 + sat_param),
        lambda_anti: l1,
        lambda_anti_sigma: l1_sigma,
        bunch_amplitude: b.max(0.0),
        bunch_amplitude_sigma: b_sigma,
        bunch_rate: l2,
        bunch_rate_sigma: l2_sigma,
        residual_norm: (fit.cost / dof).sqrt(),
        converged: true,
        bunching_unconstrained,
        anti_unconstrained,
    })
}
