//! Ensemble statistics over many molecules and the spectral-factor
//! calibration that brings the two QE methods into agreement.

use serde::{Deserialize, Serialize};

use crate::physics::{DetectionChain, EnvironmentParams};

use super::{qe_method_saturation_counts, qe_method_saturation_power, MoleculeResult, PipelineError};

/// Five-number summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

fn quantiles(values: &[f64]) -> Option<Quantiles> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |q: f64| v[((v.len() - 1) as f64 * q).round() as usize];
    Some(Quantiles {
        min: v[0],
        q25: at(0.25),
        median: at(0.5),
        q75: at(0.75),
        max: v[v.len() - 1],
    })
}

/// Pearson correlation; `None` when either side has zero variance.
fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Ensemble summary over non-excluded molecules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub n_molecules: usize,
    pub n_excluded: usize,
    pub excluded_ids: Vec<String>,
    /// Correlation between F_inf and the inverse saturation intensity;
    /// `None` when undefined (degenerate data or too few raster maps).
    pub corr_finf_isat_inv: Option<f64>,
    /// Correlation between the linewidth and the counts-method QE.
    pub corr_gamma_qe_counts: Option<f64>,
    pub qe_counts_quantiles: Option<Quantiles>,
    pub qe_power_quantiles: Option<Quantiles>,
    /// `(qe_counts, qe_power)` along the perfect-QE curve, theta from 0 to pi/2.
    pub reference_curve_qe1: Vec<(f64, f64)>,
    /// `(qe_counts, qe_power)` for a horizontal dipole, QE from 0 to 1.
    pub reference_curve_theta0: Vec<(f64, f64)>,
    /// Filled in by callers that run [`calibrate_spectral_factor`].
    pub calibration: Option<SpectralCalibration>,
}

/// Reference curve for a perfect emitter (QE = 1) at varying dipole angle:
/// method 1 gives `eta_coll(theta)/eta_coll(0)`, method 2 gives `cos^2`.
pub fn qe1_reference_curve(chain: &DetectionChain, points: usize) -> Vec<(f64, f64)> {
    let ratio = chain.eta_coll_v / chain.eta_coll_h;
    (0..points)
        .map(|i| {
            let theta = std::f64::consts::FRAC_PI_2 * i as f64 / (points - 1) as f64;
            let (s, c) = theta.sin_cos();
            let cos2 = c * c;
            (cos2 + ratio * s * s, cos2)
        })
        .collect()
}

/// Ensemble statistics; needs at least 3 non-excluded molecules.
pub fn ensemble_report(
    results: &[MoleculeResult],
    chain: &DetectionChain,
) -> Result<EnsembleReport, PipelineError> {
    let kept: Vec<&MoleculeResult> = results.iter().filter(|r| !r.excluded).collect();
    if kept.len() < 3 {
        return Err(PipelineError::InsufficientData(format!(
            "need >= 3 non-excluded molecules, got {}",
            kept.len()
        )));
    }

    let with_isat: Vec<&&MoleculeResult> =
        kept.iter().filter(|r| r.i_sat_inv.is_some()).collect();
    let corr_finf_isat_inv = pearson(
        &with_isat.iter().map(|r| r.f_inf.value).collect::<Vec<_>>(),
        &with_isat
            .iter()
            .map(|r| r.i_sat_inv.unwrap().value)
            .collect::<Vec<_>>(),
    );
    let corr_gamma_qe_counts = pearson(
        &kept.iter().map(|r| r.gamma_tot.value).collect::<Vec<_>>(),
        &kept
            .iter()
            .map(|r| r.qe_eff_counts.value)
            .collect::<Vec<_>>(),
    );

    let qe_counts_quantiles =
        quantiles(&kept.iter().map(|r| r.qe_eff_counts.value).collect::<Vec<_>>());
    let qe_power_quantiles = quantiles(
        &kept
            .iter()
            .filter_map(|r| r.qe_eff_power.map(|m| m.value))
            .collect::<Vec<_>>(),
    );

    let reference_curve_theta0 = (0..101)
        .map(|i| {
            let q = i as f64 / 100.0;
            (q, q)
        })
        .collect();

    Ok(EnsembleReport {
        n_molecules: results.len(),
        n_excluded: results.len() - kept.len(),
        excluded_ids: results
            .iter()
            .filter(|r| r.excluded)
            .map(|r| r.id.clone())
            .collect(),
        corr_finf_isat_inv,
        corr_gamma_qe_counts,
        qe_counts_quantiles,
        qe_power_quantiles,
        reference_curve_qe1: qe1_reference_curve(chain, 101),
        reference_curve_theta0,
        calibration: None,
    })
}

/// Outcome of the (alpha, kappa) grid search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralCalibration {
    pub alpha: f64,
    pub kappa: f64,
    /// Median absolute log-ratio of the two methods at the optimum.
    pub score: f64,
}

/// Grid search for the branching ratio and spectral detection factor that
/// best reconcile the two methods, scored by the median absolute log-ratio
/// of `qe_counts / qe_power` across molecules. Ties break toward smaller
/// alpha, then smaller kappa.
///
/// Both methods are recomputed from the raw per-molecule fits
/// `(f_inf, p_sat, a_eff, gamma_tot, lambda)` at every grid point; molecules
/// without a raster map are skipped. Needs at least 5 usable molecules.
pub fn calibrate_spectral_factor(
    results: &[MoleculeResult],
    chain: &DetectionChain,
    env: &EnvironmentParams,
    alpha_grid: &[f64],
    kappa_grid: &[f64],
) -> Result<SpectralCalibration, PipelineError> {
    let usable: Vec<&MoleculeResult> = results
        .iter()
        .filter(|r| !r.excluded && r.a_eff.is_some())
        .collect();
    if usable.len() < 5 {
        return Err(PipelineError::InsufficientData(format!(
            "need >= 5 molecules with both methods, got {}",
            usable.len()
        )));
    }
    if alpha_grid.is_empty() || kappa_grid.is_empty() {
        return Err(PipelineError::InsufficientData(
            "empty calibration grid".into(),
        ));
    }

    let mut best: Option<SpectralCalibration> = None;
    for &alpha in alpha_grid {
        for &kappa in kappa_grid {
            let trial_chain = DetectionChain { kappa, ..*chain };
            let mut log_ratios: Vec<f64> = usable
                .iter()
                .map(|r| {
                    let qc = qe_method_saturation_counts(
                        r.f_inf.value,
                        r.gamma_tot.value,
                        alpha,
                        &trial_chain,
                    );
                    let qp = qe_method_saturation_power(
                        r.p_sat.value,
                        r.a_eff.unwrap().value,
                        r.gamma_tot.value,
                        r.lambda_zpl,
                        env,
                        alpha,
                    );
                    (qc / qp).ln().abs()
                })
                .collect();
            log_ratios.sort_by(f64::total_cmp);
            let score = log_ratios[log_ratios.len() / 2];
            let candidate = SpectralCalibration { alpha, kappa, score };
            let better = match &best {
                None => true,
                Some(b) => {
                    score < b.score
                        || (score == b.score
                            && (alpha < b.alpha || (alpha == b.alpha && kappa < b.kappa)))
                }
            };
            if better {
                best = Some(candidate);
            }
        }
    }
    Ok(best.expect("non-empty grid"))
}
