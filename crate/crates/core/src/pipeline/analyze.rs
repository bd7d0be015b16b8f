//! Per-molecule analysis: dead-time correction, line fits, saturation fit,
//! effective area, and both effective-QE values with propagated
//! uncertainties.

use serde::{Deserialize, Serialize};

use crate::fitkit::{
    bootstrap_uncertainty, fit_lorentzian, fit_saturation, FitError, LineFit, SaturationFit,
    ScanPoint,
};
use crate::physics::{self, DetectionChain, EnvironmentParams};
use crate::simulator::{RasterMap, ScanSeries};

use super::area::{effective_area_with_uncertainty, locate_molecule};
use super::{
    qe_method_saturation_counts, qe_method_saturation_power, Measured, MoleculeResult,
    PipelineError,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOptions {
    /// Case-resampling bootstrap size for the σ cross-check; 0 disables it.
    pub bootstrap_resamples: usize,
    pub bootstrap_seed: u64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            bootstrap_resamples: 200,
            bootstrap_seed: 0x5eed,
        }
    }
}

/// Result plus fit diagnostics for one molecule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoleculeAnalysis {
    pub result: MoleculeResult,
    /// `(power_at_molecule_w, line_fit)` per usable power.
    pub line_fits: Vec<(f64, LineFit)>,
    pub saturation: SaturationFit,
    /// Source powers whose line fit failed and were dropped.
    pub dropped_powers: Vec<f64>,
    /// Raster-side problem that invalidated the power method, if any.
    pub area_error: Option<String>,
    /// The raster map itself reported saturation distortion.
    pub raster_distortion: bool,
}

/// Dead-time-corrected rate points for one power slice.
fn correct_slice(
    entries: &[&crate::simulator::ScanEntry],
    tau_dead: f64,
) -> Result<Vec<ScanPoint>, PipelineError> {
    let mut points = Vec::with_capacity(entries.len());
    for e in entries {
        let measured = e.counts / e.dwell_time;
        let corrected = physics::apd_correct_rate(measured, tau_dead)?;
        // d n / d m = 1 / (1 - m tau)^2 scales the Poisson error bar.
        let derivative = 1.0 / (1.0 - measured * tau_dead).powi(2);
        let sigma = e.counts.max(1.0).sqrt() / e.dwell_time * derivative;
        points.push(ScanPoint {
            detuning: e.detuning,
            rate: corrected,
            sigma,
        });
    }
    Ok(points)
}

struct QePropagation {
    qe_counts: Measured,
    qe_power: Option<Measured>,
    cross_cov: f64,
}

/// First-order propagation through both QE formulas. Method 1 is `c * F/g`,
/// method 2 is `c' * A * g / P`; the shared saturation-fit covariance
/// couples them through `g` and `(F, P)`.
fn propagate_qe(
    sat: &SaturationFit,
    a_eff: Option<Measured>,
    alpha: f64,
    lambda_zpl: f64,
    chain: &DetectionChain,
    env: &EnvironmentParams,
) -> QePropagation {
    let f = sat.f_inf;
    let p = sat.p_sat;
    let g = sat.gamma_tot0;
    let cov = &sat.covariance;
    let rv = |i: usize, x: f64| cov[i][i] / (x * x);
    let rc = |i: usize, j: usize, x: f64, y: f64| cov[i][j] / (x * y);

    let qe_c_val = qe_method_saturation_counts(f, g, alpha, chain);
    // ln qe_c = ln F - ln g + const
    let qe_c_relvar = (rv(0, f) + rv(2, g) - 2.0 * rc(0, 2, f, g)).max(0.0);
    let qe_counts = Measured::new(qe_c_val, qe_c_val * qe_c_relvar.sqrt());

    let (qe_power, cross_cov) = match a_eff {
        Some(a) => {
            let qe_p_val = qe_method_saturation_power(p, a.value, g, lambda_zpl, env, alpha);
            // ln qe_p = ln A + ln g - ln P + const
            let qe_p_relvar = (a.rel_var() + rv(2, g) + rv(1, p) - 2.0 * rc(1, 2, p, g)).max(0.0);
            // Cov(ln qe_c, ln qe_p) = Cov(lnF,lng) - Cov(lnF,lnP) - Var(lng) + Cov(lng,lnP)
            let cross_rel = rc(0, 2, f, g) - rc(0, 1, f, p) - rv(2, g) + rc(2, 1, g, p);
            (
                Some(Measured::new(qe_p_val, qe_p_val * qe_p_relvar.sqrt())),
                qe_c_val * qe_p_val * cross_rel,
            )
        }
        None => (None, 0.0),
    };
    QePropagation {
        qe_counts,
        qe_power,
        cross_cov,
    }
}

/// Full per-molecule workflow.
///
/// Scan counts are dead-time corrected, each power is line-fitted, the
/// saturation fit yields `(F_inf, P_sat, gamma_tot)`, and the raster map (if
/// present) yields the effective area; the two effective-QE values follow
/// with first-order uncertainties cross-checked by bootstrap (the larger σ
/// is reported). A molecule whose effective QE exceeds 1 beyond one σ is
/// marked excluded rather than dropped.
///
/// `mol_position` overrides the automatic peak localization on the raster.
pub fn analyze_molecule(
    scan: &ScanSeries,
    raster: Option<&RasterMap>,
    chain: &DetectionChain,
    env: &EnvironmentParams,
    alpha: f64,
    mol_position: Option<(f64, f64)>,
    opts: &AnalyzeOptions,
) -> Result<MoleculeAnalysis, PipelineError> {
    scan.validate().map_err(|e| {
        PipelineError::Fit(FitError::InvalidInput(format!("scan series: {e}")))
    })?;

    // Per-power Lorentzian fits on dead-time-corrected rates.
    let mut line_fits: Vec<(f64, LineFit)> = Vec::new();
    let mut dropped = Vec::new();
    for power in scan.powers() {
        if !(power > 0.0) {
            continue; // dark rows carry no line to fit
        }
        let slice = scan.slice_at_power(power);
        let points = correct_slice(&slice, chain.tau_dead)?;
        match fit_lorentzian(&points) {
            Ok(fit) => line_fits.push((chain.eta_exc * power, fit)),
            Err(_) => dropped.push(power),
        }
    }
    if line_fits.len() < 4 {
        return Err(PipelineError::InsufficientData(format!(
            "only {} of {} powers produced a line fit",
            line_fits.len(),
            line_fits.len() + dropped.len()
        )));
    }

    let saturation = fit_saturation(&line_fits)?;

    // Effective area from the raster, when available.
    let mut area_error = None;
    let mut raster_distortion = false;
    let a_eff = match raster {
        Some(map) => {
            raster_distortion = map.distortion_warning;
            let pos = mol_position.unwrap_or_else(|| locate_molecule(map));
            match effective_area_with_uncertainty(map, pos) {
                Ok((a, s)) => Some(Measured::new(a, s)),
                Err(e) => {
                    area_error = Some(e.to_string());
                    None
                }
            }
        }
        None => None,
    };

    let prop = propagate_qe(&saturation, a_eff, alpha, scan.metadata.lambda_zpl, chain, env);
    let mut qe_counts = prop.qe_counts;
    let mut qe_power = prop.qe_power;

    // Bootstrap cross-check over the per-power line fits.
    if opts.bootstrap_resamples > 0 {
        let a_fixed = a_eff.map(|a| a.value).unwrap_or(1e-12);
        let lambda = scan.metadata.lambda_zpl;
        let chain_c = *chain;
        let env_c = *env;
        let fit_fn = |data: &[(f64, LineFit)]| -> Result<Vec<f64>, FitError> {
            let s = fit_saturation(data)?;
            Ok(vec![
                qe_method_saturation_counts(s.f_inf, s.gamma_tot0, alpha, &chain_c),
                qe_method_saturation_power(s.p_sat, a_fixed, s.gamma_tot0, lambda, &env_c, alpha),
            ])
        };
        if let Ok(boot) = bootstrap_uncertainty(
            &line_fits,
            fit_fn,
            opts.bootstrap_resamples,
            opts.bootstrap_seed,
        ) {
            qe_counts.sigma = qe_counts.sigma.max(boot[0]);
            if let (Some(qp), Some(a)) = (qe_power.as_mut(), a_eff) {
                // Add the (independent) area error to the bootstrap spread.
                let boot_total = (boot[1] * boot[1] + (qp.value * qp.value) * a.rel_var()).sqrt();
                qp.sigma = qp.sigma.max(boot_total);
            }
        }
    }

    let i_sat_inv = a_eff.map(|a| {
        let v = a.value / saturation.p_sat;
        let rel = (a.rel_var() + saturation.p_sat_sigma().powi(2) / saturation.p_sat.powi(2))
            .max(0.0)
            .sqrt();
        Measured::new(v, v * rel)
    });

    // Exclusion rule: effective QE above 1 beyond one sigma on either method.
    let mut excluded = false;
    let mut exclusion_reason = None;
    if qe_counts.value - 1.0 > qe_counts.sigma
        || qe_power
            .map(|q| q.value - 1.0 > q.sigma)
            .unwrap_or(false)
    {
        excluded = true;
        exclusion_reason = Some("qe>1".to_string());
    }

    let result = MoleculeResult {
        id: scan.metadata.emitter_id.clone(),
        lambda_zpl: scan.metadata.lambda_zpl,
        f_inf: Measured::new(saturation.f_inf, saturation.f_inf_sigma()),
        p_sat: Measured::new(saturation.p_sat, saturation.p_sat_sigma()),
        gamma_tot: Measured::new(saturation.gamma_tot0, saturation.gamma_tot0_sigma()),
        a_eff,
        i_sat_inv,
        qe_eff_counts: qe_counts,
        qe_eff_power: qe_power,
        qe_cross_cov: prop.cross_cov,
        excluded,
        exclusion_reason,
    };
    Ok(MoleculeAnalysis {
        result,
        line_fits,
        saturation,
        dropped_powers: dropped,
        area_error,
        raster_distortion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::EmitterParams;
    use crate::simulator::{
        simulate_raster, simulate_scan_series, BeamProfile, NoiseMode, RasterGrid, ScanPlan,
    };
    use approx::assert_relative_eq;

    fn emitter(qe: f64, theta: f64) -> EmitterParams {
        let gamma_tot = 1.25e8;
        EmitterParams {
            gamma_r: qe * gamma_tot,
            gamma_nr: (1.0 - qe) * gamma_tot,
            lambda_zpl: 743.7e-9,
            alpha: 0.33,
            theta,
            phi_isc: 0.0,
            tau_triplet: 1e-5,
        }
    }

    fn chain() -> DetectionChain {
        DetectionChain {
            eta_coll_h: 0.09,
            eta_coll_v: 0.01,
            eta_tr: 0.69,
            eta_det: 0.55,
            kappa: 0.8,
            eta_exc: 0.5,
            tau_dead: 50e-9,
            background_rate: 150.0,
        }
    }

    fn env() -> EnvironmentParams {
        EnvironmentParams { n_host: 1.6 }
    }

    fn beam() -> BeamProfile {
        BeamProfile {
            waist: 1.2e-6,
            center: (0.0, 0.0),
            power_at_sample: 0.0,
        }
    }

    fn synth_molecule(
        em: &EmitterParams,
        noise: NoiseMode,
        seed: u64,
    ) -> (ScanSeries, RasterMap) {
        let b = beam();
        let ch = chain();
        let ev = env();
        let p_sat =
            physics::saturation_power(em, b.effective_area(), &ev, em.theta).unwrap();
        let powers: Vec<f64> = (0..10)
            .map(|i| 0.02 * (2000.0_f64).powf(i as f64 / 9.0) * p_sat / ch.eta_exc)
            .collect();
        let plan =
            ScanPlan::adaptive(&powers, em, &ch, &ev, &b, (0.0, 0.0), 6.0, 61).unwrap();
        let scan = simulate_scan_series(
            em, &ch, &ev, &b,
            (0.0, 0.0),
            &plan,
            0.02,
            noise,
            seed,
            "mol",
        )
        .unwrap();
        let raster_beam = BeamProfile {
            power_at_sample: 0.03 * p_sat,
            ..b
        };
        let grid = RasterGrid {
            pitch: b.waist / 8.0,
            nx: 41,
            ny: 41,
            origin: (-20.0 * b.waist / 8.0, -20.0 * b.waist / 8.0),
        };
        let raster = simulate_raster(
            em,
            &ch,
            &ev,
            &raster_beam,
            (0.0, 0.0),
            &grid,
            0.05,
            noise,
            seed + 1,
        )
        .unwrap();
        (scan, raster)
    }

    #[test]
    fn noiseless_horizontal_molecule_recovers_qe_exactly() {
        let em = emitter(0.8, 0.0);
        let (scan, raster) = synth_molecule(&em, NoiseMode::Noiseless, 1);
        let analysis = analyze_molecule(
            &scan,
            Some(&raster),
            &chain(),
            &env(),
            em.alpha,
            Some((0.0, 0.0)),
            &AnalyzeOptions {
                bootstrap_resamples: 0,
                ..Default::default()
            },
        )
        .unwrap();
        let r = &analysis.result;
        // theta = 0, no ISC: both methods equal the true QE up to the
        // discretization of the raster integral (~1 %).
        assert_relative_eq!(r.qe_eff_counts.value, 0.8, max_relative = 1e-4);
        assert_relative_eq!(r.qe_eff_power.unwrap().value, 0.8, max_relative = 2e-2);
        assert!(!r.excluded);
    }

    #[test]
    fn noisy_molecule_within_five_percent() {
        let em = emitter(0.8, 0.0);
        let (scan, raster) = synth_molecule(&em, NoiseMode::Poisson, 12);
        let analysis = analyze_molecule(
            &scan,
            Some(&raster),
            &chain(),
            &env(),
            em.alpha,
            None,
            &AnalyzeOptions::default(),
        )
        .unwrap();
        let r = &analysis.result;
        assert_relative_eq!(r.qe_eff_counts.value, 0.8, max_relative = 5e-2);
        assert_relative_eq!(r.qe_eff_power.unwrap().value, 0.8, max_relative = 5e-2);
        assert!(r.qe_eff_counts.sigma > 0.0);
    }

    #[test]
    fn missing_raster_gives_partial_result() {
        let em = emitter(0.7, 0.0);
        let (scan, _) = synth_molecule(&em, NoiseMode::Noiseless, 3);
        let analysis = analyze_molecule(
            &scan,
            None,
            &chain(),
            &env(),
            em.alpha,
            None,
            &AnalyzeOptions {
                bootstrap_resamples: 0,
                ..Default::default()
            },
        )
        .unwrap();
        let r = &analysis.result;
        assert!(r.qe_eff_power.is_none());
        assert!(r.a_eff.is_none());
        assert!(r.i_sat_inv.is_none());
        assert_relative_eq!(r.qe_eff_counts.value, 0.7, max_relative = 1e-4);
    }

    #[test]
    fn inflated_collection_is_excluded() {
        // Generate with a planar-antenna-like boost (collection 1.5x better
        // than calibration assumes): the counts method lands above 1.
        let em = emitter(0.95, 0.0);
        let mut generation_chain = chain();
        generation_chain.eta_coll_h = 0.09 * 1.5;
        let b = beam();
        let ev = env();
        let p_sat =
            physics::saturation_power(&em, b.effective_area(), &ev, 0.0).unwrap();
        let powers: Vec<f64> = (0..10)
            .map(|i| 0.02 * (2000.0_f64).powf(i as f64 / 9.0) * p_sat / 0.5)
            .collect();
        let plan = ScanPlan::adaptive(
            &powers,
            &em,
            &generation_chain,
            &ev,
            &b,
            (0.0, 0.0),
            6.0,
            61,
        )
        .unwrap();
        let scan = simulate_scan_series(
            &em,
            &generation_chain,
            &ev,
            &b,
            (0.0, 0.0),
            &plan,
            0.02,
            NoiseMode::Noiseless,
            4,
            "antenna",
        )
        .unwrap();
        // Analyze with the nominal calibration.
        let analysis = analyze_molecule(
            &scan,
            None,
            &chain(),
            &env(),
            em.alpha,
            None,
            &AnalyzeOptions {
                bootstrap_resamples: 0,
                ..Default::default()
            },
        )
        .unwrap();
        let r = &analysis.result;
        assert!(r.qe_eff_counts.value > 1.0);
        assert!(r.excluded);
        assert_eq!(r.exclusion_reason.as_deref(), Some("qe>1"));
    }
}
