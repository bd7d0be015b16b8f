//! `zpl-qe analyze`: run the per-molecule pipeline over a simulated (or
//! equivalently formatted) dataset, writing the results table, a JSON report
//! with fit diagnostics, and optionally a score table against ground truth.

use rayon::prelude::*;
use serde::Serialize;
use zplqe_core::fitkit::{autocorrelation_histogram, fit_g2, G2Fit};
use zplqe_core::pipeline::{analyze_molecule, AnalyzeOptions, MoleculeResult};
use zplqe_core::simulator::{PhotonRecord, ScanMetadata};

use crate::config::{AnalyzeConfig, PhotonFormat};
use crate::error::CliError;
use crate::io::{self, DatasetManifest, DatasetMolecule, TruthManifest};

#[derive(Debug, Serialize)]
struct LineFitDiag {
    power_at_molecule_w: f64,
    amplitude_cps: f64,
    amplitude_sigma_cps: f64,
    fwhm_hz: f64,
    fwhm_sigma_hz: f64,
    center_hz: f64,
    residual_norm: f64,
    multimodal: bool,
}

#[derive(Debug, Serialize)]
struct MoleculeDiag {
    id: String,
    line_fits: Vec<LineFitDiag>,
    saturation_residual_norm: f64,
    saturation_multimodal: bool,
    dropped_powers_w: Vec<f64>,
    area_error: Option<String>,
    raster_distortion: bool,
    g2: Option<G2Diag>,
    /// The autocorrelation crosscheck is best-effort; a failure is recorded
    /// here without invalidating the saturation analysis.
    g2_error: Option<String>,
}

#[derive(Debug, Serialize)]
struct G2Diag {
    gamma_tot_rad_s: f64,
    gamma_tot_sigma_rad_s: f64,
    bunch_amplitude: f64,
    bunch_rate_hz: f64,
    residual_norm: f64,
    bunching_unconstrained: bool,
    anti_unconstrained: bool,
    /// Spectroscopic linewidth crosscheck: |g2_gamma - fit_gamma| / sigma.
    linewidth_crosscheck_pull: Option<f64>,
}

#[derive(Debug, Serialize)]
struct AnalyzeReport {
    n_molecules: usize,
    n_analyzed: usize,
    n_excluded: usize,
    failures: Vec<String>,
    diagnostics: Vec<MoleculeDiag>,
}

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

type MoleculeOutcome = (String, Result<(MoleculeResult, MoleculeDiag), CliError>);

fn load_photons(
    entry: &io::PhotonEntry,
) -> Result<(PhotonRecord, PhotonRecord), CliError> {
    Ok(match entry.format {
        PhotonFormat::Binary => (
            io::read_photons_binary(&entry.ch0, entry.duration_s, 0)?,
            io::read_photons_binary(&entry.ch1, entry.duration_s, 1)?,
        ),
        PhotonFormat::Csv => (
            io::read_photons_csv(&entry.ch0, entry.duration_s, 0)?,
            io::read_photons_csv(&entry.ch1, entry.duration_s, 1)?,
        ),
    })
}

fn analyze_one(
    config: &AnalyzeConfig,
    manifest: &DatasetManifest,
    mol: &DatasetMolecule,
) -> Result<(MoleculeResult, MoleculeDiag), CliError> {
    let chain = config.chain.to_chain()?;
    let env = config.environment.to_env()?;
    let scan = io::read_scan_csv(
        &mol.scan_csv,
        ScanMetadata {
            seed: mol.scan_seed,
            emitter_id: mol.id.clone(),
            lambda_zpl: mol.lambda_zpl_m,
            rng_algorithm: manifest.rng_algorithm.clone(),
        },
    )?;
    let raster = match (&mol.raster_csv, &mol.raster_meta) {
        (Some(path), Some(meta)) => Some(io::read_raster_csv(path, meta)?),
        _ => None,
    };
    let analysis = analyze_molecule(
        &scan,
        raster.as_ref(),
        &chain,
        &env,
        config.alpha,
        None,
        &AnalyzeOptions {
            bootstrap_resamples: config.bootstrap_resamples,
            bootstrap_seed: config.bootstrap_seed,
        },
    )?;

    let (g2, g2_error) = if config.use_photon_records {
        match &mol.photons {
            Some(entry) => {
                // Malformed photon files are fatal; a fit that cannot
                // converge on thin statistics is only a diagnostic gap.
                let (ch0, ch1) = load_photons(entry)?;
                match fit_photon_g2(&ch0, &ch1, entry, &analysis.result) {
                    Ok(fit) => (Some(fit), None),
                    Err(e) => (None, Some(e.to_string())),
                }
            }
            None => (None, None),
        }
    } else {
        (None, None)
    };

    let diag = MoleculeDiag {
        id: mol.id.clone(),
        line_fits: analysis
            .line_fits
            .iter()
            .map(|(p, lf)| LineFitDiag {
                power_at_molecule_w: *p,
                amplitude_cps: lf.amplitude,
                amplitude_sigma_cps: lf.amplitude_sigma(),
                fwhm_hz: lf.fwhm / TWO_PI,
                fwhm_sigma_hz: lf.fwhm_sigma() / TWO_PI,
                center_hz: lf.center / TWO_PI,
                residual_norm: lf.residual_norm,
                multimodal: lf.multimodal,
            })
            .collect(),
        saturation_residual_norm: analysis.saturation.residual_norm,
        saturation_multimodal: analysis.saturation.multimodal,
        dropped_powers_w: analysis.dropped_powers.clone(),
        area_error: analysis.area_error.clone(),
        raster_distortion: analysis.raster_distortion,
        g2,
        g2_error,
    };
    Ok((analysis.result, diag))
}

fn fit_photon_g2(
    ch0: &PhotonRecord,
    ch1: &PhotonRecord,
    entry: &io::PhotonEntry,
    result: &MoleculeResult,
) -> Result<G2Diag, zplqe_core::fitkit::FitError> {
    // Bin fine enough to resolve the antibunching dip implied by the fitted
    // linewidth, with a window that still catches slow bunching.
    let lambda_est = result.gamma_tot.value * (1.0 + entry.sat_param);
    let bin = (0.1 / lambda_est).clamp(1e-10, 1e-8);
    let max_tau = (entry.duration_s / 10.0).min(2000.0 * bin);
    let hist = autocorrelation_histogram(ch0, ch1, bin, max_tau)?;
    let fit: G2Fit = fit_g2(&hist, entry.sat_param)?;
    let sigma = fit
        .gamma_tot_sigma
        .hypot(result.gamma_tot.sigma)
        .max(f64::MIN_POSITIVE);
    let pull = (fit.gamma_tot - result.gamma_tot.value).abs() / sigma;
    Ok(G2Diag {
        gamma_tot_rad_s: fit.gamma_tot,
        gamma_tot_sigma_rad_s: fit.gamma_tot_sigma,
        bunch_amplitude: fit.bunch_amplitude,
        bunch_rate_hz: fit.bunch_rate,
        residual_norm: fit.residual_norm,
        bunching_unconstrained: fit.bunching_unconstrained,
        anti_unconstrained: fit.anti_unconstrained,
        linewidth_crosscheck_pull: (!fit.anti_unconstrained).then_some(pull),
    })
}

fn write_score_table(
    path: &std::path::Path,
    results: &[MoleculeResult],
    truth: &TruthManifest,
) -> Result<(), CliError> {
    let mut out = String::from(
        "id,qe_eff_counts,expected_qe_counts,abs_err_counts,qe_eff_power,expected_qe_power,abs_err_power\n",
    );
    for r in results {
        let Some(t) = truth.molecules.iter().find(|t| t.id == r.id) else {
            return Err(CliError::data(format!(
                "molecule {} missing from truth manifest",
                r.id
            )));
        };
        let qc = r.qe_eff_counts.value;
        let (qp, err_p) = match r.qe_eff_power {
            Some(m) => (
                m.value.to_string(),
                (m.value - t.expected_qe_power).abs().to_string(),
            ),
            None => (String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.id,
            qc,
            t.expected_qe_counts,
            (qc - t.expected_qe_counts).abs(),
            qp,
            t.expected_qe_power,
            err_p,
        ));
    }
    io::write_atomic(path, out.as_bytes())
}

pub fn run(config: &AnalyzeConfig, validate_schemas: bool) -> Result<(), CliError> {
    let manifest_path = config.input_dir.join("dataset.json");
    let manifest: DatasetManifest = io::read_json(&manifest_path)?;
    if manifest.molecules.is_empty() {
        return Err(CliError::data(format!(
            "{}: dataset lists no molecules",
            manifest_path.display()
        )));
    }
    std::fs::create_dir_all(&config.out_dir)?;
    log::info!(
        "analyzing {} molecule(s) from {}",
        manifest.molecules.len(),
        config.input_dir.display()
    );

    let outcomes: Vec<MoleculeOutcome> = manifest
        .molecules
        .par_iter()
        .map(|mol| (mol.id.clone(), analyze_one(config, &manifest, mol)))
        .collect();

    let mut results = Vec::new();
    let mut diagnostics = Vec::new();
    let mut failures = Vec::new();
    for (id, outcome) in outcomes {
        match outcome {
            Ok((r, d)) => {
                results.push(r);
                diagnostics.push(d);
            }
            Err(CliError::Data(m)) => return Err(CliError::Data(m)),
            Err(e) => {
                log::warn!("molecule {id}: {e}");
                failures.push(format!("{id}: {e}"));
            }
        }
    }
    if results.is_empty() {
        return Err(CliError::Numerical(format!(
            "no molecule could be analyzed ({} failures)",
            failures.len()
        )));
    }
    // Deterministic reduction order regardless of worker scheduling.
    results.sort_by(|a, b| a.id.cmp(&b.id));
    diagnostics.sort_by(|a, b| a.id.cmp(&b.id));

    let results_path = config.out_dir.join("results.csv");
    io::write_results_csv(&results_path, &results)?;
    let report = AnalyzeReport {
        n_molecules: manifest.molecules.len(),
        n_analyzed: results.len(),
        n_excluded: results.iter().filter(|r| r.excluded).count(),
        failures,
        diagnostics,
    };
    let report_path = config.out_dir.join("report.json");
    io::write_json(&report_path, &report)?;

    let mut score_path = None;
    if let Some(truth_file) = &config.truth_manifest {
        let truth: TruthManifest = io::read_json(truth_file)?;
        let path = config.out_dir.join("score.csv");
        write_score_table(&path, &results, &truth)?;
        score_path = Some(path);
    }

    if validate_schemas {
        let back = io::read_results_csv(&results_path)?;
        let _: serde_json::Value = io::read_json(&report_path)?;
        let mut checked = 2;
        if let Some(p) = &score_path {
            let text = std::fs::read_to_string(p)?;
            if !text.starts_with("id,qe_eff_counts") {
                return Err(CliError::data(format!("{}: bad score header", p.display())));
            }
            checked += 1;
        }
        if back.len() != results.len() {
            return Err(CliError::data("results round-trip length mismatch"));
        }
        println!("schema check: {checked} files OK");
    }

    println!(
        "analyzed {} of {} molecule(s) ({} excluded): {}",
        report.n_analyzed,
        report.n_molecules,
        report.n_excluded,
        results_path.display()
    );
    Ok(())
}
