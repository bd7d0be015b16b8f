//! `zpl-qe report`: scatter plots of the ensemble (SVG plus the plotted
//! points as CSV) and a text summary with the calibrated spectral factors.

use std::fmt::Write as _;
use std::path::Path;

use zplqe_core::pipeline::{
    calibrate_spectral_factor, ensemble_report, qe1_reference_curve, EnsembleReport,
    MoleculeResult, PipelineError,
};

use crate::config::ReportConfig;
use crate::error::CliError;
use crate::io::{self, read_results_csv};
use crate::svg::{Plot, Series};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn scatter(label: &str, points: Vec<(f64, f64)>, color: &str) -> Series {
    Series {
        label: label.to_string(),
        points,
        color: color.to_string(),
        line: false,
    }
}

fn curve(label: &str, points: Vec<(f64, f64)>, color: &str) -> Series {
    Series {
        label: label.to_string(),
        points,
        color: color.to_string(),
        line: true,
    }
}

fn write_plot(dir: &Path, stem: &str, plot: &Plot) -> Result<(), CliError> {
    io::write_atomic(&dir.join(format!("{stem}.svg")), plot.render().as_bytes())?;
    io::write_atomic(
        &dir.join(format!("{stem}_points.csv")),
        plot.points_csv().as_bytes(),
    )?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.4}"),
        None => "n/a".to_string(),
    }
}

pub fn run(config: &ReportConfig, validate_schemas: bool) -> Result<(), CliError> {
    let results = read_results_csv(&config.results_csv)?;
    if results.is_empty() {
        return Err(CliError::data(format!(
            "{}: results file has no molecules",
            config.results_csv.display()
        )));
    }
    std::fs::create_dir_all(&config.out_dir)?;
    let chain = config.chain.to_chain()?;
    let env = config.environment.to_env()?;
    let kept: Vec<&MoleculeResult> = results.iter().filter(|r| !r.excluded).collect();

    // Fig. 3(a) analogue: saturated count rate vs inverse saturation intensity.
    let fig3a_points: Vec<(f64, f64)> = kept
        .iter()
        .filter_map(|r| r.i_sat_inv.map(|i| (i.value, r.f_inf.value)))
        .collect();
    let fig3a = Plot {
        title: "Saturated counts vs inverse saturation intensity".into(),
        x_label: "I_sat^-1 = A_eff / P_sat (m^2/W)".into(),
        y_label: "F_det(inf) (counts/s)".into(),
        log_x: true,
        log_y: true,
        series: vec![scatter("molecules", fig3a_points, "steelblue")],
    };
    write_plot(&config.out_dir, "fig3a", &fig3a)?;

    // Fig. 3(b) analogue: the two effective QE values with reference curves.
    let fig3b_points: Vec<(f64, f64)> = kept
        .iter()
        .filter_map(|r| r.qe_eff_power.map(|q| (r.qe_eff_counts.value, q.value)))
        .collect();
    let qe1_curve = qe1_reference_curve(&chain, 101);
    let diag: Vec<(f64, f64)> = (0..101).map(|i| (i as f64 / 100.0, i as f64 / 100.0)).collect();
    let fig3b = Plot {
        title: "Effective QE: counts method vs power method".into(),
        x_label: "QE x eta_coll(theta)/eta_coll(0)".into(),
        y_label: "QE x cos^2(theta)".into(),
        log_x: false,
        log_y: false,
        series: vec![
            scatter("molecules", fig3b_points, "steelblue"),
            curve("QE = 1, varying theta", qe1_curve, "black"),
            curve("theta = 0, varying QE", diag, "gray"),
        ],
    };
    write_plot(&config.out_dir, "fig3b", &fig3b)?;

    // Fig. 3(c) analogue: linewidth vs effective QE.
    let fig3c_points: Vec<(f64, f64)> = kept
        .iter()
        .map(|r| (r.gamma_tot.value / TWO_PI / 1e6, r.qe_eff_counts.value))
        .collect();
    let fig3c = Plot {
        title: "Linewidth vs effective QE".into(),
        x_label: "FWHM linewidth (MHz)".into(),
        y_label: "QE x eta_coll(theta)/eta_coll(0)".into(),
        log_x: false,
        log_y: false,
        series: vec![scatter("molecules", fig3c_points, "steelblue")],
    };
    write_plot(&config.out_dir, "fig3c", &fig3c)?;

    // Text summary. A small ensemble still produces plots; correlations are
    // then reported as not-a-value.
    let mut report: Option<EnsembleReport> = match ensemble_report(&results, &chain) {
        Ok(r) => Some(r),
        Err(PipelineError::InsufficientData(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let mut summary = String::new();
    let _ = writeln!(summary, "molecules analyzed: {}", results.len());
    let _ = writeln!(
        summary,
        "excluded (qe > 1): {}",
        results.iter().filter(|r| r.excluded).count()
    );
    match &report {
        Some(r) => {
            let _ = writeln!(
                summary,
                "corr(F_inf, I_sat^-1): {}",
                fmt_opt(r.corr_finf_isat_inv)
            );
            let _ = writeln!(
                summary,
                "corr(linewidth, qe_counts): {}",
                fmt_opt(r.corr_gamma_qe_counts)
            );
            if let Some(q) = &r.qe_counts_quantiles {
                let _ = writeln!(
                    summary,
                    "qe_counts quantiles: min {:.4} / q25 {:.4} / median {:.4} / q75 {:.4} / max {:.4}",
                    q.min, q.q25, q.median, q.q75, q.max
                );
            }
            if let Some(q) = &r.qe_power_quantiles {
                let _ = writeln!(
                    summary,
                    "qe_power quantiles: min {:.4} / q25 {:.4} / median {:.4} / q75 {:.4} / max {:.4}",
                    q.min, q.q25, q.median, q.q75, q.max
                );
            }
        }
        None => {
            let _ = writeln!(summary, "corr(F_inf, I_sat^-1): n/a (fewer than 3 molecules)");
            let _ = writeln!(summary, "corr(linewidth, qe_counts): n/a");
        }
    }
    if config.calibrate {
        match calibrate_spectral_factor(
            &results,
            &chain,
            &env,
            &config.alpha_grid,
            &config.kappa_grid,
        ) {
            Ok(cal) => {
                let _ = writeln!(
                    summary,
                    "calibrated (alpha, kappa): ({}, {}) with median |log ratio| {:.4}",
                    cal.alpha, cal.kappa, cal.score
                );
                if let Some(r) = report.as_mut() {
                    r.calibration = Some(cal);
                }
            }
            Err(PipelineError::InsufficientData(m)) => {
                let _ = writeln!(summary, "calibration skipped: {m}");
            }
            Err(e) => return Err(e.into()),
        }
    }
    let summary_path = config.out_dir.join("summary.txt");
    io::write_atomic(&summary_path, summary.as_bytes())?;
    if let Some(r) = &report {
        io::write_json(&config.out_dir.join("ensemble.json"), r)?;
    }

    if validate_schemas {
        let mut checked = 1usize;
        for stem in ["fig3a", "fig3b", "fig3c"] {
            let svg = std::fs::read_to_string(config.out_dir.join(format!("{stem}.svg")))?;
            if !svg.starts_with("<svg") || !svg.trim_end().ends_with("</svg>") {
                return Err(CliError::data(format!("{stem}.svg is not well-formed")));
            }
            let csv = std::fs::read_to_string(config.out_dir.join(format!("{stem}_points.csv")))?;
            if !csv.starts_with("series,x,y") {
                return Err(CliError::data(format!("{stem}_points.csv: bad header")));
            }
            checked += 2;
        }
        println!("schema check: {checked} files OK");
    }

    print!("{summary}");
    println!("report written to {}", config.out_dir.display());
    Ok(())
}
