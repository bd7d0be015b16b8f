//! End-to-end consistency of simulate -> fit -> extract on synthetic data
//! with known ground truth.

mod common;

use common::*;
use zplqe_core::physics;
use zplqe_core::pipeline::{
    analyze_molecule, calibrate_spectral_factor, ensemble_report, AnalyzeOptions,
};
use zplqe_core::simulator::NoiseMode;

fn no_bootstrap() -> AnalyzeOptions {
    AnalyzeOptions {
        bootstrap_resamples: 0,
        ..Default::default()
    }
}

#[test]
fn noiseless_scan_fit_recovers_generator_parameters() {
    // Poisson replaced by the mean: the joint fit must land on the generator
    // values to 1e-6 relative.
    let mut chain = paper_chain();
    chain.background_rate = 80.0;
    let em = emitter(0.8, 0.0, 1.25e8, 0.0, 1e-5);
    let env = environment();
    let b = beam();
    let scenario = measure_molecule(&em, &chain, NoiseMode::Noiseless, 1, "noiseless");
    let analysis = analyze_molecule(
        &scenario.scan,
        None,
        &chain,
        &env,
        em.alpha,
        None,
        &no_bootstrap(),
    )
    .unwrap();

    let p_sat_true = physics::saturation_power(&em, b.effective_area(), &env, 0.0).unwrap();
    let f_inf_true = physics::total_detection_efficiency(&em, &chain) * em.gamma_r / 2.0;
    let sat = &analysis.saturation;
    assert!(
        (sat.p_sat / p_sat_true - 1.0).abs() < 1e-6,
        "P_sat {} vs {}",
        sat.p_sat,
        p_sat_true
    );
    assert!(
        (sat.f_inf / f_inf_true - 1.0).abs() < 1e-6,
        "F_inf {} vs {}",
        sat.f_inf,
        f_inf_true
    );
    assert!(
        (sat.gamma_tot0 / em.gamma_tot() - 1.0).abs() < 1e-6,
        "gamma {} vs {}",
        sat.gamma_tot0,
        em.gamma_tot()
    );
}

#[test]
fn method_consistency_identity_across_angles() {
    // Noiseless, shelving off: qe_counts / qe_power must equal
    // [cos^2 + (etaV/etaH) sin^2] / cos^2 to 1e-6 relative.
    let mut chain = paper_chain();
    chain.background_rate = 0.0;
    let env = environment();
    for (i, theta_deg) in [0.0_f64, 30.0, 60.0, 80.0].iter().enumerate() {
        let theta = theta_deg.to_radians();
        let em = emitter(0.85, theta, 1.3e8, 0.0, 1e-5);
        let scenario =
            measure_molecule_at(&em, &chain, NoiseMode::Noiseless, 10 + i as u64, "id", 1e-7);
        let analysis = analyze_molecule(
            &scenario.scan,
            Some(&scenario.raster),
            &chain,
            &env,
            em.alpha,
            Some(scenario.mol_position),
            &no_bootstrap(),
        )
        .unwrap();
        let r = &analysis.result;
        let ratio = r.qe_eff_counts.value / r.qe_eff_power.unwrap().value;
        let (s, c) = theta.sin_cos();
        let expected =
            (c * c + (chain.eta_coll_v / chain.eta_coll_h) * s * s) / (c * c);
        assert!(
            (ratio / expected - 1.0).abs() < 1e-6,
            "theta={theta_deg} deg: ratio {ratio:.9} vs expected {expected:.9}"
        );
    }
}

#[test]
fn lower_bound_property_with_noise() {
    // Both effective QE values sit at or below the true QE (within fit
    // scatter), with equality at theta = 0.
    let chain = paper_chain();
    let env = environment();
    let cases = [
        (0.95, 0.0_f64),
        (0.9, 0.5),
        (0.7, 1.0),
        (0.6, 1.3),
    ];
    for (i, (qe, theta)) in cases.iter().enumerate() {
        let em = emitter(*qe, *theta, 1.25e8, 1e-6, 1e-5);
        let scenario = measure_molecule(&em, &chain, NoiseMode::Poisson, 100 + i as u64, "lb");
        let analysis = analyze_molecule(
            &scenario.scan,
            Some(&scenario.raster),
            &chain,
            &env,
            em.alpha,
            None,
            &AnalyzeOptions::default(),
        )
        .unwrap();
        let r = &analysis.result;
        let qc = r.qe_eff_counts;
        let qp = r.qe_eff_power.unwrap();
        assert!(
            qc.value <= qe + 3.0 * qc.sigma + 0.01,
            "counts method {} above QE {qe}",
            qc.value
        );
        assert!(
            qp.value <= qe + 3.0 * qp.sigma + 0.01,
            "power method {} above QE {qe}",
            qp.value
        );
        if *theta == 0.0 {
            assert!((qc.value - qe).abs() < 4.0 * qc.sigma + 0.01);
            assert!((qp.value - qe).abs() < 4.0 * qp.sigma + 0.01);
        }
    }
}

#[test]
fn ensemble_of_identical_qe_lands_on_reference_curve() {
    // QE = 1 molecules at different angles: (qe_counts, qe_power) pairs lie
    // on the perfect-QE reference curve.
    let chain = paper_chain();
    let env = environment();
    let mut results = Vec::new();
    for (i, theta_deg) in [5.0_f64, 20.0, 40.0, 55.0, 70.0].iter().enumerate() {
        let em = emitter(1.0, theta_deg.to_radians(), 1.25e8, 0.0, 1e-5);
        let scenario =
            measure_molecule_at(&em, &chain, NoiseMode::Noiseless, 200 + i as u64, "ref", 1e-4);
        let analysis = analyze_molecule(
            &scenario.scan,
            Some(&scenario.raster),
            &chain,
            &env,
            em.alpha,
            Some(scenario.mol_position),
            &no_bootstrap(),
        )
        .unwrap();
        results.push(analysis.result);
    }
    let ratio = chain.eta_coll_v / chain.eta_coll_h;
    for r in &results {
        let y = r.qe_eff_power.unwrap().value; // cos^2 theta on the curve
        let predicted_x = y + ratio * (1.0 - y);
        let x = r.qe_eff_counts.value;
        assert!(
            (x - predicted_x).abs() < 2e-2,
            "point ({x:.4}, {y:.4}) off the QE=1 curve (expected x {predicted_x:.4})"
        );
    }
}

#[test]
fn ensemble_report_correlations_behave() {
    let chain = paper_chain();
    let env = environment();
    let mut results = Vec::new();
    for i in 0..8 {
        let qe = 0.55 + 0.05 * i as f64;
        let theta = 0.15 * i as f64;
        let em = emitter(qe, theta, 1.25e8, 1e-6, 1e-5);
        let scenario = measure_molecule(&em, &chain, NoiseMode::Poisson, 300 + i, &format!("m{i}"));
        let analysis = analyze_molecule(
            &scenario.scan,
            Some(&scenario.raster),
            &chain,
            &env,
            em.alpha,
            None,
            &no_bootstrap(),
        )
        .unwrap();
        results.push(analysis.result);
    }
    let report = ensemble_report(&results, &chain).unwrap();
    // Both axes of Fig. 3(a) are QE times a theta-dependent factor, so the
    // correlation across a spread ensemble is strongly positive.
    let corr = report.corr_finf_isat_inv.unwrap();
    assert!(corr > 0.9, "f_inf vs I_sat^-1 correlation {corr}");
    assert!(report.qe_counts_quantiles.unwrap().max <= 1.05);
}

#[test]
fn calibration_recovers_generating_alpha_kappa() {
    // Ensemble generated with alpha = 0.33, kappa = 0.8; the grid search
    // must return exactly that grid point, and the score at the truth must
    // beat every other grid point.
    let chain = paper_chain(); // kappa = 0.8 used in generation
    let env = environment();
    let mut results = Vec::new();
    for i in 0..8 {
        let theta = 0.07 * i as f64; // up to ~28 degrees
        let em = emitter(0.8, theta, 1.25e8, 0.0, 1e-5);
        let scenario =
            measure_molecule_at(&em, &chain, NoiseMode::Noiseless, 400 + i, &format!("c{i}"), 1e-4);
        let analysis = analyze_molecule(
            &scenario.scan,
            Some(&scenario.raster),
            &chain,
            &env,
            em.alpha,
            Some(scenario.mol_position),
            &no_bootstrap(),
        )
        .unwrap();
        results.push(analysis.result);
    }
    // Grid chosen without near-degenerate aliases of the generating point
    // along alpha/(kappa (1 - alpha)) = const.
    let alpha_grid = [0.25, 0.29, 0.33, 0.37, 0.41];
    let kappa_grid = [0.6, 0.7, 0.8, 0.9, 1.0];
    let cal =
        calibrate_spectral_factor(&results, &chain, &env, &alpha_grid, &kappa_grid).unwrap();
    assert_eq!(
        (cal.alpha, cal.kappa),
        (0.33, 0.8),
        "calibration picked ({}, {}) with score {}",
        cal.alpha,
        cal.kappa,
        cal.score
    );
}
