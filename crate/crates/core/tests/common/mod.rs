//! Shared synthetic-scenario builders for the integration and acceptance
//! suites.
#![allow(dead_code)] // each test target uses a different subset

use zplqe_core::physics::{self, DetectionChain, EmitterParams, EnvironmentParams};
use zplqe_core::simulator::{
    simulate_raster, simulate_scan_series, BeamProfile, NoiseMode, RasterGrid, RasterMap,
    ScanPlan, ScanSeries,
};

pub fn paper_chain() -> DetectionChain {
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

pub fn ideal_chain() -> DetectionChain {
    DetectionChain {
        eta_coll_h: 1.0,
        eta_coll_v: 1.0,
        eta_tr: 1.0,
        eta_det: 1.0,
        kappa: 1.0,
        eta_exc: 1.0,
        tau_dead: 0.0,
        background_rate: 0.0,
    }
}

pub fn environment() -> EnvironmentParams {
    EnvironmentParams { n_host: 1.6 }
}

pub fn beam() -> BeamProfile {
    BeamProfile {
        waist: 1.2e-6,
        center: (0.0, 0.0),
        power_at_sample: 0.0,
    }
}

pub fn emitter(qe: f64, theta: f64, gamma_tot: f64, phi_isc: f64, tau_triplet: f64) -> EmitterParams {
    EmitterParams {
        gamma_r: qe * gamma_tot,
        gamma_nr: (1.0 - qe) * gamma_tot,
        lambda_zpl: 743.7e-9,
        alpha: 0.33,
        theta,
        phi_isc,
        tau_triplet,
    }
}

pub struct Scenario {
    pub scan: ScanSeries,
    pub raster: RasterMap,
    pub mol_position: (f64, f64),
}

/// One molecule's full measurement set: a 10-power adaptive scan reaching
/// S ~ 40, and a low-power raster (S = 0.03 at the brightest pixel) with the
/// dwell chosen for a target peak count.
pub fn measure_molecule(
    em: &EmitterParams,
    chain: &DetectionChain,
    noise: NoiseMode,
    seed: u64,
    id: &str,
) -> Scenario {
    measure_molecule_at(em, chain, noise, seed, id, 0.03)
}

/// Like [`measure_molecule`] with an explicit raster saturation parameter.
/// Even at S = 0.03 the PSF is flattened by ~S/2; exactness tests probe the
/// strictly linear regime instead.
pub fn measure_molecule_at(
    em: &EmitterParams,
    chain: &DetectionChain,
    noise: NoiseMode,
    seed: u64,
    id: &str,
    raster_sat: f64,
) -> Scenario {
    let env = environment();
    let b = beam();
    let mol_position = (0.0, 0.0);
    let p_sat = physics::saturation_power(em, b.effective_area(), &env, em.theta).unwrap();

    let powers: Vec<f64> = (0..10)
        .map(|i| 0.02 * (2000.0_f64).powf(i as f64 / 9.0) * p_sat / chain.eta_exc)
        .collect();
    let plan = ScanPlan::adaptive(&powers, em, chain, &env, &b, mol_position, 6.0, 61).unwrap();
    let scan = simulate_scan_series(
        em, chain, &env, &b, mol_position, &plan, 0.02, noise, seed, id,
    )
    .unwrap();

    let raster_beam = BeamProfile {
        power_at_sample: raster_sat * p_sat,
        ..b
    };
    let peak_rate =
        physics::detected_rate(em, chain, 0.0, raster_beam.power_at_sample, p_sat).unwrap();
    let dwell = (2000.0 / peak_rate).clamp(1e-3, 1e4);
    let pitch = b.waist / 10.0;
    let n = 65; // spans +-3.2 waists
    let half = (n - 1) as f64 / 2.0;
    let grid = RasterGrid {
        pitch,
        nx: n,
        ny: n,
        origin: (-half * pitch, -half * pitch),
    };
    let raster = simulate_raster(
        em,
        chain,
        &env,
        &raster_beam,
        mol_position,
        &grid,
        dwell,
        noise,
        seed ^ 0x9e3779b97f4a7c15,
    )
    .unwrap();

    Scenario {
        scan,
        raster,
        mol_position,
    }
}

/// Analytic lower bounds the pipeline should recover: method 1 is
/// `QE * eta_coll(theta)/eta_coll(0)`, method 2 is `QE * cos^2(theta)`.
pub fn expected_lower_bounds(em: &EmitterParams, chain: &DetectionChain) -> (f64, f64) {
    let qe = em.quantum_efficiency();
    let eta_theta = physics::collection_efficiency(em.theta, chain).unwrap();
    let eta_zero = physics::collection_efficiency(0.0, chain).unwrap();
    let cos2 = em.theta.cos() * em.theta.cos();
    (qe * eta_theta / eta_zero, qe * cos2)
}
