//! `zpl-qe simulate`: generate per-molecule scan series, raster maps,
//! optional photon streams, the measurement manifest, and the ground-truth
//! manifest for later scoring.


use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use zplqe_core::physics::{self, EmitterParams};
use zplqe_core::simulator::{
    simulate_photon_stream, simulate_raster, simulate_scan_series, BeamProfile, RasterGrid,
    ScanPlan, RNG_ALGORITHM,
};

use super::molecule_seed;
use crate::config::{PhotonFormat, SimulateConfig};
use crate::error::CliError;
use crate::io::{
    self, DatasetManifest, DatasetMolecule, PhotonEntry, RasterMeta, TruthManifest, TruthMolecule,
};

struct MoleculeOutput {
    dataset: DatasetMolecule,
    truth: TruthMolecule,
}

fn draw_ensemble(config: &SimulateConfig) -> Result<Vec<EmitterParams>, CliError> {
    match (&config.ensemble, &config.emitter) {
        (Some(e), _) => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xE25E);
            (0..e.size)
                .map(|_| {
                    let qe = e.qe_min + (e.qe_max - e.qe_min) * rng.gen::<f64>();
                    let theta = (e.theta_max_deg * rng.gen::<f64>()).to_radians();
                    let lambda =
                        e.lambda_min_m + (e.lambda_max_m - e.lambda_min_m) * rng.gen::<f64>();
                    let em = EmitterParams {
                        gamma_r: e.gamma_r_rad_s,
                        gamma_nr: e.gamma_r_rad_s * (1.0 - qe) / qe,
                        lambda_zpl: lambda,
                        alpha: e.alpha.unwrap_or(0.33),
                        theta,
                        phi_isc: e.phi_isc,
                        tau_triplet: e.tau_triplet_s,
                    };
                    em.validate().map_err(|err| CliError::config(err.to_string()))?;
                    Ok(em)
                })
                .collect()
        }
        (None, Some(single)) => Ok(vec![single.to_params()?]),
        (None, None) => unreachable!("validated at load"),
    }
}

fn simulate_one(
    config: &SimulateConfig,
    em: &EmitterParams,
    index: usize,
) -> Result<MoleculeOutput, CliError> {
    let chain = config.chain.to_chain()?;
    let env = config.environment.to_env()?;
    let id = format!("mol_{index:03}");
    let seed = molecule_seed(config.seed, index as u64);
    let noise = config.noise.to_mode();
    let out = &config.out_dir;

    let beam = BeamProfile {
        waist: config.beam.waist_m,
        center: (0.0, 0.0),
        power_at_sample: 0.0,
    };
    let mol_position = (0.0, 0.0);
    let p_sat = physics::saturation_power(em, beam.effective_area(), &env, em.theta)?;

    // Source powers: explicit list, or log-spaced in saturation units around
    // this molecule's own saturation power (like adjusting ND filters until
    // the line visibly saturates).
    let powers: Vec<f64> = match &config.scan.powers_w {
        Some(list) => list.clone(),
        None => {
            let (lo, hi, n) = (config.scan.sat_min, config.scan.sat_max, config.scan.n_powers);
            (0..n)
                .map(|i| {
                    lo * (hi / lo).powf(i as f64 / (n - 1) as f64) * p_sat / chain.eta_exc
                })
                .collect()
        }
    };
    let plan = ScanPlan::adaptive(
        &powers,
        em,
        &chain,
        &env,
        &beam,
        mol_position,
        config.scan.detuning_span_fwhms,
        config.scan.detuning_points,
    )?;
    let scan = simulate_scan_series(
        em,
        &chain,
        &env,
        &beam,
        mol_position,
        &plan,
        config.scan.dwell_s,
        noise,
        seed,
        &id,
    )?;
    let scan_csv = out.join(format!("{id}.scan.csv"));
    io::write_scan_csv(&scan_csv, &scan)?;

    // Raster: low-power intensity probe, dwell set for the target peak counts.
    let raster_beam = BeamProfile {
        power_at_sample: config.raster.sat_peak * p_sat,
        ..beam
    };
    let peak_rate =
        physics::detected_rate(em, &chain, 0.0, raster_beam.power_at_sample, p_sat)?;
    let dwell = (config.raster.target_peak_counts / peak_rate).clamp(1e-4, 1e4);
    let pitch = config.beam.waist_m * config.raster.pitch_waist_fraction;
    let grid = RasterGrid {
        pitch,
        nx: config.raster.nx,
        ny: config.raster.ny,
        origin: (
            -((config.raster.nx - 1) as f64) / 2.0 * pitch,
            -((config.raster.ny - 1) as f64) / 2.0 * pitch,
        ),
    };
    let raster = simulate_raster(
        em,
        &chain,
        &env,
        &raster_beam,
        mol_position,
        &grid,
        dwell,
        noise,
        seed ^ 0x5ca1ab1e,
    )?;
    let raster_csv = out.join(format!("{id}.raster.csv"));
    io::write_raster_csv(&raster_csv, &raster)?;
    let raster_meta = RasterMeta {
        dwell_s: dwell,
        source_power_w: raster.source_power,
        distortion_warning: raster.distortion_warning,
    };

    let photons = if config.photon.enabled {
        let (ch0, ch1) = simulate_photon_stream(
            em,
            &chain,
            config.photon.sat_param,
            config.photon.duration_s,
            seed ^ 0x0b5e55ed,
        )?;
        let (p0, p1) = match config.photon.format {
            PhotonFormat::Binary => {
                let p0 = out.join(format!("{id}.ch0.phot"));
                let p1 = out.join(format!("{id}.ch1.phot"));
                io::write_photons_binary(&p0, &ch0)?;
                io::write_photons_binary(&p1, &ch1)?;
                (p0, p1)
            }
            PhotonFormat::Csv => {
                let p0 = out.join(format!("{id}.ch0.photons.csv"));
                let p1 = out.join(format!("{id}.ch1.photons.csv"));
                io::write_photons_csv(&p0, &ch0)?;
                io::write_photons_csv(&p1, &ch1)?;
                (p0, p1)
            }
        };
        Some(PhotonEntry {
            ch0: p0,
            ch1: p1,
            duration_s: config.photon.duration_s,
            sat_param: config.photon.sat_param,
            format: config.photon.format,
        })
    } else {
        None
    };

    let eta_theta = physics::collection_efficiency(em.theta, &chain)?;
    let eta_zero = physics::collection_efficiency(0.0, &chain)?;
    let cos2 = em.theta.cos() * em.theta.cos();
    let truth = TruthMolecule {
        id: id.clone(),
        gamma_r_rad_s: em.gamma_r,
        gamma_nr_rad_s: em.gamma_nr,
        lambda_zpl_m: em.lambda_zpl,
        alpha: em.alpha,
        theta_rad: em.theta,
        phi_isc: em.phi_isc,
        tau_triplet_s: em.tau_triplet,
        qe: em.quantum_efficiency(),
        p_sat_w: p_sat,
        a_eff_m2: beam.effective_area(),
        expected_qe_counts: em.quantum_efficiency() * eta_theta / eta_zero,
        expected_qe_power: em.quantum_efficiency() * cos2,
    };
    Ok(MoleculeOutput {
        dataset: DatasetMolecule {
            id,
            lambda_zpl_m: em.lambda_zpl,
            scan_csv,
            scan_seed: seed,
            raster_csv: Some(raster_csv),
            raster_meta: Some(raster_meta),
            photons,
        },
        truth,
    })
}

pub fn run(config: &SimulateConfig, validate_schemas: bool) -> Result<(), CliError> {
    std::fs::create_dir_all(&config.out_dir)?;
    let emitters = draw_ensemble(config)?;
    log::info!(
        "simulating {} molecule(s) into {}",
        emitters.len(),
        config.out_dir.display()
    );

    let outputs: Vec<MoleculeOutput> = emitters
        .par_iter()
        .enumerate()
        .map(|(i, em)| simulate_one(config, em, i))
        .collect::<Result<Vec<_>, _>>()?;

    let dataset = DatasetManifest {
        seed: config.seed,
        rng_algorithm: RNG_ALGORITHM.to_string(),
        molecules: outputs.iter().map(|o| o.dataset.clone()).collect(),
    };
    let truth = TruthManifest {
        seed: config.seed,
        molecules: outputs.iter().map(|o| o.truth.clone()).collect(),
    };
    let dataset_path = config.out_dir.join("dataset.json");
    let truth_path = config.out_dir.join("truth.json");
    io::write_json(&dataset_path, &dataset)?;
    io::write_json(&truth_path, &truth)?;

    if validate_schemas {
        let mut checked = 2usize;
        let _: DatasetManifest = io::read_json(&dataset_path)?;
        let _: TruthManifest = io::read_json(&truth_path)?;
        for m in &dataset.molecules {
            io::read_scan_csv(
                &m.scan_csv,
                zplqe_core::simulator::ScanMetadata {
                    seed: m.scan_seed,
                    emitter_id: m.id.clone(),
                    lambda_zpl: m.lambda_zpl_m,
                    rng_algorithm: dataset.rng_algorithm.clone(),
                },
            )?;
            checked += 1;
            if let (Some(path), Some(meta)) = (&m.raster_csv, &m.raster_meta) {
                io::read_raster_csv(path, meta)?;
                checked += 1;
            }
            if let Some(ph) = &m.photons {
                match ph.format {
                    PhotonFormat::Binary => {
                        io::read_photons_binary(&ph.ch0, ph.duration_s, 0)?;
                        io::read_photons_binary(&ph.ch1, ph.duration_s, 1)?;
                    }
                    PhotonFormat::Csv => {
                        io::read_photons_csv(&ph.ch0, ph.duration_s, 0)?;
                        io::read_photons_csv(&ph.ch1, ph.duration_s, 1)?;
                    }
                }
                checked += 2;
            }
        }
        println!("schema check: {checked} files OK");
    }

    println!(
        "wrote {} molecule(s): dataset {}, truth {}",
        outputs.len(),
        dataset_path.display(),
        truth_path.display()
    );
    Ok(())
}
