//! Continuous-time Monte Carlo of the three-level rate system, producing
//! time-tagged photon records for a Hanbury-Brown–Twiss detector pair.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::physics::{self, DetectionChain, EmitterParams};

use super::{PhotonRecord, SimulatorError};

#[derive(Clone, Copy, PartialEq)]
enum Level {
    Ground,
    Excited,
    Triplet,
}

fn exp_waiting_time(rate: f64, rng: &mut ChaCha8Rng) -> f64 {
    // Inverse CDF on (0, 1]; 1 - u avoids ln(0).
    let u: f64 = rng.gen();
    -(1.0 - u).ln() / rate
}

/// Exact stochastic simulation of the driven S0/S1/triplet system.
///
/// Transitions: pumping `S0 -> S1` at `k = gamma_tot*S/2`, a matching
/// stimulated channel `S1 -> S0` (photon goes into the laser mode, never
/// detected), spontaneous decay at `gamma_tot` branching to the triplet with
/// probability `phi_isc`, triplet relaxation at `1/tau_triplet`. Each
/// spontaneous decay to the ground state is detected with probability
/// `eta_tot * QE / (1 - phi_isc)` — normalized so the mean detected rate
/// matches [`physics::detected_rate`] exactly — and routed to one of two
/// channels by a 50/50 beam splitter. Background counts arrive as an
/// independent Poisson process split over both channels; each channel then
/// applies its own non-paralyzable dead time.
///
/// Deterministic per seed. Timestamps are quantized to integer picoseconds;
/// the rare quantization collision is dropped like an infinitesimal dead
/// time.
pub fn simulate_photon_stream(
    emitter: &EmitterParams,
    chain: &DetectionChain,
    sat_param: f64,
    duration: f64,
    seed: u64,
) -> Result<(PhotonRecord, PhotonRecord), SimulatorError> {
    if !(duration > 0.0) {
        return Err(SimulatorError::InvalidInput(format!(
            "duration must be positive, got {duration}"
        )));
    }
    if !(sat_param >= 0.0) {
        return Err(SimulatorError::InvalidInput(format!(
            "sat_param must be non-negative, got {sat_param}"
        )));
    }
    emitter.validate()?;
    chain.validate()?;

    let gamma = emitter.gamma_tot();
    let pump = 0.5 * gamma * sat_param;
    let phi = emitter.phi_isc;
    let triplet_rate = 1.0 / emitter.tau_triplet;
    let eta_tot = physics::total_detection_efficiency(emitter, chain);
    let p_detect = (eta_tot * emitter.quantum_efficiency() / (1.0 - phi)).min(1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut detections: Vec<(f64, u8)> = Vec::new();

    // Molecular trajectory.
    if pump > 0.0 {
        let excited_total = pump + gamma;
        let p_stimulated = pump / excited_total;
        let mut state = Level::Ground;
        let mut t = 0.0_f64;
        loop {
            match state {
                Level::Ground => {
                    t += exp_waiting_time(pump, &mut rng);
                    if t >= duration {
                        break;
                    }
                    state = Level::Excited;
                }
                Level::Excited => {
                    t += exp_waiting_time(excited_total, &mut rng);
                    if t >= duration {
                        break;
                    }
                    if rng.gen::<f64>() < p_stimulated {
                        state = Level::Ground;
                    } else if rng.gen::<f64>() < phi {
                        state = Level::Triplet;
                    } else {
                        state = Level::Ground;
                        if rng.gen::<f64>() < p_detect {
                            let channel = u8::from(rng.gen::<f64>() < 0.5);
                            detections.push((t, channel));
                        }
                    }
                }
                Level::Triplet => {
                    t += exp_waiting_time(triplet_rate, &mut rng);
                    if t >= duration {
                        break;
                    }
                    state = Level::Ground;
                }
            }
        }
    }

    // Background: Poisson process at background_rate, split over channels.
    if chain.background_rate > 0.0 {
        let mut t = 0.0_f64;
        loop {
            t += exp_waiting_time(chain.background_rate, &mut rng);
            if t >= duration {
                break;
            }
            let channel = u8::from(rng.gen::<f64>() < 0.5);
            detections.push((t, channel));
        }
    }

    detections.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite times"));

    // Per-channel dead time, then picosecond quantization.
    let mut channels: [Vec<u64>; 2] = [Vec::new(), Vec::new()];
    let mut blocked_until = [f64::NEG_INFINITY; 2];
    let dur_ps = (duration * 1e12) as u64;
    for (t, ch) in detections {
        let idx = ch as usize;
        if t < blocked_until[idx] {
            continue;
        }
        blocked_until[idx] = t + chain.tau_dead;
        let ps = (t * 1e12).round() as u64;
        if ps >= dur_ps {
            continue;
        }
        if channels[idx].last().is_some_and(|&last| ps <= last) {
            continue;
        }
        channels[idx].push(ps);
    }

    let [ch0, ch1] = channels;
    Ok((
        PhotonRecord {
            timestamps_ps: ch0,
            duration,
            channel: 0,
        },
        PhotonRecord {
            timestamps_ps: ch1,
            duration,
            channel: 1,
        },
    ))
}
