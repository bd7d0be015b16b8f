//! Synthetic measurement records generated from ground-truth parameters.
//!
//! Everything here is deterministic per seed: the RNG is ChaCha8, a
//! counter-based stream cipher with stable cross-platform output, and the
//! algorithm name is recorded in the series metadata so files are
//! self-describing.

mod stream;

pub use stream::simulate_photon_stream;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics::{
    self, DetectionChain, EmitterParams, EnvironmentParams, PhysicsError,
};

/// Name of the RNG recorded in file metadata.
pub const RNG_ALGORITHM: &str = "chacha8";

#[derive(Debug, Error)]
pub enum SimulatorError {
    #[error(transparent)]
    Physics(#[from] PhysicsError),

    #[error("invalid simulation input: {0}")]
    InvalidInput(String),
}

/// Whether sampled records carry Poisson noise or exact expectation values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    /// Counts drawn from a Poisson distribution of the expected mean.
    Poisson,
    /// Counts set to the expected mean (real-valued); for oracle round trips.
    Noiseless,
}

/// Gaussian excitation beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamProfile {
    /// 1/e^2 intensity radius (m).
    pub waist: f64,
    /// Beam-center position in the sample plane (m).
    pub center: (f64, f64),
    /// Optical power delivered to the sample plane (W).
    pub power_at_sample: f64,
}

impl BeamProfile {
    pub fn validate(&self) -> Result<(), SimulatorError> {
        if !(self.waist > 0.0) {
            return Err(SimulatorError::InvalidInput(format!(
                "beam waist must be positive, got {}",
                self.waist
            )));
        }
        if !(self.power_at_sample >= 0.0) {
            return Err(SimulatorError::InvalidInput(format!(
                "power_at_sample must be non-negative, got {}",
                self.power_at_sample
            )));
        }
        Ok(())
    }

    /// Effective area of the centered beam, `integral I dA / I(center) = pi w0^2 / 2`.
    pub fn effective_area(&self) -> f64 {
        0.5 * std::f64::consts::PI * self.waist * self.waist
    }

    /// Relative intensity at `r` compared to the beam center.
    pub fn relative_intensity(&self, r: (f64, f64)) -> f64 {
        let dx = r.0 - self.center.0;
        let dy = r.1 - self.center.1;
        (-2.0 * (dx * dx + dy * dy) / (self.waist * self.waist)).exp()
    }
}

/// Intensity of the Gaussian beam at position `r` (W/m^2); the integral over
/// the plane equals the beam power.
pub fn gaussian_beam_intensity(r: (f64, f64), beam: &BeamProfile) -> f64 {
    let peak = 2.0 * beam.power_at_sample / (std::f64::consts::PI * beam.waist * beam.waist);
    peak * beam.relative_intensity(r)
}

/// One dwell of a frequency scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    /// Source power before the excitation path (W).
    pub source_power: f64,
    /// Laser-ZPL detuning (rad/s).
    pub detuning: f64,
    /// Dwell time (s).
    pub dwell_time: f64,
    /// Detected counts. Integer-valued when Poisson-sampled; the expected
    /// mean (real-valued) in noiseless mode.
    pub counts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanMetadata {
    pub seed: u64,
    pub emitter_id: String,
    /// Vacuum ZPL wavelength of the scanned line (m); a measured quantity in
    /// the real experiment, carried here so the analysis can use it.
    pub lambda_zpl: f64,
    pub rng_algorithm: String,
}

/// Detected counts vs (power, detuning): the saturation-measurement record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSeries {
    pub entries: Vec<ScanEntry>,
    pub metadata: ScanMetadata,
}

impl ScanSeries {
    /// Distinct source powers in entry order.
    pub fn powers(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.source_power) {
                out.push(e.source_power);
            }
        }
        out
    }

    /// All entries taken at one source power, in stored order.
    pub fn slice_at_power(&self, power: f64) -> Vec<&ScanEntry> {
        self.entries
            .iter()
            .filter(|e| e.source_power == power)
            .collect()
    }

    /// Checks dwell positivity, detuning monotonicity per power, and
    /// non-negative counts.
    pub fn validate(&self) -> Result<(), SimulatorError> {
        for power in self.powers() {
            let slice = self.slice_at_power(power);
            for pair in slice.windows(2) {
                if pair[1].detuning <= pair[0].detuning {
                    return Err(SimulatorError::InvalidInput(format!(
                        "detunings not strictly increasing at power {power:e} W"
                    )));
                }
            }
        }
        for e in &self.entries {
            if !(e.dwell_time > 0.0) {
                return Err(SimulatorError::InvalidInput(format!(
                    "dwell_time must be positive, got {}",
                    e.dwell_time
                )));
            }
            if !(e.counts >= 0.0) {
                return Err(SimulatorError::InvalidInput(format!(
                    "counts must be non-negative, got {}",
                    e.counts
                )));
            }
        }
        Ok(())
    }
}

/// Per-power detuning rows of a scan: `(source_power_w, detunings_rad_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanPlan {
    pub rows: Vec<(f64, Vec<f64>)>,
}

impl ScanPlan {
    /// Cartesian product of a power list and a shared detuning grid.
    pub fn grid(powers: &[f64], detunings: &[f64]) -> Self {
        ScanPlan {
            rows: powers
                .iter()
                .map(|&p| (p, detunings.to_vec()))
                .collect(),
        }
    }

    /// Per-power symmetric grids spanning `span_fwhms` power-broadened
    /// linewidths, like an experimenter widening the scan as the line
    /// broadens.
    #[allow(clippy::too_many_arguments)]
    pub fn adaptive(
        powers: &[f64],
        emitter: &EmitterParams,
        chain: &DetectionChain,
        env: &EnvironmentParams,
        beam: &BeamProfile,
        mol_position: (f64, f64),
        span_fwhms: f64,
        points: usize,
    ) -> Result<Self, SimulatorError> {
        if points < 2 {
            return Err(SimulatorError::InvalidInput(
                "adaptive scan needs at least 2 detuning points".into(),
            ));
        }
        let p_sat = physics::saturation_power(emitter, beam.effective_area(), env, emitter.theta)?;
        let mut rows = Vec::with_capacity(powers.len());
        for &p in powers {
            let sat = chain.eta_exc * p * beam.relative_intensity(mol_position) / p_sat;
            let fwhm = physics::power_broadened_fwhm(emitter.gamma_tot(), sat)?;
            let half_span = 0.5 * span_fwhms * fwhm;
            let step = 2.0 * half_span / (points - 1) as f64;
            let detunings = (0..points)
                .map(|i| -half_span + i as f64 * step)
                .collect();
            rows.push((p, detunings));
        }
        Ok(ScanPlan { rows })
    }
}

/// 2-D grid geometry of a raster scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterGrid {
    /// Meters per pixel.
    pub pitch: f64,
    /// Pixels along x.
    pub nx: usize,
    /// Pixels along y.
    pub ny: usize,
    /// Position of the (0, 0) pixel center (m).
    pub origin: (f64, f64),
}

/// Low-power fluorescence counts vs beam position: the excitation PSF record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterMap {
    pub pitch: f64,
    pub origin: (f64, f64),
    pub nx: usize,
    pub ny: usize,
    /// Row-major counts, `values[iy * nx + ix]`. Integer-valued when
    /// Poisson-sampled.
    pub values: Vec<f64>,
    pub dwell_time: f64,
    /// Source power before the excitation path (W).
    pub source_power: f64,
    /// Set when the local saturation parameter exceeded 0.1 anywhere on the
    /// grid, i.e. the map is no longer a faithful intensity probe.
    pub distortion_warning: bool,
}

impl RasterMap {
    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx + ix]
    }

    /// Sample-plane position of pixel center `(ix, iy)`.
    pub fn position(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.origin.0 + ix as f64 * self.pitch,
            self.origin.1 + iy as f64 * self.pitch,
        )
    }

    pub fn validate(&self) -> Result<(), SimulatorError> {
        if !(self.pitch > 0.0) {
            return Err(SimulatorError::InvalidInput(format!(
                "pitch must be positive, got {}",
                self.pitch
            )));
        }
        if self.values.len() != self.nx * self.ny {
            return Err(SimulatorError::InvalidInput(format!(
                "raster not rectangular: {} values for {}x{}",
                self.values.len(),
                self.nx,
                self.ny
            )));
        }
        if self.values.iter().any(|&v| v < 0.0) {
            return Err(SimulatorError::InvalidInput(
                "raster counts must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Time-tagged detections of one detector channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonRecord {
    /// Strictly increasing detection times (integer picoseconds).
    pub timestamps_ps: Vec<u64>,
    /// Acquisition duration (s).
    pub duration: f64,
    /// Detector index (0 or 1).
    pub channel: u8,
}

impl PhotonRecord {
    /// Mean detected rate (counts/s).
    pub fn rate(&self) -> f64 {
        self.timestamps_ps.len() as f64 / self.duration
    }

    pub fn validate(&self) -> Result<(), SimulatorError> {
        let dur_ps = (self.duration * 1e12) as u64;
        for pair in self.timestamps_ps.windows(2) {
            if pair[1] <= pair[0] {
                return Err(SimulatorError::InvalidInput(
                    "photon timestamps must be strictly increasing".into(),
                ));
            }
        }
        if let Some(&last) = self.timestamps_ps.last() {
            if last >= dur_ps {
                return Err(SimulatorError::InvalidInput(format!(
                    "timestamp {last} ps at or beyond duration {dur_ps} ps"
                )));
            }
        }
        Ok(())
    }
}

fn draw_counts(mean: f64, noise: NoiseMode, rng: &mut ChaCha8Rng) -> f64 {
    match noise {
        NoiseMode::Noiseless => mean,
        NoiseMode::Poisson => {
            if mean <= 0.0 {
                0.0
            } else {
                Poisson::new(mean).expect("positive mean").sample(rng)
            }
        }
    }
}

/// Simulates a series of frequency scans at the planned powers.
///
/// The expected rate per entry is the closed-form [`physics::detected_rate`]
/// at power-at-molecule `eta_exc * P_source * I_rel(r_mol)`, with the
/// saturation power from the beam's effective area; counts are Poisson draws
/// of `rate * dwell` (dead time is already in the rate).
#[allow(clippy::too_many_arguments)]
pub fn simulate_scan_series(
    emitter: &EmitterParams,
    chain: &DetectionChain,
    env: &EnvironmentParams,
    beam: &BeamProfile,
    mol_position: (f64, f64),
    plan: &ScanPlan,
    dwell: f64,
    noise: NoiseMode,
    seed: u64,
    emitter_id: &str,
) -> Result<ScanSeries, SimulatorError> {
    if plan.rows.is_empty() || plan.rows.iter().any(|(_, d)| d.is_empty()) {
        return Err(SimulatorError::InvalidInput(
            "scan plan must contain at least one power and one detuning".into(),
        ));
    }
    if !(dwell > 0.0) {
        return Err(SimulatorError::InvalidInput(format!(
            "dwell must be positive, got {dwell}"
        )));
    }
    beam.validate()?;
    emitter.validate()?;
    chain.validate()?;
    env.validate()?;

    let p_sat = physics::saturation_power(emitter, beam.effective_area(), env, emitter.theta)?;
    let i_rel = beam.relative_intensity(mol_position);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for (source_power, detunings) in &plan.rows {
        if !(*source_power >= 0.0) {
            return Err(SimulatorError::InvalidInput(format!(
                "source power must be non-negative, got {source_power}"
            )));
        }
        let p_mol = chain.eta_exc * source_power * i_rel;
        for &detuning in detunings {
            let rate = physics::detected_rate(emitter, chain, detuning, p_mol, p_sat)?;
            let counts = draw_counts(rate * dwell, noise, &mut rng);
            entries.push(ScanEntry {
                source_power: *source_power,
                detuning,
                dwell_time: dwell,
                counts,
            });
        }
    }
    let series = ScanSeries {
        entries,
        metadata: ScanMetadata {
            seed,
            emitter_id: emitter_id.to_string(),
            lambda_zpl: emitter.lambda_zpl,
            rng_algorithm: RNG_ALGORITHM.to_string(),
        },
    };
    series.validate()?;
    Ok(series)
}

/// Simulates a raster scan of the resonant beam over the molecule.
///
/// Each pixel re-centers the beam and records the detected counts in one
/// dwell; in the low-power regime the map is proportional to the local beam
/// intensity at the molecule. Sets [`RasterMap::distortion_warning`] if the
/// saturation parameter exceeds 0.1 anywhere.
#[allow(clippy::too_many_arguments)]
pub fn simulate_raster(
    emitter: &EmitterParams,
    chain: &DetectionChain,
    env: &EnvironmentParams,
    beam: &BeamProfile,
    mol_position: (f64, f64),
    grid: &RasterGrid,
    dwell: f64,
    noise: NoiseMode,
    seed: u64,
) -> Result<RasterMap, SimulatorError> {
    if grid.nx == 0 || grid.ny == 0 {
        return Err(SimulatorError::InvalidInput("empty raster grid".into()));
    }
    if !(grid.pitch > 0.0) {
        return Err(SimulatorError::InvalidInput(format!(
            "pitch must be positive, got {}",
            grid.pitch
        )));
    }
    if !(dwell > 0.0) {
        return Err(SimulatorError::InvalidInput(format!(
            "dwell must be positive, got {dwell}"
        )));
    }
    beam.validate()?;
    emitter.validate()?;
    chain.validate()?;
    env.validate()?;

    let p_sat = physics::saturation_power(emitter, beam.effective_area(), env, emitter.theta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(grid.nx * grid.ny);
    let mut max_sat = 0.0_f64;
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let px = (
                grid.origin.0 + ix as f64 * grid.pitch,
                grid.origin.1 + iy as f64 * grid.pitch,
            );
            let moved = BeamProfile {
                center: px,
                ..*beam
            };
            let p_mol = moved.power_at_sample * moved.relative_intensity(mol_position);
            max_sat = max_sat.max(p_mol / p_sat);
            let rate = physics::detected_rate(emitter, chain, 0.0, p_mol, p_sat)?;
            values.push(draw_counts(rate * dwell, noise, &mut rng));
        }
    }
    let map = RasterMap {
        pitch: grid.pitch,
        origin: grid.origin,
        nx: grid.nx,
        ny: grid.ny,
        values,
        dwell_time: dwell,
        source_power: beam.power_at_sample / chain.eta_exc,
        distortion_warning: max_sat > 0.1,
    };
    map.validate()?;
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn emitter() -> EmitterParams {
        EmitterParams {
            gamma_r: 1.0e8,
            gamma_nr: 2.5e7,
            lambda_zpl: 743.7e-9,
            alpha: 0.33,
            theta: 0.0,
            phi_isc: 1e-6,
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
            background_rate: 200.0,
        }
    }

    fn env() -> EnvironmentParams {
        EnvironmentParams { n_host: 1.6 }
    }

    fn beam() -> BeamProfile {
        BeamProfile {
            waist: 1.2e-6,
            center: (0.0, 0.0),
            power_at_sample: 1e-9,
        }
    }

    #[test]
    fn gaussian_peak_and_waist() {
        let b = beam();
        let peak = gaussian_beam_intensity((0.0, 0.0), &b);
        assert_relative_eq!(
            peak,
            2.0 * b.power_at_sample / (std::f64::consts::PI * b.waist * b.waist)
        );
        let at_waist = gaussian_beam_intensity((b.waist, 0.0), &b);
        assert_relative_eq!(at_waist / peak, (-2.0_f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn gaussian_integral_recovers_power() {
        let b = beam();
        let half = 6.0 * b.waist;
        let n = 600;
        let step = 2.0 * half / n as f64;
        let mut sum = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = -half + (i as f64 + 0.5) * step;
                let y = -half + (j as f64 + 0.5) * step;
                sum += gaussian_beam_intensity((x, y), &b) * step * step;
            }
        }
        assert_relative_eq!(sum, b.power_at_sample, max_relative = 1e-4);
    }

    #[test]
    fn scan_series_deterministic_per_seed() {
        let plan = ScanPlan::grid(
            &[1e-9, 4e-9],
            &(-20..=20).map(|i| i as f64 * 1e7).collect::<Vec<_>>(),
        );
        let run = |seed| {
            simulate_scan_series(
                &emitter(),
                &chain(),
                &env(),
                &beam(),
                (0.0, 0.0),
                &plan,
                0.01,
                NoiseMode::Poisson,
                seed,
                "m0",
            )
            .unwrap()
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7).entries, run(8).entries);
    }

    #[test]
    fn scan_series_zero_power_is_background() {
        let plan = ScanPlan::grid(&[0.0], &[-1e7, 0.0, 1e7]);
        let dwell = 0.5;
        let series = simulate_scan_series(
            &emitter(),
            &chain(),
            &env(),
            &beam(),
            (0.0, 0.0),
            &plan,
            dwell,
            NoiseMode::Noiseless,
            1,
            "m0",
        )
        .unwrap();
        let expected =
            physics::apd_measured_rate(chain().background_rate, chain().tau_dead) * dwell;
        for e in &series.entries {
            assert_relative_eq!(e.counts, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn scan_monte_carlo_mean_matches_forward_model() {
        // Fixed (P, detuning), many repeats: sample mean within 3 sigma.
        let mut ch = chain();
        ch.tau_dead = 0.0;
        ch.background_rate = 0.0;
        let em = emitter();
        let ev = env();
        let b = beam();
        let repeats = 10_000usize;
        let plan = ScanPlan {
            rows: vec![(2e-9, vec![1.0e7])],
        };
        let dwell = 0.01;
        let mut total = 0.0;
        for seed in 0..repeats as u64 {
            let s = simulate_scan_series(
                &em, &ch, &ev, &b,
                (0.0, 0.0),
                &plan,
                dwell,
                NoiseMode::Poisson,
                seed,
                "m0",
            )
            .unwrap();
            total += s.entries[0].counts;
        }
        let p_sat = physics::saturation_power(&em, b.effective_area(), &ev, 0.0).unwrap();
        let mean_expected =
            physics::detected_rate(&em, &ch, 1.0e7, ch.eta_exc * 2e-9, p_sat).unwrap() * dwell;
        let mean = total / repeats as f64;
        let sigma = (mean_expected / repeats as f64).sqrt();
        assert!(
            (mean - mean_expected).abs() < 3.0 * sigma,
            "MC mean {mean} vs expected {mean_expected} (sigma {sigma})"
        );
    }

    #[test]
    fn raster_far_molecule_is_background_only() {
        let grid = RasterGrid {
            pitch: 0.2e-6,
            nx: 11,
            ny: 11,
            origin: (-1e-6, -1e-6),
        };
        let map = simulate_raster(
            &emitter(),
            &chain(),
            &env(),
            &beam(),
            (1.0e-3, 1.0e-3), // a millimeter away
            &grid,
            0.02,
            NoiseMode::Noiseless,
            3,
        )
        .unwrap();
        let bg = physics::apd_measured_rate(chain().background_rate, chain().tau_dead) * 0.02;
        for &v in &map.values {
            assert_relative_eq!(v, bg, max_relative = 1e-9);
        }
        assert!(!map.distortion_warning);
    }

    #[test]
    fn raster_noiseless_is_gaussian_shaped() {
        let mut ch = chain();
        ch.background_rate = 0.0;
        ch.tau_dead = 0.0;
        let b = BeamProfile {
            power_at_sample: 2e-12, // deep linear regime
            ..beam()
        };
        let grid = RasterGrid {
            pitch: 0.1e-6,
            nx: 41,
            ny: 41,
            origin: (-2.0e-6, -2.0e-6),
        };
        let map = simulate_raster(
            &emitter(),
            &ch,
            &env(),
            &b,
            (0.0, 0.0),
            &grid,
            0.02,
            NoiseMode::Noiseless,
            3,
        )
        .unwrap();
        let center = map.value(20, 20);
        // Compare profile to the Gaussian: pixel at one waist from center.
        let ix = 20 + (b.waist / grid.pitch).round() as usize;
        let expected = center * (-2.0_f64 * (12.0 * 0.1e-6 / b.waist).powi(2)).exp();
        assert_relative_eq!(map.value(ix, 20), expected, max_relative = 2e-3);
        assert!(!map.distortion_warning);
    }

    #[test]
    fn raster_flags_saturation_distortion() {
        let b = BeamProfile {
            power_at_sample: 1e-8, // way above the linear regime
            ..beam()
        };
        let grid = RasterGrid {
            pitch: 0.2e-6,
            nx: 11,
            ny: 11,
            origin: (-1e-6, -1e-6),
        };
        let map = simulate_raster(
            &emitter(),
            &chain(),
            &env(),
            &b,
            (0.0, 0.0),
            &grid,
            0.02,
            NoiseMode::Noiseless,
            3,
        )
        .unwrap();
        assert!(map.distortion_warning);
    }

    #[test]
    fn doubled_raster_power_doubles_counts_in_linear_regime() {
        let mut ch = chain();
        ch.background_rate = 0.0;
        let b1 = BeamProfile {
            power_at_sample: 1e-12,
            ..beam()
        };
        let b2 = BeamProfile {
            power_at_sample: 2e-12,
            ..b1
        };
        let grid = RasterGrid {
            pitch: 0.3e-6,
            nx: 9,
            ny: 9,
            origin: (-1.2e-6, -1.2e-6),
        };
        let run = |b: &BeamProfile| {
            simulate_raster(
                &emitter(),
                &ch,
                &env(),
                b,
                (0.0, 0.0),
                &grid,
                0.02,
                NoiseMode::Noiseless,
                3,
            )
            .unwrap()
        };
        let m1 = run(&b1);
        let m2 = run(&b2);
        for (a, b) in m1.values.iter().zip(&m2.values) {
            if *a > 0.0 {
                assert_relative_eq!(b / a, 2.0, max_relative = 2e-3);
            }
        }
    }
}
