//! Run configuration: one TOML file per run, `mode` selects the command.
//!
//! Keys carry explicit SI units (`power_w`, `dwell_s`, `tau_dead_s`);
//! angles are degrees at this boundary, linewidth-style rates are angular
//! rad/s as in the core crate. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zplqe_core::physics::{DetectionChain, EmitterParams, EnvironmentParams};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Simulate,
    Analyze,
    Report,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Mode::Simulate => "simulate",
            Mode::Analyze => "analyze",
            Mode::Report => "report",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterConfig {
    pub gamma_r_rad_s: f64,
    pub gamma_nr_rad_s: f64,
    pub lambda_zpl_m: f64,
    pub alpha: f64,
    #[serde(default)]
    pub theta_deg: f64,
    #[serde(default = "default_phi_isc")]
    pub phi_isc: f64,
    #[serde(default = "default_tau_triplet")]
    pub tau_triplet_s: f64,
}

fn default_phi_isc() -> f64 {
    zplqe_core::physics::DEFAULT_PHI_ISC
}

fn default_tau_triplet() -> f64 {
    zplqe_core::physics::DEFAULT_TAU_TRIPLET
}

impl EmitterConfig {
    pub fn to_params(&self) -> Result<EmitterParams, CliError> {
        let em = EmitterParams {
            gamma_r: self.gamma_r_rad_s,
            gamma_nr: self.gamma_nr_rad_s,
            lambda_zpl: self.lambda_zpl_m,
            alpha: self.alpha,
            theta: self.theta_deg.to_radians(),
            phi_isc: self.phi_isc,
            tau_triplet: self.tau_triplet_s,
        };
        em.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(em)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub eta_coll_h: f64,
    pub eta_coll_v: f64,
    pub eta_tr: f64,
    pub eta_det: f64,
    pub kappa: f64,
    pub eta_exc: f64,
    #[serde(default = "default_tau_dead")]
    pub tau_dead_s: f64,
    #[serde(default)]
    pub background_cps: f64,
}

fn default_tau_dead() -> f64 {
    50e-9
}

impl ChainConfig {
    pub fn to_chain(&self) -> Result<DetectionChain, CliError> {
        let chain = DetectionChain {
            eta_coll_h: self.eta_coll_h,
            eta_coll_v: self.eta_coll_v,
            eta_tr: self.eta_tr,
            eta_det: self.eta_det,
            kappa: self.kappa,
            eta_exc: self.eta_exc,
            tau_dead: self.tau_dead_s,
            background_rate: self.background_cps,
        };
        chain.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(chain)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub n_host: f64,
}

impl EnvironmentConfig {
    pub fn to_env(&self) -> Result<EnvironmentParams, CliError> {
        let env = EnvironmentParams {
            n_host: self.n_host,
        };
        env.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(env)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamConfig {
    pub waist_m: f64,
}

/// Source powers for the frequency scans: either an explicit list or a
/// per-molecule log-spaced range of saturation parameters.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    #[serde(default)]
    pub powers_w: Option<Vec<f64>>,
    #[serde(default = "default_sat_min")]
    pub sat_min: f64,
    #[serde(default = "default_sat_max")]
    pub sat_max: f64,
    #[serde(default = "default_n_powers")]
    pub n_powers: usize,
    #[serde(default = "default_span_fwhms")]
    pub detuning_span_fwhms: f64,
    #[serde(default = "default_detuning_points")]
    pub detuning_points: usize,
    pub dwell_s: f64,
}

fn default_sat_min() -> f64 {
    0.02
}
fn default_sat_max() -> f64 {
    40.0
}
fn default_n_powers() -> usize {
    10
}
fn default_span_fwhms() -> f64 {
    6.0
}
fn default_detuning_points() -> usize {
    61
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RasterConfig {
    #[serde(default = "default_raster_n")]
    pub nx: usize,
    #[serde(default = "default_raster_n")]
    pub ny: usize,
    /// Pixel pitch as a fraction of the beam waist.
    #[serde(default = "default_pitch_fraction")]
    pub pitch_waist_fraction: f64,
    /// Saturation parameter at the brightest pixel.
    #[serde(default = "default_raster_sat")]
    pub sat_peak: f64,
    /// Dwell is chosen per molecule to reach this many counts at the peak.
    #[serde(default = "default_target_peak")]
    pub target_peak_counts: f64,
}

fn default_raster_n() -> usize {
    65
}
fn default_pitch_fraction() -> f64 {
    0.1
}
fn default_raster_sat() -> f64 {
    0.03
}
fn default_target_peak() -> f64 {
    2000.0
}

impl Default for RasterConfig {
    fn default() -> Self {
        RasterConfig {
            nx: default_raster_n(),
            ny: default_raster_n(),
            pitch_waist_fraction: default_pitch_fraction(),
            sat_peak: default_raster_sat(),
            target_peak_counts: default_target_peak(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PhotonFormat {
    Binary,
    Csv,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhotonConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_photon_sat")]
    pub sat_param: f64,
    #[serde(default = "default_photon_duration")]
    pub duration_s: f64,
    #[serde(default = "default_photon_format")]
    pub format: PhotonFormat,
}

fn default_photon_sat() -> f64 {
    0.5
}
fn default_photon_duration() -> f64 {
    0.05
}
fn default_photon_format() -> PhotonFormat {
    PhotonFormat::Binary
}

impl Default for PhotonConfig {
    fn default() -> Self {
        PhotonConfig {
            enabled: false,
            sat_param: default_photon_sat(),
            duration_s: default_photon_duration(),
            format: default_photon_format(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub size: usize,
    pub qe_min: f64,
    pub qe_max: f64,
    #[serde(default = "default_theta_max")]
    pub theta_max_deg: f64,
    pub gamma_r_rad_s: f64,
    #[serde(default = "default_lambda_min")]
    pub lambda_min_m: f64,
    #[serde(default = "default_lambda_max")]
    pub lambda_max_m: f64,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "default_phi_isc")]
    pub phi_isc: f64,
    #[serde(default = "default_tau_triplet")]
    pub tau_triplet_s: f64,
}

fn default_theta_max() -> f64 {
    85.0
}
fn default_lambda_min() -> f64 {
    743.6e-9
}
fn default_lambda_max() -> f64 {
    745.0e-9
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseConfig {
    Poisson,
    Noiseless,
}

impl NoiseConfig {
    pub fn to_mode(self) -> zplqe_core::simulator::NoiseMode {
        match self {
            NoiseConfig::Poisson => zplqe_core::simulator::NoiseMode::Poisson,
            NoiseConfig::Noiseless => zplqe_core::simulator::NoiseMode::Noiseless,
        }
    }
}

fn default_noise() -> NoiseConfig {
    NoiseConfig::Poisson
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub ensemble: Option<EnsembleConfig>,
    #[serde(default)]
    pub emitter: Option<EmitterConfig>,
    pub chain: ChainConfig,
    pub environment: EnvironmentConfig,
    pub beam: BeamConfig,
    pub scan: ScanConfig,
    #[serde(default)]
    pub raster: RasterConfig,
    #[serde(default)]
    pub photon: PhotonConfig,
    #[serde(default = "default_noise")]
    pub noise: NoiseConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub mode: Mode,
    pub input_dir: PathBuf,
    pub out_dir: PathBuf,
    pub alpha: f64,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default = "default_bootstrap_seed")]
    pub bootstrap_seed: u64,
    #[serde(default)]
    pub use_photon_records: bool,
    /// Optional ground-truth manifest; when set, a score table is written.
    #[serde(default)]
    pub truth_manifest: Option<PathBuf>,
    pub chain: ChainConfig,
    pub environment: EnvironmentConfig,
}

fn default_resamples() -> usize {
    200
}
fn default_bootstrap_seed() -> u64 {
    0x5eed
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    pub mode: Mode,
    pub results_csv: PathBuf,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub calibrate: bool,
    #[serde(default = "default_alpha_grid")]
    pub alpha_grid: Vec<f64>,
    #[serde(default = "default_kappa_grid")]
    pub kappa_grid: Vec<f64>,
    pub chain: ChainConfig,
    pub environment: EnvironmentConfig,
}

fn default_alpha_grid() -> Vec<f64> {
    vec![0.25, 0.29, 0.33, 0.37, 0.41]
}
fn default_kappa_grid() -> Vec<f64> {
    vec![0.6, 0.7, 0.8, 0.9, 1.0]
}

#[derive(Debug, Clone)]
pub enum RunConfig {
    Simulate(Box<SimulateConfig>),
    Analyze(AnalyzeConfig),
    Report(ReportConfig),
}

impl RunConfig {
    pub fn mode(&self) -> Mode {
        match self {
            RunConfig::Simulate(_) => Mode::Simulate,
            RunConfig::Analyze(_) => Mode::Analyze,
            RunConfig::Report(_) => Mode::Report,
        }
    }
}

#[derive(Debug, Deserialize)]
struct ModeProbe {
    mode: Mode,
}

/// Parses the config file; the `mode` key picks the schema, all other keys
/// are validated strictly (unknown keys rejected, named in the error).
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let probe: ModeProbe = toml::from_str(&text)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let parsed = match probe.mode {
        Mode::Simulate => toml::from_str::<SimulateConfig>(&text)
            .map(|c| RunConfig::Simulate(Box::new(c)))
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?,
        Mode::Analyze => toml::from_str::<AnalyzeConfig>(&text)
            .map(RunConfig::Analyze)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?,
        Mode::Report => toml::from_str::<ReportConfig>(&text)
            .map(RunConfig::Report)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?,
    };
    validate(&parsed)?;
    Ok(parsed)
}

fn validate(config: &RunConfig) -> Result<(), CliError> {
    match config {
        RunConfig::Simulate(c) => {
            debug_assert_eq!(c.mode, Mode::Simulate);
            if c.ensemble.is_none() && c.emitter.is_none() {
                return Err(CliError::config(
                    "simulate needs either an [ensemble] or an [emitter] block",
                ));
            }
            if let Some(powers) = c.scan.powers_w.as_ref() {
                if powers.is_empty() {
                    return Err(CliError::config("`powers_w` must not be empty"));
                }
                if let Some(bad) = powers.iter().find(|p| !(**p > 0.0)) {
                    return Err(CliError::config(format!(
                        "`powers_w` entries must be positive, got {bad}"
                    )));
                }
            } else if !(c.scan.sat_min > 0.0 && c.scan.sat_max > c.scan.sat_min) {
                return Err(CliError::config(
                    "`sat_min`/`sat_max` must satisfy 0 < sat_min < sat_max",
                ));
            }
            if c.scan.n_powers < 4 {
                return Err(CliError::config("`n_powers` must be at least 4"));
            }
            if !(c.scan.dwell_s > 0.0) {
                return Err(CliError::config("`dwell_s` must be positive"));
            }
            if c.scan.detuning_points < 8 {
                return Err(CliError::config("`detuning_points` must be at least 8"));
            }
            if !(c.beam.waist_m > 0.0) {
                return Err(CliError::config("`waist_m` must be positive"));
            }
            if let Some(e) = &c.ensemble {
                if e.size == 0 {
                    return Err(CliError::config("`ensemble.size` must be positive"));
                }
                if !(e.qe_min > 0.0 && e.qe_min <= e.qe_max && e.qe_max <= 1.0) {
                    return Err(CliError::config(
                        "`qe_min`/`qe_max` must satisfy 0 < qe_min <= qe_max <= 1",
                    ));
                }
                if !(0.0..90.0).contains(&e.theta_max_deg) {
                    return Err(CliError::config("`theta_max_deg` must be in [0, 90)"));
                }
            }
            if c.photon.enabled && !(c.photon.duration_s > 0.0) {
                return Err(CliError::config("`photon.duration_s` must be positive"));
            }
            c.chain.to_chain()?;
            c.environment.to_env()?;
            if let Some(em) = &c.emitter {
                em.to_params()?;
            }
        }
        RunConfig::Analyze(c) => {
            debug_assert_eq!(c.mode, Mode::Analyze);
            if !(c.alpha > 0.0 && c.alpha <= 1.0) {
                return Err(CliError::config("`alpha` must be in (0, 1]"));
            }
            if c.bootstrap_resamples != 0 && c.bootstrap_resamples < 100 {
                return Err(CliError::config(
                    "`bootstrap_resamples` must be 0 (off) or at least 100",
                ));
            }
            c.chain.to_chain()?;
            c.environment.to_env()?;
        }
        RunConfig::Report(c) => {
            debug_assert_eq!(c.mode, Mode::Report);
            if c.calibrate && (c.alpha_grid.is_empty() || c.kappa_grid.is_empty()) {
                return Err(CliError::config(
                    "`alpha_grid`/`kappa_grid` must be non-empty when calibrate = true",
                ));
            }
            c.chain.to_chain()?;
            c.environment.to_env()?;
        }
    }
    Ok(())
}
