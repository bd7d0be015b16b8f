//! File formats: scan and raster CSVs, binary/CSV photon records, dataset
//! and truth manifests, and the results table. All writes are atomic
//! (temp file + rename).

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zplqe_core::pipeline::{Measured, MoleculeResult};
use zplqe_core::simulator::{PhotonRecord, RasterMap, ScanEntry, ScanMetadata, ScanSeries};

use crate::error::CliError;

pub const PHOTON_MAGIC: &[u8; 8] = b"ZPLQEPH1";
const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Writes bytes to `path` through a temp file in the same directory, then
/// renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name().unwrap_or_default().to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

// --- scan CSV -----------------------------------------------------------

/// Schema: `source_power_w,detuning_hz,dwell_s,counts`. Detunings are
/// ordinary frequency at the boundary; internal detunings are angular.
pub fn write_scan_csv(path: &Path, series: &ScanSeries) -> Result<(), CliError> {
    let mut out = String::from("source_power_w,detuning_hz,dwell_s,counts\n");
    for e in &series.entries {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.source_power,
            e.detuning / TWO_PI,
            e.dwell_time,
            e.counts
        ));
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_scan_csv(
    path: &Path,
    metadata: ScanMetadata,
) -> Result<ScanSeries, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let expected = ["source_power_w", "detuning_hz", "dwell_s", "counts"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(CliError::data(format!(
                "{}: line 1: expected header {expected:?}, got {headers:?}",
                path.display()
            )));
        }
    }
    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        let record =
            record.map_err(|e| CliError::data(format!("{}: line {line}: {e}", path.display())))?;
        if record.len() != 4 {
            return Err(CliError::data(format!(
                "{}: line {line}: expected 4 columns, got {}",
                path.display(),
                record.len()
            )));
        }
        let field = |idx: usize, name: &str| -> Result<f64, CliError> {
            record[idx].trim().parse::<f64>().map_err(|e| {
                CliError::data(format!(
                    "{}: line {line}, column `{name}`: {e}",
                    path.display()
                ))
            })
        };
        entries.push(ScanEntry {
            source_power: field(0, "source_power_w")?,
            detuning: field(1, "detuning_hz")? * TWO_PI,
            dwell_time: field(2, "dwell_s")?,
            counts: field(3, "counts")?,
        });
    }
    if entries.is_empty() {
        return Err(CliError::data(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    let series = ScanSeries { entries, metadata };
    series
        .validate()
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(series)
}

// --- raster CSV -----------------------------------------------------------

/// Schema: `x_m,y_m,counts`, row-major over a rectangular grid.
pub fn write_raster_csv(path: &Path, map: &RasterMap) -> Result<(), CliError> {
    let mut out = String::from("x_m,y_m,counts\n");
    for iy in 0..map.ny {
        for ix in 0..map.nx {
            let (x, y) = map.position(ix, iy);
            out.push_str(&format!("{},{},{}\n", x, y, map.value(ix, iy)));
        }
    }
    write_atomic(path, out.as_bytes())
}

/// Raster metadata that does not live in the CSV itself.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RasterMeta {
    pub dwell_s: f64,
    pub source_power_w: f64,
    #[serde(default)]
    pub distortion_warning: bool,
}

pub fn read_raster_csv(path: &Path, meta: &RasterMeta) -> Result<RasterMap, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record =
            record.map_err(|e| CliError::data(format!("{}: line {line}: {e}", path.display())))?;
        if record.len() != 3 {
            return Err(CliError::data(format!(
                "{}: line {line}: expected 3 columns, got {}",
                path.display(),
                record.len()
            )));
        }
        let parse = |idx: usize, name: &str| -> Result<f64, CliError> {
            record[idx].trim().parse::<f64>().map_err(|e| {
                CliError::data(format!(
                    "{}: line {line}, column `{name}`: {e}",
                    path.display()
                ))
            })
        };
        rows.push((parse(0, "x_m")?, parse(1, "y_m")?, parse(2, "counts")?));
    }
    if rows.is_empty() {
        return Err(CliError::data(format!("{}: no data rows", path.display())));
    }

    // Reconstruct the grid: row-major, x fastest.
    let origin = (rows[0].0, rows[0].1);
    let nx = rows.iter().take_while(|r| r.1 == origin.1).count();
    if nx == 0 || !rows.len().is_multiple_of(nx) {
        return Err(CliError::data(format!(
            "{}: rows do not form a rectangular grid (nx = {nx}, total {})",
            path.display(),
            rows.len()
        )));
    }
    let ny = rows.len() / nx;
    let pitch = if nx > 1 {
        rows[1].0 - rows[0].0
    } else if ny > 1 {
        rows[nx].1 - rows[0].1
    } else {
        return Err(CliError::data(format!(
            "{}: single-pixel raster",
            path.display()
        )));
    };
    if !(pitch > 0.0) {
        return Err(CliError::data(format!(
            "{}: non-positive pixel pitch {pitch}",
            path.display()
        )));
    }
    // Validate grid coordinates against the inferred geometry.
    for (i, row) in rows.iter().enumerate() {
        let ix = i % nx;
        let iy = i / nx;
        let ex = origin.0 + ix as f64 * pitch;
        let ey = origin.1 + iy as f64 * pitch;
        if (row.0 - ex).abs() > 1e-6 * pitch || (row.1 - ey).abs() > 1e-6 * pitch {
            return Err(CliError::data(format!(
                "{}: line {}: pixel at ({}, {}) off the regular grid",
                path.display(),
                i + 2,
                row.0,
                row.1
            )));
        }
    }
    let map = RasterMap {
        pitch,
        origin,
        nx,
        ny,
        values: rows.iter().map(|r| r.2).collect(),
        dwell_time: meta.dwell_s,
        source_power: meta.source_power_w,
        distortion_warning: meta.distortion_warning,
    };
    map.validate()
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(map)
}

// --- photon records -------------------------------------------------------

/// Binary format: 8-byte magic `ZPLQEPH1`, then little-endian u64 picosecond
/// timestamps until EOF.
pub fn write_photons_binary(path: &Path, record: &PhotonRecord) -> Result<(), CliError> {
    let mut bytes = Vec::with_capacity(8 + 8 * record.timestamps_ps.len());
    bytes.extend_from_slice(PHOTON_MAGIC);
    for &t in &record.timestamps_ps {
        bytes.extend_from_slice(&t.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

pub fn read_photons_binary(
    path: &Path,
    duration: f64,
    channel: u8,
) -> Result<PhotonRecord, CliError> {
    let mut f = std::fs::File::open(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[..8] != PHOTON_MAGIC {
        return Err(CliError::data(format!(
            "{}: missing ZPLQEPH1 magic header",
            path.display()
        )));
    }
    let payload = &bytes[8..];
    if payload.len() % 8 != 0 {
        return Err(CliError::data(format!(
            "{}: truncated record ({} trailing bytes)",
            path.display(),
            payload.len() % 8
        )));
    }
    let timestamps_ps: Vec<u64> = payload
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let record = PhotonRecord {
        timestamps_ps,
        duration,
        channel,
    };
    record
        .validate()
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(record)
}

/// CSV alternative: single `timestamp_ps` column.
pub fn write_photons_csv(path: &Path, record: &PhotonRecord) -> Result<(), CliError> {
    let mut out = String::from("timestamp_ps\n");
    for &t in &record.timestamps_ps {
        out.push_str(&format!("{t}\n"));
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_photons_csv(
    path: &Path,
    duration: f64,
    channel: u8,
) -> Result<PhotonRecord, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "timestamp_ps")) => {}
        _ => {
            return Err(CliError::data(format!(
                "{}: line 1: expected `timestamp_ps` header",
                path.display()
            )))
        }
    }
    let mut timestamps_ps = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        timestamps_ps.push(line.trim().parse::<u64>().map_err(|e| {
            CliError::data(format!("{}: line {}: {e}", path.display(), i + 1))
        })?);
    }
    let record = PhotonRecord {
        timestamps_ps,
        duration,
        channel,
    };
    record
        .validate()
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(record)
}

// --- manifests --------------------------------------------------------------

/// Photon-record entry of one molecule in the dataset manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhotonEntry {
    pub ch0: PathBuf,
    pub ch1: PathBuf,
    pub duration_s: f64,
    pub sat_param: f64,
    pub format: crate::config::PhotonFormat,
}

/// One molecule's measurement files and boundary metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMolecule {
    pub id: String,
    pub lambda_zpl_m: f64,
    pub scan_csv: PathBuf,
    pub scan_seed: u64,
    pub raster_csv: Option<PathBuf>,
    pub raster_meta: Option<RasterMeta>,
    pub photons: Option<PhotonEntry>,
}

/// Measurement manifest written by `simulate` and consumed by `analyze`.
/// Contains no ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub rng_algorithm: String,
    pub molecules: Vec<DatasetMolecule>,
}

/// Ground truth of one simulated molecule, for scoring only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthMolecule {
    pub id: String,
    pub gamma_r_rad_s: f64,
    pub gamma_nr_rad_s: f64,
    pub lambda_zpl_m: f64,
    pub alpha: f64,
    pub theta_rad: f64,
    pub phi_isc: f64,
    pub tau_triplet_s: f64,
    pub qe: f64,
    pub p_sat_w: f64,
    pub a_eff_m2: f64,
    /// Analytic lower bound `QE * eta_coll(theta)/eta_coll(0)`.
    pub expected_qe_counts: f64,
    /// Analytic lower bound `QE * cos^2(theta)`.
    pub expected_qe_power: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthManifest {
    pub seed: u64,
    pub molecules: Vec<TruthMolecule>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

// --- results table ----------------------------------------------------------

pub const RESULTS_HEADER: &str = "id,lambda_zpl_m,f_inf_cps,f_inf_sigma_cps,p_sat_w,p_sat_sigma_w,linewidth_fwhm_hz,linewidth_fwhm_sigma_hz,a_eff_m2,a_eff_sigma_m2,i_sat_inv_m2_per_w,i_sat_inv_sigma_m2_per_w,qe_eff_counts,qe_eff_counts_sigma,qe_eff_power,qe_eff_power_sigma,excluded,exclusion_reason";

fn opt_pair(m: &Option<Measured>) -> (String, String) {
    match m {
        Some(v) => (v.value.to_string(), v.sigma.to_string()),
        None => (String::new(), String::new()),
    }
}

/// One row per molecule. Linewidths cross the boundary as ordinary-frequency
/// FWHM in Hz; empty cells mark fields the input data could not provide.
pub fn write_results_csv(path: &Path, results: &[MoleculeResult]) -> Result<(), CliError> {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in results {
        let (a, an) = opt_pair(&r.a_eff);
        let (i, isn) = opt_pair(&r.i_sat_inv);
        let (qp, qpn) = opt_pair(&r.qe_eff_power);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.id,
            r.lambda_zpl,
            r.f_inf.value,
            r.f_inf.sigma,
            r.p_sat.value,
            r.p_sat.sigma,
            r.gamma_tot.value / TWO_PI,
            r.gamma_tot.sigma / TWO_PI,
            a,
            an,
            i,
            isn,
            r.qe_eff_counts.value,
            r.qe_eff_counts.sigma,
            qp,
            qpn,
            r.excluded,
            r.exclusion_reason.as_deref().unwrap_or(""),
        ));
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<MoleculeResult>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let expected: Vec<&str> = RESULTS_HEADER.split(',').collect();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(CliError::data(format!(
                "{}: line 1: unexpected results header",
                path.display()
            )));
        }
    }
    let mut results = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record =
            record.map_err(|e| CliError::data(format!("{}: line {line}: {e}", path.display())))?;
        let num = |idx: usize| -> Result<f64, CliError> {
            record[idx].trim().parse::<f64>().map_err(|e| {
                CliError::data(format!("{}: line {line}, column {}: {e}", path.display(), idx + 1))
            })
        };
        let opt = |vi: usize, si: usize| -> Result<Option<Measured>, CliError> {
            if record[vi].trim().is_empty() {
                Ok(None)
            } else {
                Ok(Some(Measured::new(num(vi)?, num(si)?)))
            }
        };
        results.push(MoleculeResult {
            id: record[0].to_string(),
            lambda_zpl: num(1)?,
            f_inf: Measured::new(num(2)?, num(3)?),
            p_sat: Measured::new(num(4)?, num(5)?),
            gamma_tot: Measured::new(num(6)? * TWO_PI, num(7)? * TWO_PI),
            a_eff: opt(8, 9)?,
            i_sat_inv: opt(10, 11)?,
            qe_eff_counts: Measured::new(num(12)?, num(13)?),
            qe_eff_power: opt(14, 15)?,
            qe_cross_cov: 0.0,
            excluded: record[16].trim() == "true",
            exclusion_reason: {
                let s = record[17].trim();
                (!s.is_empty()).then(|| s.to_string())
            },
        });
    }
    Ok(results)
}
