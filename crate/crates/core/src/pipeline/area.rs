//! Effective illumination area from a raster map:
//! `A_eff = integral I dA / I(r_mol)`, discretized as the background-
//! subtracted pixel sum over the bicubically interpolated peak.

use crate::simulator::RasterMap;

use super::PipelineError;

/// Catmull-Rom cubic kernel weights for the four samples around fractional
/// offset `f` in [0, 1); interpolating (exact at grid points).
fn cubic_weights(f: f64) -> [f64; 4] {
    let f2 = f * f;
    let f3 = f2 * f;
    [
        -0.5 * f3 + f2 - 0.5 * f,
        1.5 * f3 - 2.5 * f2 + 1.0,
        -1.5 * f3 + 2.0 * f2 + 0.5 * f,
        0.5 * f3 - 0.5 * f2,
    ]
}

/// Bicubic interpolation of the map at fractional pixel coordinates, plus
/// the per-pixel weights used (for error propagation).
fn bicubic(map: &RasterMap, fx: f64, fy: f64) -> (f64, Vec<(usize, f64)>) {
    let ix = fx.floor() as isize;
    let iy = fy.floor() as isize;
    let wx = cubic_weights(fx - ix as f64);
    let wy = cubic_weights(fy - iy as f64);
    let mut value = 0.0;
    let mut weights = Vec::with_capacity(16);
    for (dy, &wyv) in wy.iter().enumerate() {
        let y = (iy + dy as isize - 1) as usize;
        for (dx, &wxv) in wx.iter().enumerate() {
            let x = (ix + dx as isize - 1) as usize;
            let w = wxv * wyv;
            value += w * map.value(x, y);
            weights.push((y * map.nx + x, w));
        }
    }
    (value, weights)
}

/// Median of the border-pixel counts, used as the background estimate.
fn border_background(map: &RasterMap) -> (f64, f64) {
    let mut border = Vec::with_capacity(2 * (map.nx + map.ny));
    for ix in 0..map.nx {
        border.push(map.value(ix, 0));
        border.push(map.value(ix, map.ny - 1));
    }
    for iy in 1..map.ny - 1 {
        border.push(map.value(0, iy));
        border.push(map.value(map.nx - 1, iy));
    }
    border.sort_by(f64::total_cmp);
    let median = border[border.len() / 2];
    // Variance of a Poisson median is ~ (pi/2) * mean / n.
    let var = std::f64::consts::FRAC_PI_2 * median.max(1.0) / border.len() as f64;
    (median, var)
}

fn fractional_position(
    map: &RasterMap,
    mol_position: (f64, f64),
) -> Result<(f64, f64), PipelineError> {
    let fx = (mol_position.0 - map.origin.0) / map.pitch;
    let fy = (mol_position.1 - map.origin.1) / map.pitch;
    let margin = 3.0;
    if fx < margin
        || fy < margin
        || fx > (map.nx - 1) as f64 - margin
        || fy > (map.ny - 1) as f64 - margin
    {
        return Err(PipelineError::PositionOutOfBounds {
            x: mol_position.0,
            y: mol_position.1,
        });
    }
    Ok((fx, fy))
}

/// Effective illumination area (m^2) with a first-order Poisson standard
/// error.
///
/// The molecule position must sit at least 3 pixels inside the map. The
/// border-median background is subtracted from both the pixel sum and the
/// interpolated peak; a peak at or below the background is an error.
pub fn effective_area_with_uncertainty(
    map: &RasterMap,
    mol_position: (f64, f64),
) -> Result<(f64, f64), PipelineError> {
    let (fx, fy) = fractional_position(map, mol_position)?;
    let (background, bg_var) = border_background(map);
    let (peak_raw, weights) = bicubic(map, fx, fy);
    let peak = peak_raw - background;
    if peak <= 0.0 {
        return Err(PipelineError::NegativeArea {
            background,
            peak: peak_raw,
        });
    }
    let n_px = map.values.len() as f64;
    let sum: f64 = map.values.iter().sum::<f64>() - n_px * background;
    if sum <= 0.0 {
        return Err(PipelineError::NegativeArea {
            background,
            peak: peak_raw,
        });
    }
    let area = sum * map.pitch * map.pitch / peak;

    // Poisson error propagation for A = S / p with shared pixels and the
    // common background estimate.
    let var_sum: f64 = map.values.iter().map(|&v| v.max(1.0)).sum::<f64>() + n_px * n_px * bg_var;
    let var_peak: f64 = weights
        .iter()
        .map(|&(idx, w)| w * w * map.values[idx].max(1.0))
        .sum::<f64>()
        + bg_var;
    let cov: f64 = weights
        .iter()
        .map(|&(idx, w)| w * map.values[idx].max(1.0))
        .sum::<f64>()
        + n_px * bg_var;
    let rel_var = (var_sum / (sum * sum) + var_peak / (peak * peak)
        - 2.0 * cov / (sum * peak))
        .max(0.0);
    Ok((area, area * rel_var.sqrt()))
}

/// Effective illumination area (m^2); see [`effective_area_with_uncertainty`].
pub fn effective_area(map: &RasterMap, mol_position: (f64, f64)) -> Result<f64, PipelineError> {
    effective_area_with_uncertainty(map, mol_position).map(|(a, _)| a)
}

/// Sub-pixel offset of a peak from three samples via a parabola through the
/// log intensities — exact for a Gaussian profile.
fn log_quadratic_offset(vm: f64, v0: f64, vp: f64) -> f64 {
    if vm <= 0.0 || v0 <= 0.0 || vp <= 0.0 {
        return 0.0;
    }
    let (lm, l0, lp) = (vm.ln(), v0.ln(), vp.ln());
    let denom = lm - 2.0 * l0 + lp;
    if denom >= -1e-12 {
        return 0.0; // not a maximum
    }
    (0.5 * (lm - lp) / denom).clamp(-1.0, 1.0)
}

/// Locates the molecule as the brightest pixel refined to sub-pixel
/// precision by log-quadratic interpolation along each axis.
pub fn locate_molecule(map: &RasterMap) -> (f64, f64) {
    let (background, _) = border_background(map);
    let mut best = (0usize, 0usize);
    let mut best_v = f64::NEG_INFINITY;
    for iy in 0..map.ny {
        for ix in 0..map.nx {
            let v = map.value(ix, iy);
            if v > best_v {
                best_v = v;
                best = (ix, iy);
            }
        }
    }
    let (bx, by) = best;
    if bx == 0 || by == 0 || bx == map.nx - 1 || by == map.ny - 1 {
        return map.position(bx, by);
    }
    let v = |ix: usize, iy: usize| map.value(ix, iy) - background;
    let dx = log_quadratic_offset(v(bx - 1, by), v(bx, by), v(bx + 1, by));
    let dy = log_quadratic_offset(v(bx, by - 1), v(bx, by), v(bx, by + 1));
    (
        map.origin.0 + (bx as f64 + dx) * map.pitch,
        map.origin.1 + (by as f64 + dy) * map.pitch,
    )
}
