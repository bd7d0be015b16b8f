//! Case-resampling bootstrap for fit-parameter standard errors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::FitError;

/// Standard errors of fitted parameters by case-resampling bootstrap.
///
/// Draws `n_resamples` datasets of the same size with replacement, refits
/// each, and returns the per-parameter standard deviation over the converged
/// refits, in resample-index order for determinism. Needs at least 100
/// resamples; fails when more than 20 % of the refits error out.
pub fn bootstrap_uncertainty<D, F>(
    data: &[D],
    fit: F,
    n_resamples: usize,
    seed: u64,
) -> Result<Vec<f64>, FitError>
where
    D: Clone,
    F: Fn(&[D]) -> Result<Vec<f64>, FitError>,
{
    if n_resamples < 100 {
        return Err(FitError::InvalidInput(format!(
            "need >= 100 resamples, got {n_resamples}"
        )));
    }
    if data.is_empty() {
        return Err(FitError::InsufficientData("empty dataset".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples: Vec<Vec<f64>> = Vec::with_capacity(n_resamples);
    let mut failures = 0usize;
    let mut resample = Vec::with_capacity(data.len());
    for _ in 0..n_resamples {
        resample.clear();
        for _ in 0..data.len() {
            resample.push(data[rng.gen_range(0..data.len())].clone());
        }
        match fit(&resample) {
            Ok(params) => samples.push(params),
            Err(_) => failures += 1,
        }
    }
    if failures * 5 > n_resamples {
        return Err(FitError::BootstrapUnstable {
            failed: failures,
            total: n_resamples,
        });
    }

    let n_params = samples[0].len();
    let n = samples.len() as f64;
    let mut sigmas = Vec::with_capacity(n_params);
    for p in 0..n_params {
        let mean = samples.iter().map(|s| s[p]).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s[p] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        sigmas.push(var.sqrt());
    }
    Ok(sigmas)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Unweighted least squares for y = m x + c, with the analytic solution.
    fn fit_line(data: &[(f64, f64)]) -> Result<Vec<f64>, FitError> {
        let n = data.len() as f64;
        let sx: f64 = data.iter().map(|d| d.0).sum();
        let sy: f64 = data.iter().map(|d| d.1).sum();
        let sxx: f64 = data.iter().map(|d| d.0 * d.0).sum();
        let sxy: f64 = data.iter().map(|d| d.0 * d.1).sum();
        let denom = n * sxx - sx * sx;
        if denom.abs() < 1e-12 {
            return Err(FitError::DegenerateData("collinear x".into()));
        }
        let m = (n * sxy - sx * sy) / denom;
        let c = (sy - m * sx) / n;
        Ok(vec![m, c])
    }

    #[test]
    fn zero_noise_gives_zero_sigma() {
        let data: Vec<(f64, f64)> = (0..40).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        let sigmas = bootstrap_uncertainty(&data, fit_line, 200, 1).unwrap();
        assert!(sigmas[0].abs() < 1e-9, "slope sigma {}", sigmas[0]);
        assert!(sigmas[1].abs() < 1e-8, "intercept sigma {}", sigmas[1]);
    }

    #[test]
    fn gaussian_noise_matches_analytic_sigma() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let noise_sigma = 0.5;
        let n = 60usize;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let normal = Normal::new(0.0, noise_sigma).unwrap();
        let data: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let x = i as f64 / 10.0;
                (x, 2.0 * x + 1.0 + normal.sample(&mut rng))
            })
            .collect();
        // Analytic least-squares sigma of the slope.
        let xs: Vec<f64> = data.iter().map(|d| d.0).collect();
        let mean_x = xs.iter().sum::<f64>() / n as f64;
        let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
        let analytic = noise_sigma / sxx.sqrt();

        let sigmas = bootstrap_uncertainty(&data, fit_line, 500, 2).unwrap();
        assert!(
            (sigmas[0] - analytic).abs() < 0.2 * analytic,
            "bootstrap slope sigma {} vs analytic {analytic}",
            sigmas[0]
        );
    }

    #[test]
    fn too_few_resamples_rejected() {
        let data: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, i as f64)).collect();
        assert!(matches!(
            bootstrap_uncertainty(&data, fit_line, 99, 1),
            Err(FitError::InvalidInput(_))
        ));
    }

    #[test]
    fn deterministic_per_seed() {
        let data: Vec<(f64, f64)> = (0..30).map(|i| (i as f64, 3.0 * i as f64 + 0.3)).collect();
        let a = bootstrap_uncertainty(&data, fit_line, 150, 5).unwrap();
        let b = bootstrap_uncertainty(&data, fit_line, 150, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unstable_fits_reported() {
        let data: Vec<(f64, f64)> = vec![(1.0, 1.0); 10]; // always collinear
        assert!(matches!(
            bootstrap_uncertainty(&data, fit_line, 100, 1),
            Err(FitError::BootstrapUnstable { .. })
        ));
    }
}
