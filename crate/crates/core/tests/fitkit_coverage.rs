//! Frequentist calibration of the reported fit uncertainties: over many
//! noisy realizations, 1-sigma intervals should contain the truth at the
//! Gaussian rate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use zplqe_core::fitkit::{fit_lorentzian, ScanPoint};

fn lorentzian(x: f64, a: f64, x0: f64, w: f64, b: f64) -> f64 {
    let u = 2.0 * (x - x0) / w;
    b + a / (1.0 + u * u)
}

#[test]
fn one_sigma_coverage_is_gaussian() {
    let (a, x0, w, b) = (2000.0, 0.0, 1.4e8, 80.0);
    let n_trials = 500;
    let mut hits = [0usize; 4];
    let mut fits = 0usize;
    for seed in 0..n_trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<ScanPoint> = (-30..=30)
            .map(|i| {
                let x = i as f64 * w / 8.0;
                let mean = lorentzian(x, a, x0, w, b);
                let counts = Poisson::new(mean).unwrap().sample(&mut rng);
                ScanPoint {
                    detuning: x,
                    rate: counts,
                    sigma: counts.max(1.0).sqrt(),
                }
            })
            .collect();
        let Ok(fit) = fit_lorentzian(&points) else {
            continue;
        };
        fits += 1;
        if (fit.amplitude - a).abs() <= fit.amplitude_sigma() {
            hits[0] += 1;
        }
        if (fit.center - x0).abs() <= fit.center_sigma() {
            hits[1] += 1;
        }
        if (fit.fwhm - w).abs() <= fit.fwhm_sigma() {
            hits[2] += 1;
        }
        if (fit.background - b).abs() <= fit.background_sigma() {
            hits[3] += 1;
        }
    }
    assert!(fits >= 490, "only {fits} of {n_trials} fits converged");
    for (name, h) in ["amplitude", "center", "fwhm", "background"]
        .iter()
        .zip(hits)
    {
        let coverage = h as f64 / fits as f64;
        assert!(
            (0.60..=0.75).contains(&coverage),
            "{name}: 1-sigma coverage {coverage:.3} outside [0.60, 0.75]"
        );
    }
}
