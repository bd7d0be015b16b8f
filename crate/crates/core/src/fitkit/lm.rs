//! Damped least squares (Levenberg–Marquardt) for small dense problems.
//!
//! The models fitted here have 3–4 parameters and smooth analytic Jacobians,
//! so plain normal equations with Marquardt scaling and a tiny Cholesky
//! solver are enough. Positive parameters are handled by the models through
//! a log transform of the internal coordinates; the engine is agnostic.

/// A weighted least-squares model over internal (possibly transformed)
/// parameters.
pub(crate) trait LsqModel {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    /// Weighted residuals `r_i = (y_i - m_i(p)) / sigma_i`.
    fn residuals(&self, params: &[f64], out: &mut [f64]);
    /// Row-major Jacobian `out[i * n_params + j] = d r_i / d p_j`.
    fn jacobian(&self, params: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone)]
pub(crate) struct LmResult {
    /// Internal parameters at the optimum.
    pub params: Vec<f64>,
    /// Sum of squared weighted residuals.
    pub cost: f64,
    /// Covariance of the internal parameters, row-major n x n.
    pub covariance: Vec<f64>,
    pub converged: bool,
    #[allow(dead_code)]
    pub iterations: usize,
}

const MAX_ITER: usize = 200;
const FTOL: f64 = 1e-14;
const XTOL: f64 = 1e-12;
const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e14;

/// In-place Cholesky solve of `A x = b` for symmetric positive-definite `A`
/// (row-major). Returns false if not positive definite.
fn cholesky_solve(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    // Decompose A = L L^T in the lower triangle.
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= a[i * n + k] * a[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return false;
                }
                a[i * n + i] = sum.sqrt();
            } else {
                a[i * n + j] = sum / a[j * n + j];
            }
        }
    }
    // Forward then back substitution.
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= a[i * n + k] * b[k];
        }
        b[i] = sum / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut sum = b[i];
        for k in i + 1..n {
            sum -= a[k * n + i] * b[k];
        }
        b[i] = sum / a[i * n + i];
    }
    true
}

/// Inverse of a symmetric positive-definite matrix by column-wise Cholesky
/// solves; adds a diagonal jitter when the matrix is numerically singular
/// (an unconstrained parameter direction).
fn spd_inverse(a: &[f64], n: usize) -> Vec<f64> {
    let mut jitter = 0.0;
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0_f64, f64::max);
    loop {
        let mut inv = vec![0.0; n * n];
        let mut ok = true;
        for col in 0..n {
            let mut m = a.to_vec();
            for i in 0..n {
                m[i * n + i] += jitter;
            }
            let mut e = vec![0.0; n];
            e[col] = 1.0;
            if !cholesky_solve(&mut m, &mut e, n) {
                ok = false;
                break;
            }
            for row in 0..n {
                inv[row * n + col] = e[row];
            }
        }
        if ok {
            return inv;
        }
        jitter = if jitter == 0.0 {
            scale.max(1.0) * 1e-12
        } else {
            jitter * 100.0
        };
        if jitter > scale.max(1.0) {
            // Give up: return a huge-variance diagonal so callers see the
            // parameters as unconstrained rather than spuriously precise.
            let mut inv = vec![0.0; n * n];
            for i in 0..n {
                inv[i * n + i] = f64::INFINITY;
            }
            return inv;
        }
    }
}

fn cost_of(model: &dyn LsqModel, params: &[f64], buf: &mut [f64]) -> f64 {
    model.residuals(params, buf);
    buf.iter().map(|r| r * r).sum()
}

/// Runs damped least squares from `init`; returns internal parameters, cost
/// and internal covariance `(J^T J)^{-1}`.
pub(crate) fn levenberg_marquardt(model: &dyn LsqModel, init: &[f64]) -> LmResult {
    let n = model.n_params();
    let m = model.n_residuals();
    debug_assert_eq!(init.len(), n);

    let mut params = init.to_vec();
    let mut resid = vec![0.0; m];
    let mut jac = vec![0.0; m * n];
    let mut cost = cost_of(model, &params, &mut resid);
    let mut lambda = LAMBDA_INIT;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..MAX_ITER {
        iterations = iter + 1;
        model.residuals(&params, &mut resid);
        model.jacobian(&params, &mut jac);

        // Normal equations: A = J^T J, g = J^T r.
        let mut a = vec![0.0; n * n];
        let mut g = vec![0.0; n];
        for i in 0..m {
            let row = &jac[i * n..(i + 1) * n];
            for p in 0..n {
                g[p] += row[p] * resid[i];
                for q in p..n {
                    a[p * n + q] += row[p] * row[q];
                }
            }
        }
        for p in 0..n {
            for q in 0..p {
                a[p * n + q] = a[q * n + p];
            }
        }

        if !g.iter().all(|v| v.is_finite()) {
            break;
        }

        let mut accepted = false;
        while lambda <= LAMBDA_MAX {
            let mut damped = a.clone();
            for p in 0..n {
                let d = a[p * n + p];
                damped[p * n + p] = d + lambda * d.max(1e-300);
            }
            let mut step: Vec<f64> = g.iter().map(|v| -v).collect();
            if !cholesky_solve(&mut damped, &mut step, n) {
                lambda *= 10.0;
                continue;
            }
            let trial: Vec<f64> = params.iter().zip(&step).map(|(p, s)| p + s).collect();
            let trial_cost = cost_of(model, &trial, &mut resid);
            if trial_cost.is_finite() && trial_cost <= cost {
                let step_small = step
                    .iter()
                    .zip(&params)
                    .all(|(s, p)| s.abs() <= XTOL * (p.abs() + XTOL));
                let cost_small = (cost - trial_cost) <= FTOL * cost.max(1e-300);
                params = trial;
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if step_small || cost_small {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if converged || !accepted {
            converged = converged || !accepted && lambda > LAMBDA_MAX;
            break;
        }
    }

    // Covariance from the undamped normal matrix at the solution.
    model.jacobian(&params, &mut jac);
    let mut a = vec![0.0; n * n];
    for i in 0..m {
        let row = &jac[i * n..(i + 1) * n];
        for p in 0..n {
            for q in p..n {
                a[p * n + q] += row[p] * row[q];
            }
        }
    }
    for p in 0..n {
        for q in 0..p {
            a[p * n + q] = a[q * n + p];
        }
    }
    let covariance = spd_inverse(&a, n);

    LmResult {
        params,
        cost,
        covariance,
        converged,
        iterations,
    }
}

/// Deterministic multistart: the heuristic start plus scaled perturbations.
/// Picks the converged run with the lowest cost; sets the multimodality flag
/// when another converged run found a distinct optimum.
pub(crate) fn multistart(model: &dyn LsqModel, init: &[f64]) -> (LmResult, bool) {
    const PERTURB: [f64; 2] = [0.25, -0.2];
    let mut runs = vec![levenberg_marquardt(model, init)];
    for &eps in &PERTURB {
        let shifted: Vec<f64> = init.iter().map(|p| p + eps * (p.abs() + 1.0)).collect();
        runs.push(levenberg_marquardt(model, &shifted));
    }
    let best_idx = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.converged)
        .min_by(|a, b| a.1.cost.total_cmp(&b.1.cost))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let best = runs[best_idx].clone();
    let multimodal = runs.iter().enumerate().any(|(i, r)| {
        i != best_idx
            && r.converged
            && r.cost > best.cost * (1.0 + 1e-6)
            && r.params
                .iter()
                .zip(&best.params)
                .any(|(a, b)| (a - b).abs() > 1e-3 * (b.abs() + 1e-12))
    });
    (best, multimodal)
}
