//! L2-penalised logistic regression on aggregated (row, class-count) data,
//! solved by damped Newton iterations.

use nalgebra::{DMatrix, DVector};

/// Solver settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonSettings {
    /// Penalty `λ` on the coefficients (not the intercept) of the mean loss.
    pub penalty: f64,
    /// Convergence threshold on the Euclidean norm of the gradient.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self { penalty: 1e-3, tol: 1e-8, max_iter: 200 }
    }
}

/// Design matrix with one row per distinct data vector and its class counts.
#[derive(Clone, Debug)]
pub struct CountData {
    /// `rows × (1 + p)`; the first column is the intercept.
    pub x: DMatrix<f64>,
    pub positives: Vec<f64>,
    pub negatives: Vec<f64>,
}

impl CountData {
    pub fn total(&self) -> f64 {
        self.positives.iter().sum::<f64>() + self.negatives.iter().sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonFit {
    /// `[intercept, coefficients…]`.
    pub params: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Penalised mean negative log-likelihood at linear predictor `eta`.
fn objective(data: &CountData, eta: &DVector<f64>, params: &DVector<f64>, penalty: f64, total: f64) -> f64 {
    let mut loss = 0.0;
    for r in 0..eta.len() {
        let e = eta[r];
        loss += data.positives[r] * softplus(-e) + data.negatives[r] * softplus(e);
    }
    let ridge: f64 = params.iter().skip(1).map(|w| w * w).sum();
    loss / total + 0.5 * penalty * ridge
}

/// Mean log-loss of `params` on `data`, without the penalty.
pub fn mean_log_loss(data: &CountData, params: &[f64]) -> f64 {
    let p = DVector::from_column_slice(params);
    let eta = &data.x * &p;
    let total = data.total();
    objective(data, &eta, &p, 0.0, total)
}

/// Minimises `(1/n) Σ loss + (λ/2) ‖w‖²` from a zero start.
pub fn fit_newton(data: &CountData, settings: &NewtonSettings) -> NewtonFit {
    let rows = data.x.nrows();
    let cols = data.x.ncols();
    let total = data.total();
    let mut params = DVector::<f64>::zeros(cols);
    let mut eta = DVector::<f64>::zeros(rows);
    let mut current = objective(data, &eta, &params, settings.penalty, total);
    let mut grad_norm;
    let mut scaled = DMatrix::<f64>::zeros(rows, cols);
    let mut resid = DVector::<f64>::zeros(rows);
    let mut weight = vec![0.0; rows];

    let mut iterations = 0;
    loop {
        for r in 0..rows {
            let n = data.positives[r] + data.negatives[r];
            let s = sigmoid(eta[r]);
            resid[r] = (n * s - data.positives[r]) / total;
            weight[r] = (n * s * (1.0 - s) / total).sqrt();
        }
        for c in 0..cols {
            for r in 0..rows {
                scaled[(r, c)] = data.x[(r, c)] * weight[r];
            }
        }
        let mut grad = data.x.tr_mul(&resid);
        for c in 1..cols {
            grad[c] += settings.penalty * params[c];
        }
        grad_norm = grad.norm();
        if grad_norm < settings.tol || iterations == settings.max_iter {
            break;
        }
        iterations += 1;
        let mut hess = scaled.tr_mul(&scaled);
        for c in 1..cols {
            hess[(c, c)] += settings.penalty;
        }
        let Some(step) = solve_spd(hess, &grad) else { break };
        let x_step = &data.x * &step;
        let slope = -grad.dot(&step);
        // Armijo backtracking on the penalised objective.
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial_params = &params - t * &step;
            let trial_eta = &eta - t * &x_step;
            let value = objective(data, &trial_eta, &trial_params, settings.penalty, total);
            // the rounding allowance lets full steps through near the optimum
            if value <= current + 1e-4 * t * slope + 8.0 * f64::EPSILON * current.abs() {
                params = trial_params;
                eta = trial_eta;
                current = value;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    NewtonFit {
        params: params.as_slice().to_vec(),
        converged: grad_norm < settings.tol,
        iterations,
        grad_norm,
    }
}

/// Solves `H δ = g` for symmetric positive definite `H`, adding diagonal
/// jitter if the factorisation fails.
fn solve_spd(mut hess: DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let n = hess.nrows();
    let mut jitter = 0.0;
    for _ in 0..8 {
        if let Some(chol) = hess.clone().cholesky() {
            return Some(chol.solve(grad));
        }
        let next = if jitter == 0.0 { 1e-12 } else { jitter * 100.0 };
        for i in 0..n {
            hess[(i, i)] += next - jitter;
        }
        jitter = next;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(rows: &[(f64, f64, f64)]) -> CountData {
        let mut x = DMatrix::zeros(rows.len(), 2);
        for (r, row) in rows.iter().enumerate() {
            x[(r, 0)] = 1.0;
            x[(r, 1)] = row.0;
        }
        CountData {
            x,
            positives: rows.iter().map(|r| r.1).collect(),
            negatives: rows.iter().map(|r| r.2).collect(),
        }
    }

    #[test]
    fn saturated_model_recovers_log_odds() {
        // two cells with known empirical log-odds; tiny penalty
        let d = data(&[(-1.0, 30.0, 70.0), (1.0, 80.0, 20.0)]);
        let fit = fit_newton(&d, &NewtonSettings { penalty: 0.0, ..Default::default() });
        assert!(fit.converged);
        let lo = |x: f64| fit.params[0] + fit.params[1] * x;
        assert!((lo(-1.0) - (30.0f64 / 70.0).ln()).abs() < 1e-8);
        assert!((lo(1.0) - 4.0f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn separable_data_has_finite_optimum() {
        let d = data(&[(-1.0, 0.0, 50.0), (1.0, 50.0, 0.0)]);
        let fit = fit_newton(&d, &NewtonSettings::default());
        assert!(fit.converged);
        assert!(fit.params.iter().all(|p| p.is_finite()));
        assert!(fit.params[1] > 1.0);
    }

    #[test]
    fn balanced_identical_classes_give_zero() {
        let d = data(&[(-1.0, 10.0, 10.0), (0.5, 3.0, 3.0), (2.0, 7.0, 7.0)]);
        let fit = fit_newton(&d, &NewtonSettings::default());
        assert!(fit.params.iter().all(|p| p.abs() < 1e-9));
    }
}
