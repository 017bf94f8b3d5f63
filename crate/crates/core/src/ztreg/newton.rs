//! Damped Newton ascent with optional upper bounds on individual parameters.

use nalgebra::{DMatrix, DVector};

/// A smooth objective to maximize.
pub(crate) trait Objective {
    fn dim(&self) -> usize;

    /// Objective value; fills `grad` with the analytic gradient.
    fn value_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64;

    fn value(&self, theta: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.value_grad(theta, &mut g)
    }

    /// Analytic Hessian when the model provides one.
    fn hessian(&self, _theta: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    /// Per-parameter upper bound; `None` for unbounded.
    pub upper: Vec<Option<f64>>,
}

impl NewtonOptions {
    pub fn new(dim: usize) -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-8,
            step_tol: 1e-10,
            upper: vec![None; dim],
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonOutcome {
    pub theta: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Parameters pinned at their upper bound with the gradient pushing out.
    pub at_bound: Vec<bool>,
}

/// Central differences of the analytic gradient, symmetrized.
pub(crate) fn fd_hessian<O: Objective + ?Sized>(obj: &O, theta: &[f64]) -> DMatrix<f64> {
    let d = obj.dim();
    let mut h = DMatrix::zeros(d, d);
    let mut gp = vec![0.0; d];
    let mut gm = vec![0.0; d];
    let mut x = theta.to_vec();
    for j in 0..d {
        let step = 1e-5 * theta[j].abs().max(1.0);
        x[j] = theta[j] + step;
        obj.value_grad(&x, &mut gp);
        x[j] = theta[j] - step;
        obj.value_grad(&x, &mut gm);
        x[j] = theta[j];
        for i in 0..d {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    (&h + h.transpose()) * 0.5
}

pub(crate) fn hessian<O: Objective + ?Sized>(obj: &O, theta: &[f64]) -> DMatrix<f64> {
    obj.hessian(theta).unwrap_or_else(|| fd_hessian(obj, theta))
}

/// Solves `(−H_free + λI) step = g_free` with the smallest `λ ≥ 0` from a
/// short geometric ladder that makes the system positive definite.
fn damped_newton_step(neg_h: DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = neg_h.clone().cholesky() {
        return Some(ch.solve(g));
    }
    let scale = neg_h.diagonal().amax().max(1e-8);
    let mut lambda = 1e-8 * scale;
    for _ in 0..30 {
        let shifted = &neg_h + DMatrix::identity(neg_h.nrows(), neg_h.ncols()) * lambda;
        if let Some(ch) = shifted.cholesky() {
            return Some(ch.solve(g));
        }
        lambda *= 10.0;
    }
    None
}

pub(crate) fn maximize<O: Objective + ?Sized>(
    obj: &O,
    theta0: &[f64],
    opts: &NewtonOptions,
) -> NewtonOutcome {
    const MAX_STEP: f64 = 5.0;
    let d = obj.dim();
    let mut theta = theta0.to_vec();
    for (t, ub) in theta.iter_mut().zip(&opts.upper) {
        if let Some(ub) = ub {
            *t = t.min(*ub);
        }
    }
    let mut grad = vec![0.0; d];
    let mut value = obj.value_grad(&theta, &mut grad);
    let mut at_bound = vec![false; d];
    let mut trial = vec![0.0; d];
    let mut trial_grad = vec![0.0; d];

    let outcome = |theta: Vec<f64>, value, converged, iterations, at_bound| NewtonOutcome {
        theta,
        value,
        converged,
        iterations,
        at_bound,
    };

    if !value.is_finite() {
        return outcome(theta, value, false, 0, at_bound);
    }

    for iter in 0..opts.max_iter {
        for i in 0..d {
            at_bound[i] = matches!(opts.upper[i], Some(ub) if theta[i] >= ub && grad[i] > 0.0);
        }
        let free: Vec<usize> = (0..d).filter(|&i| !at_bound[i]).collect();
        let gmax = free.iter().map(|&i| grad[i].abs()).fold(0.0, f64::max);
        if free.is_empty() {
            return outcome(theta, value, true, iter, at_bound);
        }

        let h = hessian(obj, &theta);
        let neg_h = DMatrix::from_fn(free.len(), free.len(), |a, b| -h[(free[a], free[b])]);
        let g_free = DVector::from_iterator(free.len(), free.iter().map(|&i| grad[i]));
        let Some(mut step) = damped_newton_step(neg_h, &g_free) else {
            return outcome(theta, value, false, iter, at_bound);
        };
        let smax = step.amax();
        if smax > MAX_STEP {
            step *= MAX_STEP / smax;
        }
        if gmax < opts.grad_tol && step.amax() < opts.step_tol {
            return outcome(theta, value, true, iter, at_bound);
        }

        let slope = g_free.dot(&step);
        // Below this the predicted gain is lost in the rounding of `value`,
        // so the Armijo test cannot tell ascent from noise.
        let noise = 64.0 * f64::EPSILON * (1.0 + value.abs());
        let flat = slope < noise;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            trial.copy_from_slice(&theta);
            for (k, &i) in free.iter().enumerate() {
                let mut v = theta[i] + t * step[k];
                if let Some(ub) = opts.upper[i] {
                    v = v.min(ub);
                }
                trial[i] = v;
            }
            let v = obj.value_grad(&trial, &mut trial_grad);
            let sufficient = if flat {
                v >= value - noise
            } else {
                v >= value + 1e-4 * t * slope
            };
            if v.is_finite() && sufficient {
                theta.copy_from_slice(&trial);
                grad.copy_from_slice(&trial_grad);
                value = v;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No representable ascent left along the Newton direction.
            return outcome(theta, value, gmax < opts.grad_tol, iter + 1, at_bound);
        }
    }
    let gmax = (0..d)
        .filter(|&i| !at_bound[i])
        .map(|i| grad[i].abs())
        .fold(0.0, f64::max);
    let converged = gmax < opts.grad_tol;
    outcome(theta, value, converged, opts.max_iter, at_bound)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// −(x−1)² − 10(y+2)² − (x−1)(y+2)
    struct Quadratic;

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            2
        }
        fn value_grad(&self, t: &[f64], g: &mut [f64]) -> f64 {
            let (a, b) = (t[0] - 1.0, t[1] + 2.0);
            g[0] = -2.0 * a - b;
            g[1] = -20.0 * b - a;
            -a * a - 10.0 * b * b - a * b
        }
    }

    /// Increasing in its single parameter; the bound is active at the optimum.
    struct Ramp;

    impl Objective for Ramp {
        fn dim(&self) -> usize {
            1
        }
        fn value_grad(&self, t: &[f64], g: &mut [f64]) -> f64 {
            g[0] = (-t[0]).exp();
            -(-t[0]).exp()
        }
    }

    #[test]
    fn quadratic_optimum() {
        let out = maximize(&Quadratic, &[10.0, 10.0], &NewtonOptions::new(2));
        assert!(out.converged);
        assert!((out.theta[0] - 1.0).abs() < 1e-10);
        assert!((out.theta[1] + 2.0).abs() < 1e-10);
    }

    #[test]
    fn bound_is_respected_and_reported() {
        let mut opts = NewtonOptions::new(1);
        opts.upper[0] = Some(3.0);
        let out = maximize(&Ramp, &[0.0], &opts);
        assert!(out.converged);
        assert_eq!(out.theta[0], 3.0);
        assert!(out.at_bound[0]);
    }

    #[test]
    fn fd_hessian_matches_quadratic() {
        let h = fd_hessian(&Quadratic, &[0.3, -0.7]);
        assert!((h[(0, 0)] + 2.0).abs() < 1e-6);
        assert!((h[(1, 1)] + 20.0).abs() < 1e-6);
        assert!((h[(0, 1)] + 1.0).abs() < 1e-6);
    }
}
