//! Log-likelihoods and analytic gradients for the count regressions.
//!
//! Parameters are `θ = (β, [ln α])`. Poisson and negative-binomial models use
//! a log link with `ln eᵢ` as offset; the binomial uses a logit link with
//! `round(eᵢ)` trials.

use nalgebra::DMatrix;

use super::newton::Objective;
use super::{Family, ModelData, ModelSpec};
use crate::distributions::{ln_factorial, ln_rising};

pub(crate) struct Likelihood<'a> {
    pub data: &'a ModelData,
    pub spec: ModelSpec,
}

/// Per-observation log-density and its derivatives.
struct Terms {
    value: f64,
    /// d/dη
    d_eta: f64,
    /// d²/dη², where available analytically.
    d2_eta: f64,
    /// d/d(ln α), negative binomial only.
    d_log_size: f64,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn poisson_terms(y: u64, ln_mu: f64, truncated: bool) -> Terms {
    let mu = ln_mu.exp();
    let yf = y as f64;
    let mut value = yf * ln_mu - mu - ln_factorial(y);
    if !truncated {
        return Terms {
            value,
            d_eta: yf - mu,
            d2_eta: -mu,
            d_log_size: 0.0,
        };
    }
    // mass = P(Y ≥ 1); q = μ / mass is the truncated mean.
    let mass = -(-mu).exp_m1();
    value -= mass.ln();
    let q = mu / mass;
    let p0 = (-mu).exp();
    Terms {
        value,
        d_eta: yf - q,
        d2_eta: -q * (1.0 - q * p0),
        d_log_size: 0.0,
    }
}

fn binomial_terms(y: u64, trials: u64, eta: f64, truncated: bool) -> Terms {
    let n = trials as f64;
    let yf = y as f64;
    let ln_rho = -softplus(-eta);
    let ln_not = -softplus(eta);
    let rho = ln_rho.exp();
    let ln_choose = ln_factorial(trials) - ln_factorial(y) - ln_factorial(trials.saturating_sub(y));
    let mut value = if y > trials {
        f64::NEG_INFINITY
    } else {
        ln_choose + yf * ln_rho + (n - yf) * ln_not
    };
    if !truncated {
        return Terms {
            value,
            d_eta: yf - n * rho,
            d2_eta: -n * rho * (1.0 - rho),
            d_log_size: 0.0,
        };
    }
    let ln_p0 = n * ln_not;
    let mass = -ln_p0.exp_m1();
    let p0 = ln_p0.exp();
    value -= mass.ln();
    let q = n * rho / mass;
    Terms {
        value,
        d_eta: yf - q,
        d2_eta: -(q * (1.0 - rho) - q * q * p0),
        d_log_size: 0.0,
    }
}

fn negbin_terms(y: u64, ln_mu: f64, size: f64, truncated: bool) -> Terms {
    let mu = ln_mu.exp();
    let yf = y as f64;
    let a = size;
    let ln1p_ratio = (mu / a).ln_1p();
    let ln_p0 = -a * ln1p_ratio;
    let mut value = ln_rising(a, y) - ln_factorial(y)
        + ln_p0
        + if y == 0 {
            0.0
        } else {
            yf * (ln_mu - (a + mu).ln())
        };
    let digamma_diff: f64 = (0..y).map(|j| 1.0 / (a + j as f64)).sum();
    let mut d_eta = a * (yf - mu) / (a + mu);
    let mut d_size = digamma_diff - ln1p_ratio + (mu - yf) / (a + mu);
    if truncated {
        let mass = -ln_p0.exp_m1();
        value -= mass.ln();
        let r = ln_p0.exp() / mass;
        d_eta += r * (-a * mu / (a + mu));
        d_size += r * (-ln1p_ratio + mu / (a + mu));
    }
    Terms {
        value,
        d_eta,
        d2_eta: f64::NAN,
        d_log_size: a * d_size,
    }
}

impl Likelihood<'_> {
    fn n_beta(&self) -> usize {
        self.spec.lp.n_coef()
    }

    fn terms(&self, i: usize, eta: f64, theta: &[f64]) -> Terms {
        let d = self.data;
        let y = d.events[i];
        let truncated = self.spec.truncated;
        match self.spec.family {
            Family::Poisson => poisson_terms(y, d.ln_exposure[i] + eta, truncated),
            Family::NegBin => {
                let size = theta[self.n_beta()].exp();
                negbin_terms(y, d.ln_exposure[i] + eta, size, truncated)
            }
            Family::Binomial => binomial_terms(y, d.trials[i], eta, truncated),
        }
    }

    /// Log-likelihood contributions at `θ`, for callers that need them per study.
    #[cfg(test)]
    pub fn per_obs(&self, theta: &[f64]) -> Vec<f64> {
        let mut h = [0.0; 4];
        (0..self.data.len())
            .map(|i| {
                let p = self.spec.lp.fill(self.data.x1[i], self.data.x2[i], &mut h);
                let eta: f64 = h[..p].iter().zip(theta).map(|(a, b)| a * b).sum();
                self.terms(i, eta, theta).value
            })
            .collect()
    }
}

impl Objective for Likelihood<'_> {
    fn dim(&self) -> usize {
        self.n_beta() + usize::from(self.spec.family == Family::NegBin)
    }

    fn value_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let p = self.n_beta();
        let mut h = [0.0; 4];
        let mut total = 0.0;
        for i in 0..self.data.len() {
            self.spec.lp.fill(self.data.x1[i], self.data.x2[i], &mut h);
            let eta: f64 = h[..p].iter().zip(theta).map(|(a, b)| a * b).sum();
            let t = self.terms(i, eta, theta);
            total += t.value;
            for j in 0..p {
                grad[j] += t.d_eta * h[j];
            }
            if self.spec.family == Family::NegBin {
                grad[p] += t.d_log_size;
            }
        }
        total
    }

    fn hessian(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        if self.spec.family == Family::NegBin {
            return None;
        }
        let p = self.n_beta();
        let mut out = DMatrix::zeros(p, p);
        let mut h = [0.0; 4];
        for i in 0..self.data.len() {
            self.spec.lp.fill(self.data.x1[i], self.data.x2[i], &mut h);
            let eta: f64 = h[..p].iter().zip(theta).map(|(a, b)| a * b).sum();
            let w = self.terms(i, eta, theta).d2_eta;
            for a in 0..p {
                for b in 0..p {
                    out[(a, b)] += w * h[a] * h[b];
                }
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::CountDist;
    use crate::ztreg::LinearPredictor;
    use crate::Dataset;

    fn data() -> ModelData {
        let (ds, _) = Dataset::bundled().impute_prop_women().unwrap();
        ModelData::from_dataset(&ds).unwrap()
    }

    /// Per-study log-likelihood evaluated through the distributions module.
    fn oracle_loglik(d: &ModelData, spec: ModelSpec, theta: &[f64]) -> Vec<f64> {
        let p = spec.lp.n_coef();
        (0..d.len())
            .map(|i| {
                let h = spec.lp.design_row(d.x1[i], d.x2[i]);
                let eta: f64 = h.iter().zip(theta).map(|(a, b)| a * b).sum();
                let dist = match spec.family {
                    Family::Poisson => CountDist::poisson(d.exposure[i] * eta.exp()),
                    Family::NegBin => CountDist::negbin(d.exposure[i] * eta.exp(), theta[p].exp()),
                    Family::Binomial => {
                        CountDist::binomial(d.trials[i], 1.0 / (1.0 + (-eta).exp()))
                    }
                }
                .unwrap();
                if spec.truncated {
                    dist.ln_zt_pmf(d.events[i]).unwrap()
                } else {
                    dist.ln_pmf(d.events[i])
                }
            })
            .collect()
    }

    #[test]
    fn loglik_agrees_with_distribution_module() {
        let d = data();
        for spec in ModelSpec::full_grid() {
            for truncated in [false, true] {
                let spec = ModelSpec { truncated, ..spec };
                let lik = Likelihood { data: &d, spec };
                let mut theta = vec![0.1; lik.dim()];
                theta[0] = -8.0;
                if spec.family == Family::NegBin {
                    theta[spec.lp.n_coef()] = 1.3;
                }
                let got = lik.per_obs(&theta);
                let want = oracle_loglik(&d, spec, &theta);
                for (g, w) in got.iter().zip(&want) {
                    assert!(
                        (g - w).abs() < 1e-9 * w.abs().max(1.0),
                        "{spec:?}: {g} vs {w}"
                    );
                }
            }
        }
    }

    #[test]
    fn analytic_hessian_matches_finite_differences() {
        let d = data();
        for family in [Family::Poisson, Family::Binomial] {
            for truncated in [false, true] {
                let spec = ModelSpec {
                    family,
                    truncated,
                    lp: LinearPredictor::new(5).unwrap(),
                };
                let lik = Likelihood { data: &d, spec };
                let theta = [-7.9, 0.2, -0.3, 0.1];
                let analytic = lik.hessian(&theta).unwrap();
                let fd = super::super::newton::fd_hessian(&lik, &theta);
                let scale = analytic.amax();
                assert!((analytic - fd).amax() < 1e-6 * scale, "{spec:?}");
            }
        }
    }
}
