//! Poisson, negative-binomial and binomial count laws and their
//! zero-truncated versions.
//!
//! All probabilities are evaluated on the log scale; exposures here reach
//! 10^5 person-years, where direct factorials overflow. The negative
//! binomial is parameterized by mean `μ` and size `α` with
//! `Var(Y) = μ + μ²/α`, so `α → ∞` recovers the Poisson.

use rand::Rng;
use rand_distr::Distribution;
use statrs::function::gamma::ln_gamma;

use crate::ztreg::Family;
use crate::{Error, Result};

/// Means above this are sampled by rejection from the untruncated law.
const INVERSE_CDF_MAX_MEAN: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CountDist {
    Poisson { mean: f64 },
    NegBin { mean: f64, size: f64 },
    Binomial { trials: u64, prob: f64 },
}

impl CountDist {
    pub fn poisson(mean: f64) -> Result<Self> {
        check_mean(mean)?;
        Ok(Self::Poisson { mean })
    }

    pub fn negbin(mean: f64, size: f64) -> Result<Self> {
        check_mean(mean)?;
        if !(size.is_finite() && size > 0.0) {
            return Err(Error::Domain(format!("size must be positive, got {size}")));
        }
        Ok(Self::NegBin { mean, size })
    }

    /// `prob` may sit on either boundary of `[0, 1]`.
    pub fn binomial(trials: u64, prob: f64) -> Result<Self> {
        if trials == 0 {
            return Err(Error::Domain("binomial needs at least one trial".into()));
        }
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::Domain(format!(
                "success probability {prob} outside [0, 1]"
            )));
        }
        Ok(Self::Binomial { trials, prob })
    }

    pub fn family(&self) -> Family {
        match self {
            Self::Poisson { .. } => Family::Poisson,
            Self::NegBin { .. } => Family::NegBin,
            Self::Binomial { .. } => Family::Binomial,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Poisson { mean } | Self::NegBin { mean, .. } => mean,
            Self::Binomial { trials, prob } => trials as f64 * prob,
        }
    }

    pub fn ln_pmf(&self, y: u64) -> f64 {
        let yf = y as f64;
        match *self {
            Self::Poisson { mean } => yf * mean.ln() - mean - ln_factorial(y),
            Self::NegBin { mean, size } => {
                ln_rising(size, y) - ln_factorial(y) - size * (mean / size).ln_1p()
                    + if y == 0 {
                        0.0
                    } else {
                        yf * (mean.ln() - (size + mean).ln())
                    }
            }
            Self::Binomial { trials, prob } => {
                if y > trials {
                    return f64::NEG_INFINITY;
                }
                let ln_choose = if y == 0 || y == trials {
                    0.0
                } else {
                    ln_factorial(trials) - ln_factorial(y) - ln_factorial(trials - y)
                };
                let success = if y == 0 { 0.0 } else { yf * prob.ln() };
                let failure = if y == trials {
                    0.0
                } else {
                    (trials - y) as f64 * (-prob).ln_1p()
                };
                ln_choose + success + failure
            }
        }
    }

    pub fn pmf(&self, y: u64) -> f64 {
        self.ln_pmf(y).exp()
    }

    /// `ln P(Y = 0)`.
    pub fn ln_p0(&self) -> f64 {
        self.ln_pmf(0)
    }

    /// `P(Y ≥ 1) = 1 − P(Y = 0)` without cancellation for small means.
    pub fn prob_positive(&self) -> f64 {
        -self.ln_p0().exp_m1()
    }

    fn truncation_mass(&self) -> Result<f64> {
        let mass = self.prob_positive();
        if mass > 0.0 && mass.is_finite() {
            Ok(mass)
        } else {
            Err(Error::DegenerateTruncation)
        }
    }

    pub fn ln_zt_pmf(&self, y: u64) -> Result<f64> {
        if y == 0 {
            return Err(Error::Domain("zero-truncated support starts at 1".into()));
        }
        Ok(self.ln_pmf(y) - self.truncation_mass()?.ln())
    }

    pub fn zt_pmf(&self, y: u64) -> Result<f64> {
        self.ln_zt_pmf(y).map(f64::exp)
    }

    /// Ratio `p(y) / p(y - 1)` for `y ≥ 1`.
    fn step_ratio(&self, y: u64) -> f64 {
        let yf = y as f64;
        match *self {
            Self::Poisson { mean } => mean / yf,
            Self::NegBin { mean, size } => (size + yf - 1.0) / yf * (mean / (size + mean)),
            Self::Binomial { trials, prob } => {
                if y > trials {
                    0.0
                } else {
                    (trials - y + 1) as f64 / yf * (prob / (1.0 - prob))
                }
            }
        }
    }

    /// One draw from the zero-truncated law.
    ///
    /// Small means use an inverse-CDF scan over the truncated pmf; larger
    /// ones draw from the untruncated law and reject zeros.
    pub fn sample_zt<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<u64> {
        let mass = self.truncation_mass()?;
        if self.mean() <= INVERSE_CDF_MAX_MEAN {
            Ok(self.inverse_cdf_zt(rng.random::<f64>() * mass))
        } else {
            loop {
                let y = self.sample_untruncated(rng);
                if y > 0 {
                    return Ok(y);
                }
            }
        }
    }

    fn inverse_cdf_zt(&self, target: f64) -> u64 {
        let upper = match *self {
            Self::Binomial { trials, .. } => trials,
            _ => u64::MAX,
        };
        let mut y = 1;
        let mut p = self.pmf(1);
        let mut cum = p;
        while cum < target && y < upper {
            y += 1;
            p *= self.step_ratio(y);
            cum += p;
            // Round-off can leave `cum` a hair below `target` in the far tail.
            if p == 0.0 && y as f64 > self.mean() {
                break;
            }
        }
        y
    }

    fn sample_untruncated<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match *self {
            Self::Poisson { mean } => poisson_draw(mean, rng),
            Self::NegBin { mean, size } => {
                let gamma = rand_distr::Gamma::new(size, mean / size).expect("validated params");
                let lambda: f64 = gamma.sample(rng);
                if lambda <= 0.0 {
                    0
                } else {
                    poisson_draw(lambda, rng)
                }
            }
            Self::Binomial { trials, prob } => rand_distr::Binomial::new(trials, prob)
                .expect("validated params")
                .sample(rng),
        }
    }
}

fn poisson_draw<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let d = rand_distr::Poisson::new(mean).expect("positive finite mean");
    d.sample(rng) as u64
}

fn check_mean(mean: f64) -> Result<()> {
    if mean.is_finite() && mean > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "mean must be positive and finite, got {mean}"
        )))
    }
}

pub(crate) fn ln_factorial(y: u64) -> f64 {
    ln_gamma(y as f64 + 1.0)
}

/// `ln Γ(a + y) − ln Γ(a)`, summed directly for moderate `y` so that it stays
/// accurate when `a` is huge.
pub(crate) fn ln_rising(a: f64, y: u64) -> f64 {
    if y <= 1000 {
        (0..y).map(|j| (a + j as f64).ln()).sum()
    } else {
        ln_gamma(a + y as f64) - ln_gamma(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Frozen from 30-digit evaluations of exp(-mu) mu^y / y!.
    const POISSON_Y0_MU2: f64 = 0.135_335_283_236_612_7;
    const ZT_POISSON_Y1_MU1: f64 = 0.581_976_706_869_326_4;

    #[test]
    fn poisson_zero_at_two() {
        let d = CountDist::poisson(2.0).unwrap();
        assert!((d.pmf(0) - POISSON_Y0_MU2).abs() < 1e-15);
    }

    #[test]
    fn zt_poisson_one_at_one() {
        let d = CountDist::poisson(1.0).unwrap();
        assert!((d.zt_pmf(1).unwrap() - ZT_POISSON_Y1_MU1).abs() < 1e-15);
    }

    #[test]
    fn negbin_huge_size_is_poisson() {
        let d = CountDist::negbin(2.0, 1e8).unwrap();
        assert!((d.pmf(0) - (-2.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn binomial_boundary_prob() {
        let d = CountDist::binomial(100, 0.0).unwrap();
        assert_eq!(d.pmf(0), 1.0);
        assert_eq!(d.pmf(1), 0.0);
        assert!(matches!(d.zt_pmf(1), Err(Error::DegenerateTruncation)));
        let d = CountDist::binomial(5, 1.0).unwrap();
        assert_eq!(d.pmf(5), 1.0);
        assert_eq!(d.pmf(4), 0.0);
    }

    #[test]
    fn binomial_matches_direct_formula() {
        let d = CountDist::binomial(10, 0.3).unwrap();
        // C(10,3) 0.3^3 0.7^7
        let direct = 120.0 * 0.3f64.powi(3) * 0.7f64.powi(7);
        assert!((d.pmf(3) - direct).abs() < 1e-14);
        assert_eq!(d.pmf(11), 0.0);
    }

    #[test]
    fn negbin_matches_direct_formula() {
        // Gamma(2.5+3)/(3! Gamma(2.5)) = 2.5*3.5*4.5/6
        let (mu, a) = (1.7, 2.5);
        let d = CountDist::negbin(mu, a).unwrap();
        let direct = 2.5 * 3.5 * 4.5 / 6.0 * (a / (a + mu)).powf(a) * (mu / (a + mu)).powi(3);
        assert!((d.pmf(3) - direct).abs() < 1e-14);
    }

    #[test]
    fn invalid_params_are_domain_errors() {
        assert!(CountDist::poisson(0.0).is_err());
        assert!(CountDist::poisson(f64::NAN).is_err());
        assert!(CountDist::negbin(1.0, -1.0).is_err());
        assert!(CountDist::binomial(10, 1.5).is_err());
        assert!(CountDist::binomial(0, 0.5).is_err());
    }

    #[test]
    fn zt_rejects_zero() {
        let d = CountDist::poisson(1.0).unwrap();
        assert!(matches!(d.zt_pmf(0), Err(Error::Domain(_))));
    }

    #[test]
    fn truncation_vanishes_for_large_means() {
        let d = CountDist::poisson(60.0).unwrap();
        for y in [40, 60, 80] {
            assert!((d.zt_pmf(y).unwrap() - d.pmf(y)).abs() < 1e-20);
        }
    }

    #[test]
    fn tiny_mean_sampler_concentrates_on_one() {
        let d = CountDist::poisson(1e-6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ones = (0..100_000)
            .filter(|_| d.sample_zt(&mut rng).unwrap() == 1)
            .count();
        assert!(ones as f64 / 1e5 > 0.999);
    }

    #[test]
    fn sampler_mean_matches_truncated_mean() {
        let mu = 31.8e-5 * 77602.0;
        let d = CountDist::poisson(mu).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let total: u64 = (0..100_000).map(|_| d.sample_zt(&mut rng).unwrap()).sum();
        let expected = mu / -(-mu).exp_m1();
        assert!((total as f64 / 1e5 / expected - 1.0).abs() < 0.01);
    }

    #[test]
    fn rejection_branch_never_returns_zero() {
        let d = CountDist::negbin(80.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!((0..10_000).all(|_| d.sample_zt(&mut rng).unwrap() >= 1));
    }

    #[test]
    fn sampler_is_deterministic() {
        let d = CountDist::negbin(3.0, 2.0).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| d.sample_zt(&mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn any_dist() -> impl Strategy<Value = CountDist> {
            prop_oneof![
                (0.01f64..50.0).prop_map(|m| CountDist::poisson(m).unwrap()),
                (0.01f64..50.0, 0.1f64..1e4).prop_map(|(m, a)| CountDist::negbin(m, a).unwrap()),
                (1u64..500, 0.001f64..0.999).prop_map(|(n, p)| CountDist::binomial(n, p).unwrap()),
            ]
        }

        proptest! {
            #[test]
            fn pmf_sums_to_one(d in any_dist()) {
                let mut total = 0.0;
                let mut y = 0;
                while total < 1.0 - 1e-12 && y < 200_000 {
                    total += d.pmf(y);
                    y += 1;
                }
                prop_assert!(total <= 1.0 + 1e-9);
                prop_assert!(total > 1.0 - 1e-9);
            }

            #[test]
            fn zt_is_renormalized_pmf(d in any_dist(), y in 1u64..60) {
                let p0 = d.pmf(0);
                prop_assume!(p0 < 0.99);
                let expected = d.pmf(y) / (1.0 - p0);
                let got = d.zt_pmf(y).unwrap();
                prop_assert!((got - expected).abs() <= 1e-12 * expected.max(1e-300) + 1e-300,
                    "{got} vs {expected}");
            }

            #[test]
            fn negbin_limit_is_poisson(mu in 0.01f64..50.0, y in 0u64..=100) {
                let nb = CountDist::negbin(mu, 1e8).unwrap().pmf(y);
                let p = CountDist::poisson(mu).unwrap().pmf(y);
                prop_assert!((nb - p).abs() < 1e-6);
            }
        }
    }
}
