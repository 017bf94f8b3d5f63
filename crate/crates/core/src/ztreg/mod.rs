//! Count regressions with exposure offsets, with and without zero truncation.
//!
//! Five linear predictors are supported:
//!
//! | lp | h(x)                  |
//! |----|-----------------------|
//! | 1  | (1)                   |
//! | 2  | (1, x₁)               |
//! | 3  | (1, x₂)               |
//! | 4  | (1, x₁, x₂)           |
//! | 5  | (1, x₁, x₂, x₁·x₂)    |
//!
//! where x₁ is the proportion of women and x₂ the USA indicator. Rates are
//! `exp(h(x)ᵀβ)` per person-year for Poisson and negative-binomial models and
//! `logistic(h(x)ᵀβ)` for the binomial.
//!
//! Fitting is by damped Newton ascent on the log-likelihood with analytic
//! gradients. Zero-truncated fits start from the untruncated Poisson
//! coefficients. The negative-binomial size is optimized as `ln α` and
//! capped at `ln 10⁸`, beyond which the model is indistinguishable from the
//! Poisson.

mod likelihood;
pub(crate) mod newton;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::distributions::CountDist;
use crate::{Dataset, Error, Result};
use likelihood::Likelihood;
use newton::{maximize, NewtonOptions, Objective};

/// Upper bound on `ln α` for negative-binomial fits.
pub const MAX_LOG_SIZE: f64 = 18.420_680_743_952_367; // ln(1e8)

const INITIAL_LOG_SIZE: f64 = std::f64::consts::LN_10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Poisson,
    NegBin,
    Binomial,
}

impl Family {
    pub fn label(self) -> &'static str {
        match self {
            Family::Poisson => "poisson",
            Family::NegBin => "negbin",
            Family::Binomial => "binomial",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "poisson" | "p" => Ok(Family::Poisson),
            "negbin" | "nb" | "negative-binomial" => Ok(Family::NegBin),
            "binomial" | "b" => Ok(Family::Binomial),
            other => Err(Error::InvalidArgument(format!("unknown family {other:?}"))),
        }
    }
}

/// Index 1..=5 into the table of regression functions above.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct LinearPredictor(u8);

impl LinearPredictor {
    pub const INTERCEPT: Self = Self(1);
    pub const ALL: [Self; 5] = [Self(1), Self(2), Self(3), Self(4), Self(5)];

    pub fn new(index: u8) -> Result<Self> {
        if (1..=5).contains(&index) {
            Ok(Self(index))
        } else {
            Err(Error::InvalidArgument(format!(
                "linear predictor must be 1..=5, got {index}"
            )))
        }
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn n_coef(self) -> usize {
        match self.0 {
            1 => 1,
            2 | 3 => 2,
            4 => 3,
            _ => 4,
        }
    }

    /// Writes `h(x)` into the front of `out` and returns its length.
    pub(crate) fn fill(self, x1: f64, x2: f64, out: &mut [f64; 4]) -> usize {
        out[0] = 1.0;
        match self.0 {
            1 => {}
            2 => out[1] = x1,
            3 => out[1] = x2,
            4 => {
                out[1] = x1;
                out[2] = x2;
            }
            _ => {
                out[1] = x1;
                out[2] = x2;
                out[3] = x1 * x2;
            }
        }
        self.n_coef()
    }

    pub fn design_row(self, x1: f64, x2: f64) -> Vec<f64> {
        let mut h = [0.0; 4];
        let p = self.fill(x1, x2, &mut h);
        h[..p].to_vec()
    }

    pub fn linear_predictor(self, beta: &[f64], x1: f64, x2: f64) -> f64 {
        let mut h = [0.0; 4];
        let p = self.fill(x1, x2, &mut h);
        h[..p].iter().zip(beta).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct ModelSpec {
    pub family: Family,
    pub truncated: bool,
    pub lp: LinearPredictor,
}

impl ModelSpec {
    pub fn truncated(family: Family, lp: LinearPredictor) -> Self {
        Self {
            family,
            truncated: true,
            lp,
        }
    }

    pub fn untruncated(family: Family, lp: LinearPredictor) -> Self {
        Self {
            family,
            truncated: false,
            lp,
        }
    }

    /// The ten zero-truncated count models in bootstrap order:
    /// Poisson lp 1..5, then negative binomial lp 1..5.
    pub fn count_grid() -> Vec<Self> {
        [Family::Poisson, Family::NegBin]
            .into_iter()
            .flat_map(|f| LinearPredictor::ALL.map(|lp| Self::truncated(f, lp)))
            .collect()
    }

    /// The count grid followed by the five zero-truncated binomial models.
    pub fn full_grid() -> Vec<Self> {
        let mut grid = Self::count_grid();
        grid.extend(LinearPredictor::ALL.map(|lp| Self::truncated(Family::Binomial, lp)));
        grid
    }

    pub fn untruncated_grid(family: Family) -> Vec<Self> {
        LinearPredictor::ALL
            .map(|lp| Self::untruncated(family, lp))
            .to_vec()
    }

    pub fn n_params(&self) -> usize {
        self.lp.n_coef() + usize::from(self.family == Family::NegBin)
    }

    pub fn label(&self) -> String {
        format!(
            "{}{}-lp{}",
            if self.truncated { "zt-" } else { "" },
            self.family.label(),
            self.lp.0
        )
    }
}

/// Regression inputs laid out column-wise. Covariates must be complete.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelData {
    pub(crate) exposure: Vec<f64>,
    pub(crate) ln_exposure: Vec<f64>,
    pub(crate) trials: Vec<u64>,
    pub(crate) x1: Vec<f64>,
    pub(crate) x2: Vec<f64>,
    pub(crate) events: Vec<u64>,
}

impl ModelData {
    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        let mut out = Self {
            exposure: Vec::with_capacity(ds.n()),
            ln_exposure: Vec::with_capacity(ds.n()),
            trials: Vec::with_capacity(ds.n()),
            x1: Vec::with_capacity(ds.n()),
            x2: Vec::with_capacity(ds.n()),
            events: Vec::with_capacity(ds.n()),
        };
        for r in ds.records() {
            let x1 = r.prop_women.ok_or_else(|| {
                Error::InvalidArgument(format!("{}: prop_women is missing; impute first", r.id))
            })?;
            out.exposure.push(r.exposure);
            out.ln_exposure.push(r.exposure.ln());
            out.trials.push((r.exposure.round() as u64).max(1));
            out.x1.push(x1);
            out.x2.push(r.usa_indicator());
            out.events.push(r.events);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn events(&self) -> &[u64] {
        &self.events
    }

    pub fn set_events(&mut self, events: &[u64]) {
        assert_eq!(events.len(), self.len(), "one count per study");
        self.events.copy_from_slice(events);
    }

    pub fn exposure(&self) -> &[f64] {
        &self.exposure
    }

    pub fn covariates(&self, i: usize) -> (f64, f64) {
        (self.x1[i], self.x2[i])
    }

    /// Log-likelihood and its gradient at `θ = (β, [ln α])`.
    pub fn log_likelihood(&self, spec: ModelSpec, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let lik = Likelihood { data: self, spec };
        if theta.len() != lik.dim() {
            return Err(Error::InvalidArgument(format!(
                "{} takes {} parameters, got {}",
                spec.label(),
                lik.dim(),
                theta.len()
            )));
        }
        let mut grad = vec![0.0; theta.len()];
        let value = lik.value_grad(theta, &mut grad);
        Ok((value, grad))
    }

    pub fn fit(&self, spec: ModelSpec) -> Result<FitResult> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("no observations".into()));
        }
        if spec.truncated && self.events.contains(&0) {
            return Err(Error::Domain(
                "zero-truncated models need every event count ≥ 1".into(),
            ));
        }
        let init = self.initial_theta(spec);
        Ok(self.fit_from(spec, &init))
    }

    fn initial_theta(&self, spec: ModelSpec) -> Vec<f64> {
        let p = spec.lp.n_coef();
        let poisson = ModelSpec::untruncated(Family::Poisson, spec.lp);
        let mut theta = if spec == poisson {
            let total_y: u64 = self.events.iter().sum();
            let total_e: f64 = self.exposure.iter().sum();
            let mut b = vec![0.0; p];
            b[0] = ((total_y as f64).max(0.5) / total_e).ln();
            b
        } else {
            self.fit_from(poisson, &self.initial_theta(poisson)).beta
        };
        if spec.family == Family::NegBin {
            let lik = Likelihood { data: self, spec };
            theta.push(INITIAL_LOG_SIZE);
            let mut best = (lik.value(&theta), INITIAL_LOG_SIZE);
            // Coarse profile over ln α with β held at the Poisson values.
            let mut log_size = -2.0;
            while log_size <= MAX_LOG_SIZE {
                theta[p] = log_size;
                let v = lik.value(&theta);
                if v > best.0 {
                    best = (v, log_size);
                }
                log_size += 0.5;
            }
            theta[p] = best.1;
        }
        theta
    }

    fn fit_from(&self, spec: ModelSpec, init: &[f64]) -> FitResult {
        let lik = Likelihood { data: self, spec };
        let p = spec.lp.n_coef();
        let mut opts = NewtonOptions::new(lik.dim());
        if spec.family == Family::NegBin {
            opts.upper[p] = Some(MAX_LOG_SIZE);
        }
        let out = maximize(&lik, init, &opts);
        let beta = out.theta[..p].to_vec();
        let alpha = (spec.family == Family::NegBin).then(|| out.theta[p].exp());
        let dispersion_at_bound = spec.family == Family::NegBin
            && (out.at_bound[p] || out.theta[p] >= MAX_LOG_SIZE - 1e-9);

        let se_beta = standard_errors(&lik, &out.theta, p, dispersion_at_bound);
        let n = self.len();
        let k = spec.n_params();
        FitResult {
            spec,
            beta,
            alpha,
            loglik: out.value,
            k,
            n,
            bic: bic(out.value, k, n),
            converged: out.converged && out.value.is_finite(),
            dispersion_at_bound,
            iterations: out.iterations,
            se_beta,
        }
    }
}

/// Square roots of the diagonal of the inverse observed information,
/// restricted to β. A size parameter pinned at its cap is treated as fixed.
fn standard_errors(lik: &Likelihood<'_>, theta: &[f64], p: usize, size_fixed: bool) -> Vec<f64> {
    let h = newton::hessian(lik, theta);
    let d = if size_fixed { p } else { h.nrows() };
    let info = DMatrix::from_fn(d, d, |i, j| -h[(i, j)]);
    match info.try_inverse() {
        Some(cov) => (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect(),
        None => vec![f64::NAN; p],
    }
}

pub fn bic(loglik: f64, k: usize, n: usize) -> f64 {
    -2.0 * loglik + k as f64 * (n as f64).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub beta: Vec<f64>,
    /// Negative-binomial size `α`; `None` for other families.
    pub alpha: Option<f64>,
    pub loglik: f64,
    /// Number of estimated parameters.
    pub k: usize,
    /// Number of observations.
    pub n: usize,
    pub bic: f64,
    pub converged: bool,
    /// `ln α` reached its cap; the fit is Poisson-equivalent.
    pub dispersion_at_bound: bool,
    pub iterations: usize,
    pub se_beta: Vec<f64>,
}

impl FitResult {
    /// Event rate per person-year at covariates `(x1, usa)`.
    pub fn predict_rate(&self, x1: f64, usa: bool) -> f64 {
        let eta = self
            .spec
            .lp
            .linear_predictor(&self.beta, x1, if usa { 1.0 } else { 0.0 });
        match self.spec.family {
            Family::Binomial => 1.0 / (1.0 + (-eta).exp()),
            _ => eta.exp(),
        }
    }

    /// The fitted (untruncated) count distribution for a study with the
    /// given exposure and covariates.
    pub fn count_dist(&self, exposure: f64, x1: f64, x2: f64) -> Result<CountDist> {
        let eta = self.spec.lp.linear_predictor(&self.beta, x1, x2);
        match self.spec.family {
            Family::Poisson => CountDist::poisson(exposure * eta.exp()),
            Family::NegBin => CountDist::negbin(
                exposure * eta.exp(),
                self.alpha.expect("negative-binomial fit carries a size"),
            ),
            Family::Binomial => {
                CountDist::binomial((exposure.round() as u64).max(1), 1.0 / (1.0 + (-eta).exp()))
            }
        }
    }

    pub(crate) fn count_dist_at(&self, data: &ModelData, i: usize) -> Result<CountDist> {
        self.count_dist(data.exposure[i], data.x1[i], data.x2[i])
    }
}

/// Maximum-likelihood fit of an untruncated GLM.
pub fn fit_glm(ds: &Dataset, spec: ModelSpec) -> Result<FitResult> {
    if spec.truncated {
        return Err(Error::InvalidArgument(format!(
            "fit_glm expects an untruncated spec, got {}",
            spec.label()
        )));
    }
    ModelData::from_dataset(ds)?.fit(spec)
}

/// Maximum-likelihood fit of a zero-truncated regression.
pub fn fit_zt(ds: &Dataset, spec: ModelSpec) -> Result<FitResult> {
    if !spec.truncated {
        return Err(Error::InvalidArgument(format!(
            "fit_zt expects a truncated spec, got {}",
            spec.label()
        )));
    }
    ModelData::from_dataset(ds)?.fit(spec)
}

pub fn fit_model(ds: &Dataset, spec: ModelSpec) -> Result<FitResult> {
    ModelData::from_dataset(ds)?.fit(spec)
}

/// Fits each spec independently; failures are reported per entry.
pub fn fit_grid(ds: &Dataset, specs: &[ModelSpec]) -> Result<Vec<Result<FitResult>>> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("empty model grid".into()));
    }
    let data = ModelData::from_dataset(ds)?;
    Ok(specs.iter().map(|&s| data.fit(s)).collect())
}
