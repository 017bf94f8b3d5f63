//! Horvitz-Thompson estimates of how many studies, observed or excluded,
//! share each observed study's exposure and covariates.
//!
//! Study `i` was only observed because it recorded at least one event, so
//! under a fitted model it stands for `N̂ᵢ = 1 / (1 − p(0; μ̂ᵢ))` studies, of
//! which `M̂ᵢ = N̂ᵢ − 1` were excluded for recording none.

use serde::Serialize;

use crate::ztreg::{Family, ModelData};
use crate::{Dataset, Error, FitResult, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyEstimate {
    pub id: String,
    pub total: f64,
    pub missing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationEstimate {
    pub per_study: Vec<StudyEstimate>,
    pub total_n: f64,
    pub total_m: f64,
    pub n_observed: usize,
}

/// Inflation factors `N̂ᵢ` for every study in `data`.
pub(crate) fn inflation_factors(data: &ModelData, fit: &FitResult) -> Result<Vec<f64>> {
    if fit.spec.family == Family::Binomial {
        return Err(Error::UnsupportedFamily(Family::Binomial));
    }
    (0..data.len())
        .map(|i| {
            let mass = fit.count_dist_at(data, i)?.prob_positive();
            if mass > 0.0 {
                Ok(1.0 / mass)
            } else {
                Err(Error::DegenerateTruncation)
            }
        })
        .collect()
}

pub fn ht_estimate(ds: &Dataset, fit: &FitResult) -> Result<PopulationEstimate> {
    if !fit.converged {
        return Err(Error::NotConverged);
    }
    let data = ModelData::from_dataset(ds)?;
    let factors = inflation_factors(&data, fit)?;
    let per_study: Vec<StudyEstimate> = ds
        .records()
        .iter()
        .zip(&factors)
        .map(|(r, &n_hat)| StudyEstimate {
            id: r.id.clone(),
            total: n_hat,
            missing: n_hat - 1.0,
        })
        .collect();
    let total_n: f64 = factors.iter().sum();
    Ok(PopulationEstimate {
        per_study,
        total_n,
        total_m: total_n - ds.n() as f64,
        n_observed: ds.n(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CountryFilter {
    Usa,
    Other,
    All,
}

impl CountryFilter {
    fn matches(self, usa: bool) -> bool {
        match self {
            CountryFilter::Usa => usa,
            CountryFilter::Other => !usa,
            CountryFilter::All => true,
        }
    }

    fn label(self) -> &'static str {
        match self {
            CountryFilter::Usa => "USA",
            CountryFilter::Other => "Others",
            CountryFilter::All => "All",
        }
    }
}

/// A country level crossed with a proportion-of-women interval
/// `[lower, upper)`, or `[lower, upper]` when `upper_closed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StratumDef {
    pub country: CountryFilter,
    pub lower: f64,
    pub upper: f64,
    pub upper_closed: bool,
}

impl StratumDef {
    pub fn new(country: CountryFilter, lower: f64, upper: f64, upper_closed: bool) -> Self {
        Self {
            country,
            lower,
            upper,
            upper_closed,
        }
    }

    pub fn everything() -> Self {
        Self::new(CountryFilter::All, 0.0, 1.0, true)
    }

    /// USA and other countries crossed with the quartile-style intervals
    /// `[0, .75)`, `[.75, .80)`, `[.80, .85)`, `[.85, 1]`.
    pub fn default_table() -> Vec<Self> {
        let cuts = [0.0, 0.75, 0.80, 0.85, 1.0];
        [CountryFilter::Usa, CountryFilter::Other]
            .into_iter()
            .flat_map(|c| (0..4).map(move |k| Self::new(c, cuts[k], cuts[k + 1], k == 3)))
            .collect()
    }

    pub fn contains(&self, x1: f64, usa: bool) -> bool {
        let above = x1 >= self.lower;
        let below = if self.upper_closed {
            x1 <= self.upper
        } else {
            x1 < self.upper
        };
        self.country.matches(usa) && above && below
    }

    pub fn label(&self) -> String {
        format!(
            "{} [{:.2},{:.2}{}",
            self.country.label(),
            self.lower,
            self.upper,
            if self.upper_closed { "]" } else { ")" }
        )
    }
}

/// For each study, the index of the single stratum containing it.
pub fn assign_strata(ds: &Dataset, strata: &[StratumDef]) -> Result<Vec<usize>> {
    if strata.is_empty() {
        return Err(Error::InvalidStrata("no strata given".into()));
    }
    ds.records()
        .iter()
        .map(|r| {
            let x1 = r
                .prop_women
                .ok_or_else(|| Error::InvalidStrata(format!("{}: prop_women is missing", r.id)))?;
            let mut hits = strata
                .iter()
                .enumerate()
                .filter(|(_, s)| s.contains(x1, r.is_usa()))
                .map(|(k, _)| k);
            match (hits.next(), hits.next()) {
                (Some(k), None) => Ok(k),
                (None, _) => Err(Error::InvalidStrata(format!(
                    "{} falls in no stratum",
                    r.id
                ))),
                (Some(a), Some(b)) => Err(Error::InvalidStrata(format!(
                    "{} falls in both {} and {}",
                    r.id,
                    strata[a].label(),
                    strata[b].label()
                ))),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumRow {
    pub stratum: StratumDef,
    pub label: String,
    pub observed: usize,
    /// Unrounded `Σ M̂ᵢ` over member studies.
    pub missing: f64,
}

impl StratumRow {
    /// Missing count rounded half away from zero, for tables.
    pub fn missing_rounded(&self) -> i64 {
        self.missing.round() as i64
    }
}

pub fn stratify(
    pe: &PopulationEstimate,
    ds: &Dataset,
    strata: &[StratumDef],
) -> Result<Vec<StratumRow>> {
    if pe.per_study.len() != ds.n() {
        return Err(Error::InvalidArgument(
            "population estimate and dataset differ in length".into(),
        ));
    }
    let membership = assign_strata(ds, strata)?;
    let mut rows: Vec<StratumRow> = strata
        .iter()
        .map(|s| StratumRow {
            stratum: *s,
            label: s.label(),
            observed: 0,
            missing: 0.0,
        })
        .collect();
    for (est, &k) in pe.per_study.iter().zip(&membership) {
        rows[k].observed += 1;
        rows[k].missing += est.missing;
    }
    Ok(rows)
}
