//! Study-level input data: CSV ingestion, validation, and imputation of a
//! missing proportion-of-women covariate.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

const HEADER: [&str; 5] = ["id", "person_years", "prop_women", "country", "suicides"];

const BUNDLED_CSV: &str = include_str!("../../../data/studies.csv");

/// One study: exposure in person-years, covariates, and observed event count.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRecord {
    pub id: String,
    pub exposure: f64,
    pub prop_women: Option<f64>,
    pub country: String,
    pub events: u64,
}

impl StudyRecord {
    /// Country indicator used by the regression models: 1 for "USA", else 0.
    pub fn is_usa(&self) -> bool {
        self.country == "USA"
    }

    pub fn usa_indicator(&self) -> f64 {
        if self.is_usa() {
            1.0
        } else {
            0.0
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.exposure.is_finite() && self.exposure > 0.0) {
            return Err(Error::Validation(format!(
                "{}: person_years must be positive, got {}",
                self.id, self.exposure
            )));
        }
        if let Some(p) = self.prop_women {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Validation(format!(
                    "{}: prop_women must lie in [0, 1], got {p}",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// An ordered collection of studies with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<StudyRecord>,
}

impl Dataset {
    pub fn new(records: Vec<StudyRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Validation("dataset has no records".into()));
        }
        let mut seen = HashSet::new();
        for r in &records {
            r.validate()?;
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Validation(format!("duplicate study id {:?}", r.id)));
            }
        }
        Ok(Self { records })
    }

    /// The 27-study bariatric-surgery suicide data shipped with the crate.
    /// Study 24 has no proportion of women recorded.
    pub fn bundled() -> Self {
        Self::from_csv_reader(BUNDLED_CSV.as_bytes()).expect("bundled data is valid")
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        })?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(reader);
        let header = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
        let names: Vec<&str> = header.iter().map(str::trim).collect();
        if names != HEADER {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header {:?}, found {:?}", HEADER.join(","), names),
            });
        }

        let mut records = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|e| csv_error(e, 0))?;
            let line = row.position().map_or(0, |p| p.line());
            let field = |i: usize| row.get(i).unwrap_or("").trim();
            let parse_err = |what: &str, raw: &str| Error::Parse {
                line,
                msg: format!("cannot parse {what} from {raw:?}"),
            };

            let exposure: f64 = field(1)
                .parse()
                .map_err(|_| parse_err("person_years", field(1)))?;
            let prop_women = match field(2) {
                "" => None,
                s => Some(s.parse::<f64>().map_err(|_| parse_err("prop_women", s))?),
            };
            let events_raw = field(4);
            let events: i64 = events_raw
                .parse()
                .map_err(|_| parse_err("suicides", events_raw))?;
            if events < 0 {
                return Err(Error::Validation(format!(
                    "line {line}: event count must be non-negative, got {events}"
                )));
            }
            let record = StudyRecord {
                id: field(0).to_string(),
                exposure,
                prop_women,
                country: field(3).to_string(),
                events: events as u64,
            };
            record
                .validate()
                .map_err(|e| Error::Validation(format!("line {line}: {e}")))?;
            records.push(record);
        }
        Self::new(records)
    }

    /// Serializes in the input CSV layout. Reals use the shortest
    /// representation that parses back to the same `f64`.
    pub fn to_csv_string(&self) -> String {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(HEADER).expect("in-memory write");
        for r in &self.records {
            wtr.write_record([
                r.id.clone(),
                r.exposure.to_string(),
                r.prop_women.map(|p| p.to_string()).unwrap_or_default(),
                r.country.clone(),
                r.events.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    pub fn records(&self) -> &[StudyRecord] {
        &self.records
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn has_missing_covariates(&self) -> bool {
        self.records.iter().any(|r| r.prop_women.is_none())
    }

    pub fn total_events(&self) -> u64 {
        self.records.iter().map(|r| r.events).sum()
    }

    pub fn total_exposure(&self) -> f64 {
        self.records.iter().map(|r| r.exposure).sum()
    }

    /// Same studies with replacement event counts, used by the bootstrap.
    pub fn with_events(&self, events: &[u64]) -> Result<Self> {
        if events.len() != self.records.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} event counts, got {}",
                self.records.len(),
                events.len()
            )));
        }
        let records = self
            .records
            .iter()
            .zip(events)
            .map(|(r, &y)| StudyRecord {
                events: y,
                ..r.clone()
            })
            .collect();
        Ok(Self { records })
    }

    /// Fills missing `prop_women` values from the BIC-best linear regression.
    ///
    /// Candidate regressors are person-years, the USA indicator, the event
    /// count, and their two-way interactions. Every subset that respects
    /// marginality (an interaction only alongside both of its main effects)
    /// is fitted by least squares on the complete records; the intercept is
    /// always present. Predictions are clamped to `[0, 1]`.
    pub fn impute_prop_women(&self) -> Result<(Self, ImputationResult)> {
        if !self.has_missing_covariates() {
            return Err(Error::NothingToImpute);
        }
        let complete: Vec<&StudyRecord> = self
            .records
            .iter()
            .filter(|r| r.prop_women.is_some())
            .collect();
        let response = DVector::from_iterator(
            complete.len(),
            complete.iter().map(|r| r.prop_women.unwrap()),
        );

        let mut candidates = Vec::new();
        let mut best: Option<(f64, Vec<Term>, DVector<f64>)> = None;
        for terms in marginal_subsets() {
            let x = design(&complete, &terms);
            let fitted = ols_bic(&x, &response);
            let labels = terms.iter().map(|t| t.label()).collect();
            candidates.push(ImputationCandidate {
                terms: labels,
                bic: fitted.as_ref().map(|f| f.1),
            });
            if let Some((coef, bic)) = fitted {
                if best.as_ref().is_none_or(|b| bic < b.0) {
                    best = Some((bic, terms, coef));
                }
            }
        }
        let (bic, terms, coef) =
            best.ok_or_else(|| Error::Domain("no imputation model has a full-rank design".into()))?;

        let mut imputed = Vec::new();
        let records = self
            .records
            .iter()
            .map(|r| {
                if r.prop_women.is_some() {
                    return r.clone();
                }
                let row = design(&[r], &terms);
                let value = (row.row(0) * &coef)[0].clamp(0.0, 1.0);
                imputed.push((r.id.clone(), value));
                StudyRecord {
                    prop_women: Some(value),
                    ..r.clone()
                }
            })
            .collect();

        Ok((
            Self { records },
            ImputationResult {
                imputed,
                selected_terms: terms.iter().map(|t| t.label()).collect(),
                bic,
                candidates,
            },
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputationResult {
    /// `(study id, imputed prop_women)` in dataset order.
    pub imputed: Vec<(String, f64)>,
    pub selected_terms: Vec<String>,
    pub bic: f64,
    /// Every subset visited by the search; `bic` is `None` when the design
    /// was rank-deficient and the subset was skipped.
    pub candidates: Vec<ImputationCandidate>,
}

impl ImputationResult {
    pub fn imputed_value(&self) -> f64 {
        self.imputed[0].1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputationCandidate {
    pub terms: Vec<String>,
    pub bic: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Main {
    PersonYears,
    Country,
    Events,
}

impl Main {
    const ALL: [Main; 3] = [Main::PersonYears, Main::Country, Main::Events];

    fn label(self) -> &'static str {
        match self {
            Main::PersonYears => "person_years",
            Main::Country => "country",
            Main::Events => "events",
        }
    }

    fn value(self, r: &StudyRecord) -> f64 {
        match self {
            Main::PersonYears => r.exposure,
            Main::Country => r.usa_indicator(),
            Main::Events => r.events as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Term {
    Main(Main),
    Interaction(Main, Main),
}

impl Term {
    fn label(self) -> String {
        match self {
            Term::Main(m) => m.label().to_string(),
            Term::Interaction(a, b) => format!("{}:{}", a.label(), b.label()),
        }
    }

    fn value(self, r: &StudyRecord) -> f64 {
        match self {
            Term::Main(m) => m.value(r),
            Term::Interaction(a, b) => a.value(r) * b.value(r),
        }
    }
}

fn marginal_subsets() -> Vec<Vec<Term>> {
    let mut out = Vec::new();
    for main_mask in 0u8..8 {
        let mains: Vec<Main> = (0..3)
            .filter(|i| main_mask & (1 << i) != 0)
            .map(|i| Main::ALL[i])
            .collect();
        let mut pairs = Vec::new();
        for i in 0..mains.len() {
            for j in i + 1..mains.len() {
                pairs.push(Term::Interaction(mains[i], mains[j]));
            }
        }
        for pair_mask in 0u32..(1 << pairs.len()) {
            let mut terms: Vec<Term> = mains.iter().map(|&m| Term::Main(m)).collect();
            terms.extend(
                pairs
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| pair_mask & (1 << k) != 0)
                    .map(|(_, &t)| t),
            );
            out.push(terms);
        }
    }
    out
}

fn design(records: &[&StudyRecord], terms: &[Term]) -> DMatrix<f64> {
    DMatrix::from_fn(records.len(), terms.len() + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            terms[j - 1].value(records[i])
        }
    })
}

/// Least-squares coefficients and Gaussian BIC, counting the residual
/// variance as a parameter. `None` for a rank-deficient design.
fn ols_bic(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let (m, p) = x.shape();
    if m <= p {
        return None;
    }
    // Column equilibration; person-years and its interactions are O(1e5).
    let scales: Vec<f64> = x.column_iter().map(|c| c.norm()).collect();
    if scales.contains(&0.0) {
        return None;
    }
    let mut xs = x.clone();
    for (j, s) in scales.iter().enumerate() {
        xs.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = xs.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10;
    if svd.singular_values.iter().any(|&s| s <= tol) {
        return None;
    }
    let mut coef = svd.solve(y, tol).ok()?;
    for (j, s) in scales.iter().enumerate() {
        coef[j] /= s;
    }
    let resid = y - x * &coef;
    let rss = resid.norm_squared();
    let mf = m as f64;
    let loglik = -0.5 * mf * ((2.0 * std::f64::consts::PI * rss / mf).ln() + 1.0);
    let k = (p + 1) as f64;
    Some((coef, -2.0 * loglik + k * mf.ln()))
}

impl std::fmt::Display for Dataset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut s = String::new();
        for r in &self.records {
            let _ = writeln!(
                s,
                "{:<28} {:>8} {:>6} {:<12} {:>3}",
                r.id,
                r.exposure,
                r.prop_women.map_or("NA".into(), |p| format!("{p:.3}")),
                r.country,
                r.events
            );
        }
        f.write_str(&s)
    }
}

fn csv_error(e: csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(fallback_line);
    Error::Parse {
        line,
        msg: e.to_string(),
    }
}
