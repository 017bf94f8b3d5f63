//! BIC-weighted parametric bootstrap and the Wald baseline interval.
//!
//! Each replicate draws a generating model from the ten zero-truncated
//! Poisson and negative-binomial fits with probability equal to its BIC
//! weight, simulates new counts from that model's zero-truncated law, refits
//! all ten models and keeps the one with the lowest BIC. The kept model gives
//! the replicate's sub-population rates and Horvitz-Thompson counts.
//!
//! Replicate `b` draws from `ChaCha8Rng` seeded with `seed` on stream `b`, so
//! results do not depend on how replicates are scheduled across threads.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::distributions::CountDist;
use crate::population::{assign_strata, inflation_factors, CountryFilter, StratumDef};
use crate::ztreg::{Family, ModelData};
use crate::{Dataset, Error, FitResult, ModelSpec, Result};

/// Redraw limit for a replicate in which every refit fails.
const MAX_REDRAWS: u32 = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BicWeights {
    /// `BIC_l − min BIC`; `None` for failed fits.
    pub delta: Vec<Option<f64>>,
    /// Normalized weights; failed fits get 0.
    pub weights: Vec<f64>,
}

impl BicWeights {
    pub fn n_failed(&self) -> usize {
        self.delta.iter().filter(|d| d.is_none()).count()
    }
}

fn usable(fit: &Result<FitResult>) -> Option<&FitResult> {
    fit.as_ref()
        .ok()
        .filter(|f| f.converged && f.bic.is_finite())
}

/// `w_l ∝ exp(−Δ_l / 2)` over the fits that converged.
pub fn bic_weights(fits: &[Result<FitResult>]) -> Result<BicWeights> {
    let bics: Vec<Option<f64>> = fits.iter().map(|f| usable(f).map(|f| f.bic)).collect();
    let min = bics.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::AllFitsFailed);
    }
    let delta: Vec<Option<f64>> = bics.iter().map(|b| b.map(|b| b - min)).collect();
    let raw: Vec<f64> = delta
        .iter()
        .map(|d| d.map_or(0.0, |d| (-0.5 * d).exp()))
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(BicWeights {
        delta,
        weights: raw.iter().map(|w| w / total).collect(),
    })
}

/// A covariate point at which replicate rates are recorded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubPopulation {
    pub x1: f64,
    pub usa: bool,
}

impl SubPopulation {
    pub fn new(x1: f64, usa: bool) -> Self {
        Self { x1, usa }
    }

    /// Proportion of women 0.75, 0.80 and 0.85, each for USA then others.
    pub fn defaults() -> Vec<Self> {
        [0.75, 0.80, 0.85]
            .into_iter()
            .flat_map(|x1| [Self::new(x1, true), Self::new(x1, false)])
            .collect()
    }

    pub fn label(&self) -> String {
        format!("{} {:.2}", if self.usa { "USA" } else { "Others" }, self.x1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapConfig {
    pub b: usize,
    pub seed: u64,
    pub subpopulations: Vec<SubPopulation>,
    pub strata: Vec<StratumDef>,
    pub confidence_level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            b: 25_000,
            seed: 20_130_527,
            subpopulations: SubPopulation::defaults(),
            strata: StratumDef::default_table(),
            confidence_level: 0.95,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.b == 0 {
            return Err(Error::InvalidArgument(
                "bootstrap needs at least one replicate".into(),
            ));
        }
        check_level(self.confidence_level)
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "confidence level must lie in (0, 1), got {level}"
        )))
    }
}

/// One replicate's outputs.
#[derive(Debug, Clone, PartialEq)]
struct Replicate {
    sampled: usize,
    selected: usize,
    failed: Vec<bool>,
    redraws: u32,
    rates: Vec<f64>,
    total_n: f64,
    strata_missing: Vec<f64>,
}

/// Raw replicate values, stored column-wise, plus diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapReplicates {
    pub specs: Vec<ModelSpec>,
    pub weights: Vec<f64>,
    pub subpopulations: Vec<SubPopulation>,
    pub strata: Vec<StratumDef>,
    pub n_observed: usize,
    /// Index into `specs` of the generating model, per replicate.
    pub sampled: Vec<usize>,
    /// Index into `specs` of the BIC-selected refit, per replicate.
    pub selected: Vec<usize>,
    /// `rates[k][b]` for sub-population `k`.
    pub rates: Vec<Vec<f64>>,
    pub total_n: Vec<f64>,
    pub total_missing: Vec<f64>,
    /// `strata_missing[s][b]` for stratum `s`.
    pub strata_missing: Vec<Vec<f64>>,
    /// Failed refits per model, summed over replicates.
    pub refit_failures: Vec<usize>,
    /// Replicates redrawn because every refit failed.
    pub redraws: usize,
}

impl BootstrapReplicates {
    pub fn len(&self) -> usize {
        self.total_n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total_n.is_empty()
    }

    pub fn summarize(&self, level: f64) -> Result<BootstrapSummary> {
        check_level(level)?;
        if self.is_empty() {
            return Err(Error::InvalidArgument("no replicates to summarize".into()));
        }
        let tail = (1.0 - level) / 2.0;
        let interval = |xs: &[f64]| {
            let mut sorted = xs.to_vec();
            sorted.sort_by(f64::total_cmp);
            Interval {
                lower: quantile_sorted(&sorted, tail),
                upper: quantile_sorted(&sorted, 1.0 - tail),
            }
        };

        let rate_intervals = self
            .subpopulations
            .iter()
            .zip(&self.rates)
            .map(|(sp, xs)| RateInterval {
                subpopulation: *sp,
                label: sp.label(),
                interval: interval(xs),
            })
            .collect();
        let strata_intervals = self
            .strata
            .iter()
            .zip(&self.strata_missing)
            .map(|(s, xs)| GroupInterval {
                label: s.label(),
                interval: interval(xs),
            })
            .collect();

        let sum_where = |keep: &dyn Fn(&StratumDef) -> bool| -> Vec<f64> {
            let mut out = vec![0.0; self.len()];
            for (s, xs) in self.strata.iter().zip(&self.strata_missing) {
                if keep(s) {
                    out.iter_mut().zip(xs).for_each(|(o, x)| *o += x);
                }
            }
            out
        };
        let mut country_totals = Vec::new();
        for c in [CountryFilter::Usa, CountryFilter::Other, CountryFilter::All] {
            if self.strata.iter().any(|s| s.country == c) {
                country_totals.push(GroupInterval {
                    label: format!("{c:?}"),
                    interval: interval(&sum_where(&|s| s.country == c)),
                });
            }
        }
        let mut range_totals: Vec<GroupInterval> = Vec::new();
        let mut seen: Vec<(f64, f64, bool)> = Vec::new();
        for s in &self.strata {
            let key = (s.lower, s.upper, s.upper_closed);
            if seen.contains(&key) {
                continue;
            }
            seen.push(key);
            let label = s.label();
            let range = label.split_once(' ').map_or(label.as_str(), |(_, r)| r);
            range_totals.push(GroupInterval {
                label: range.to_string(),
                interval: interval(&sum_where(&|t| (t.lower, t.upper, t.upper_closed) == key)),
            });
        }

        let count = |idx: &[usize]| {
            let mut c = vec![0usize; self.specs.len()];
            idx.iter().for_each(|&l| c[l] += 1);
            self.specs
                .iter()
                .zip(c)
                .map(|(s, n)| (s.label(), n))
                .collect()
        };
        let redraw_fraction = self.redraws as f64 / self.len() as f64;
        Ok(BootstrapSummary {
            b: self.len(),
            confidence_level: level,
            rate_intervals,
            total_n: interval(&self.total_n),
            total_missing: interval(&self.total_missing),
            strata_intervals,
            country_totals,
            range_totals,
            diagnostics: Diagnostics {
                sampled_counts: count(&self.sampled),
                selected_counts: count(&self.selected),
                refit_failures: self
                    .specs
                    .iter()
                    .zip(&self.refit_failures)
                    .map(|(s, &n)| (s.label(), n))
                    .collect(),
                redraws: self.redraws,
                excessive_redraws: redraw_fraction > 0.01,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            lower: self.lower * factor,
            upper: self.upper * factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateInterval {
    pub subpopulation: SubPopulation,
    pub label: String,
    pub interval: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupInterval {
    pub label: String,
    pub interval: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub sampled_counts: Vec<(String, usize)>,
    pub selected_counts: Vec<(String, usize)>,
    pub refit_failures: Vec<(String, usize)>,
    pub redraws: usize,
    /// More than 1% of replicates needed a redraw.
    pub excessive_redraws: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapSummary {
    pub b: usize,
    pub confidence_level: f64,
    /// Per-person-year rates.
    pub rate_intervals: Vec<RateInterval>,
    pub total_n: Interval,
    pub total_missing: Interval,
    pub strata_intervals: Vec<GroupInterval>,
    /// Missing-study sums over strata sharing a country level.
    pub country_totals: Vec<GroupInterval>,
    /// Missing-study sums over strata sharing a proportion-of-women range.
    pub range_totals: Vec<GroupInterval>,
    pub diagnostics: Diagnostics,
}

/// Linear interpolation between order statistics of an ascending sample.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

struct Engine<'a> {
    data: ModelData,
    specs: Vec<ModelSpec>,
    generators: Vec<Vec<CountDist>>,
    sampler: WeightedIndex<f64>,
    membership: Vec<usize>,
    cfg: &'a BootstrapConfig,
}

impl Engine<'_> {
    fn replicate(&self, b: usize) -> Result<Replicate> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(b as u64);
        let mut data = self.data.clone();
        let mut events = vec![0u64; data.len()];
        let mut failed = vec![false; self.specs.len()];
        for redraws in 0..=MAX_REDRAWS {
            let sampled = self.sampler.sample(&mut rng);
            for (y, dist) in events.iter_mut().zip(&self.generators[sampled]) {
                *y = dist.sample_zt(&mut rng)?;
            }
            data.set_events(&events);

            let mut best: Option<(f64, usize, FitResult, Vec<f64>)> = None;
            for (l, &spec) in self.specs.iter().enumerate() {
                let refit = data
                    .fit(spec)
                    .ok()
                    .filter(|f| f.converged && f.bic.is_finite());
                let usable = refit.and_then(|f| {
                    let factors = inflation_factors(&data, &f).ok()?;
                    factors
                        .iter()
                        .all(|x| x.is_finite())
                        .then_some((f, factors))
                });
                match usable {
                    Some((f, factors)) => {
                        if best.as_ref().is_none_or(|(bic, ..)| f.bic < *bic) {
                            best = Some((f.bic, l, f, factors));
                        }
                    }
                    None => failed[l] = true,
                }
            }
            let Some((_, selected, fit, factors)) = best else {
                continue;
            };
            let rates = self
                .cfg
                .subpopulations
                .iter()
                .map(|sp| fit.predict_rate(sp.x1, sp.usa))
                .collect();
            let mut strata_missing = vec![0.0; self.cfg.strata.len()];
            for (&k, n_hat) in self.membership.iter().zip(&factors) {
                strata_missing[k] += n_hat - 1.0;
            }
            return Ok(Replicate {
                sampled,
                selected,
                failed,
                redraws,
                rates,
                total_n: factors.iter().sum(),
                strata_missing,
            });
        }
        Err(Error::AllFitsFailed)
    }
}

/// Runs `cfg.b` replicates from the ten zero-truncated count fits in
/// [`ModelSpec::count_grid`] order and keeps every replicate value.
pub fn run_replicates(
    ds: &Dataset,
    fits: &[Result<FitResult>],
    cfg: &BootstrapConfig,
) -> Result<BootstrapReplicates> {
    cfg.validate()?;
    let specs = ModelSpec::count_grid();
    if fits.len() != specs.len() {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs {} fits in grid order, got {}",
            specs.len(),
            fits.len()
        )));
    }
    for (fit, spec) in fits.iter().zip(&specs) {
        if let Ok(f) = fit {
            if f.spec != *spec {
                return Err(Error::InvalidArgument(format!(
                    "expected {} in grid position, got {}",
                    spec.label(),
                    f.spec.label()
                )));
            }
        }
    }
    let weights = bic_weights(fits)?;
    let data = ModelData::from_dataset(ds)?;
    let membership = assign_strata(ds, &cfg.strata)?;
    let mut generators = Vec::with_capacity(fits.len());
    for (fit, &w) in fits.iter().zip(&weights.weights) {
        let dists = match fit {
            Ok(f) if w > 0.0 => (0..data.len())
                .map(|i| f.count_dist_at(&data, i))
                .collect::<Result<Vec<_>>>()?,
            _ => Vec::new(),
        };
        generators.push(dists);
    }
    let sampler = WeightedIndex::new(&weights.weights)
        .map_err(|e| Error::InvalidArgument(format!("BIC weights: {e}")))?;
    let engine = Engine {
        data,
        specs,
        generators,
        sampler,
        membership,
        cfg,
    };

    let reps: Vec<Replicate> = (0..cfg.b)
        .into_par_iter()
        .map(|b| engine.replicate(b))
        .collect::<Result<_>>()?;

    let n_observed = ds.n();
    let mut out = BootstrapReplicates {
        specs: engine.specs.clone(),
        weights: weights.weights,
        subpopulations: cfg.subpopulations.clone(),
        strata: cfg.strata.clone(),
        n_observed,
        sampled: Vec::with_capacity(cfg.b),
        selected: Vec::with_capacity(cfg.b),
        rates: vec![Vec::with_capacity(cfg.b); cfg.subpopulations.len()],
        total_n: Vec::with_capacity(cfg.b),
        total_missing: Vec::with_capacity(cfg.b),
        strata_missing: vec![Vec::with_capacity(cfg.b); cfg.strata.len()],
        refit_failures: vec![0; engine.specs.len()],
        redraws: 0,
    };
    for r in reps {
        out.sampled.push(r.sampled);
        out.selected.push(r.selected);
        for (col, x) in out.rates.iter_mut().zip(r.rates) {
            col.push(x);
        }
        out.total_n.push(r.total_n);
        out.total_missing.push(r.total_n - n_observed as f64);
        for (col, x) in out.strata_missing.iter_mut().zip(r.strata_missing) {
            col.push(x);
        }
        for (count, f) in out.refit_failures.iter_mut().zip(r.failed) {
            *count += usize::from(f);
        }
        out.redraws += r.redraws as usize;
    }
    Ok(out)
}

/// [`run_replicates`] followed by percentile intervals at `cfg.confidence_level`.
pub fn run_bootstrap(
    ds: &Dataset,
    fits: &[Result<FitResult>],
    cfg: &BootstrapConfig,
) -> Result<BootstrapSummary> {
    run_replicates(ds, fits, cfg)?.summarize(cfg.confidence_level)
}

/// `exp(β̂ ± z·se(β̂))` for an intercept-only log-link fit.
pub fn wald_interval(fit: &FitResult, level: f64) -> Result<Interval> {
    check_level(level)?;
    if fit.spec.lp != crate::LinearPredictor::INTERCEPT || fit.spec.family == Family::Binomial {
        return Err(Error::InvalidArgument(format!(
            "Wald interval needs an intercept-only log-link fit, got {}",
            fit.spec.label()
        )));
    }
    let se = fit
        .se_beta
        .first()
        .copied()
        .filter(|s| s.is_finite())
        .ok_or_else(|| Error::InvalidArgument("fit has no standard error".into()))?;
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    Ok(Interval {
        lower: (fit.beta[0] - z * se).exp(),
        upper: (fit.beta[0] + z * se).exp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{fit_grid, fit_zt, LinearPredictor};
    use proptest::prelude::*;

    fn fake_fit(l: usize, bic: f64) -> Result<FitResult> {
        let spec = ModelSpec::count_grid()[l];
        Ok(FitResult {
            spec,
            beta: vec![-8.0; spec.lp.n_coef()],
            alpha: (spec.family == Family::NegBin).then_some(10.0),
            loglik: 0.0,
            k: spec.n_params(),
            n: 27,
            bic,
            converged: true,
            dispersion_at_bound: false,
            iterations: 1,
            se_beta: vec![0.1; spec.lp.n_coef()],
        })
    }

    fn bundled() -> (Dataset, Vec<Result<FitResult>>) {
        let (ds, _) = Dataset::bundled().impute_prop_women().unwrap();
        let fits = fit_grid(&ds, &ModelSpec::count_grid()).unwrap();
        (ds, fits)
    }

    #[test]
    fn equal_bics_give_equal_weights() {
        let fits: Vec<_> = (0..10).map(|l| fake_fit(l, 42.0)).collect();
        let w = bic_weights(&fits).unwrap();
        assert!(w.weights.iter().all(|&x| (x - 0.1).abs() < 1e-15));
    }

    #[test]
    fn dominant_model_takes_all_weight() {
        let fits: Vec<_> = (0..10)
            .map(|l| fake_fit(l, if l == 3 { 0.0 } else { 100.0 }))
            .collect();
        let w = bic_weights(&fits).unwrap();
        assert!((w.weights[3] - 1.0).abs() < 1e-20);
    }

    #[test]
    fn failed_fits_get_zero_weight() {
        let mut fits: Vec<_> = (0..10).map(|l| fake_fit(l, 10.0)).collect();
        fits[0] = Err(Error::NotConverged);
        if let Ok(f) = &mut fits[1] {
            f.converged = false;
        }
        let w = bic_weights(&fits).unwrap();
        assert_eq!(w.n_failed(), 2);
        assert_eq!(w.weights[0], 0.0);
        assert_eq!(w.weights[1], 0.0);
        assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let all_failed: Vec<Result<FitResult>> =
            (0..10).map(|_| Err(Error::NotConverged)).collect();
        assert!(matches!(
            bic_weights(&all_failed),
            Err(Error::AllFitsFailed)
        ));
    }

    #[test]
    fn bundled_weights() {
        let (_, fits) = bundled();
        let w = bic_weights(&fits).unwrap();
        let expected = [
            0.4813, 0.1253, 0.1863, 0.0362, 0.0097, 0.0926, 0.0241, 0.0358, 0.0070, 0.0019,
        ];
        for (got, want) in w.weights.iter().zip(expected) {
            assert!((got - want).abs() < 0.01, "{got} vs {want}");
        }
    }

    #[test]
    fn quantile_hits_order_statistics() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&xs, 0.0), 1.0);
        assert_eq!(quantile_sorted(&xs, 0.25), 2.0);
        assert_eq!(quantile_sorted(&xs, 1.0), 5.0);
        assert_eq!(quantile_sorted(&xs, 0.125), 1.5);
        assert_eq!(quantile_sorted(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn wald_on_bundled_data() {
        let (ds, _) = bundled();
        let fit = fit_zt(
            &ds,
            ModelSpec::truncated(Family::Poisson, LinearPredictor::INTERCEPT),
        )
        .unwrap();
        let ci = wald_interval(&fit, 0.95).unwrap().scaled(1e5);
        assert!((ci.lower - 23.3).abs() < 0.2, "{ci:?}");
        assert!((ci.upper - 43.2).abs() < 0.2, "{ci:?}");
        let wide = wald_interval(&fit, 0.99).unwrap().scaled(1e5);
        assert!(wide.lower < ci.lower && wide.upper > ci.upper);
    }

    #[test]
    fn wald_with_zero_se_is_degenerate() {
        let mut fit = fake_fit(0, 0.0).unwrap();
        fit.se_beta = vec![0.0];
        let ci = wald_interval(&fit, 0.95).unwrap();
        assert_eq!(ci.lower, (-8.0f64).exp());
        assert_eq!(ci.upper, ci.lower);
        fit.se_beta.clear();
        assert!(wald_interval(&fit, 0.95).is_err());
        assert!(wald_interval(&fake_fit(1, 0.0).unwrap(), 0.95).is_err());
    }

    #[test]
    fn small_run_is_reproducible_and_consistent() {
        let (ds, fits) = bundled();
        let cfg = BootstrapConfig {
            b: 40,
            seed: 7,
            ..Default::default()
        };
        let a = run_replicates(&ds, &fits, &cfg).unwrap();
        let b = run_replicates(&ds, &fits, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 40);
        for r in 0..a.len() {
            assert_eq!(a.total_missing[r], a.total_n[r] - 27.0);
            let strata: f64 = a.strata_missing.iter().map(|col| col[r]).sum();
            assert!((strata - a.total_missing[r]).abs() < 1e-9);
        }
        let s = a.summarize(0.95).unwrap();
        assert!(s.total_missing.lower <= s.total_missing.upper);
        assert_eq!(s.rate_intervals.len(), 6);
        assert_eq!(s.strata_intervals.len(), 8);
        assert_eq!(s.country_totals.len(), 2);
        assert_eq!(s.range_totals.len(), 4);
        let narrow = a.summarize(0.5).unwrap();
        assert!(narrow.total_n.lower >= s.total_n.lower && narrow.total_n.upper <= s.total_n.upper);
    }

    #[test]
    fn first_replicate_does_not_depend_on_b() {
        let (ds, fits) = bundled();
        let one = BootstrapConfig {
            b: 1,
            seed: 3,
            ..Default::default()
        };
        let three = BootstrapConfig {
            b: 3,
            ..one.clone()
        };
        let a = run_replicates(&ds, &fits, &one).unwrap();
        let b = run_replicates(&ds, &fits, &three).unwrap();
        assert_eq!(a.total_n[0], b.total_n[0]);
        assert_eq!(a.rates[2][0], b.rates[2][0]);
    }

    #[test]
    fn config_is_validated() {
        let (ds, fits) = bundled();
        let zero = BootstrapConfig {
            b: 0,
            ..Default::default()
        };
        assert!(run_bootstrap(&ds, &fits, &zero).is_err());
        let bad_level = BootstrapConfig {
            b: 1,
            confidence_level: 1.0,
            ..Default::default()
        };
        assert!(run_bootstrap(&ds, &fits, &bad_level).is_err());
    }

    proptest! {
        #[test]
        fn weights_are_normalized_and_ordered(bics in proptest::collection::vec(0.0f64..200.0, 10)) {
            let fits: Vec<_> = bics.iter().enumerate().map(|(l, &b)| fake_fit(l, b)).collect();
            let w = bic_weights(&fits).unwrap();
            prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for i in 0..10 {
                for j in 0..10 {
                    if bics[i] < bics[j] {
                        prop_assert!(w.weights[i] >= w.weights[j]);
                    }
                }
            }
        }

        #[test]
        fn quantile_is_monotone(mut xs in proptest::collection::vec(-1e3f64..1e3, 1..50), p in 0.0f64..1.0, q in 0.0f64..1.0) {
            xs.sort_by(f64::total_cmp);
            let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
            prop_assert!(quantile_sorted(&xs, lo) <= quantile_sorted(&xs, hi));
            prop_assert!(quantile_sorted(&xs, lo) >= xs[0]);
            prop_assert!(quantile_sorted(&xs, hi) <= xs[xs.len() - 1]);
        }
    }
}
