use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Map, Value};
use ztmeta::bootstrap::{GroupInterval, RateInterval};
use ztmeta::population::StratumRow;
use ztmeta::{
    bic_weights, chi_square_test, fit_grid, fit_model, fitted_frequencies, ht_estimate,
    pooled_rate_linear, pooled_rate_log, run_bootstrap, stratify, wald_interval, BootstrapConfig,
    BootstrapSummary, Dataset, Error, Family, FitResult, ImputationResult, Interval, ModelSpec,
    StratumDef, SubPopulation,
};

use crate::render::{fixed, num, opt_num, Output, Table};

pub const SCHEMA_VERSION: u32 = 1;

/// The data set as read, and the one the models are fitted to.
pub struct Inputs {
    pub source: String,
    pub raw: Dataset,
    pub data: Dataset,
    pub imputation: Option<ImputationResult>,
}

pub fn load(path: Option<&Path>) -> Result<Inputs> {
    let (source, raw) = match path {
        Some(p) => (
            p.display().to_string(),
            Dataset::load_csv(p).context("reading input")?,
        ),
        None => ("bundled".to_string(), Dataset::bundled()),
    };
    let (data, imputation) = if raw.has_missing_covariates() {
        let (data, imp) = raw.impute_prop_women().context("imputing prop_women")?;
        (data, Some(imp))
    } else {
        (raw.clone(), None)
    };
    Ok(Inputs {
        source,
        raw,
        data,
        imputation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Strata {
    /// USA and others crossed with four proportion-of-women ranges.
    Default,
    /// A single stratum containing every study.
    All,
}

impl Strata {
    pub fn defs(self) -> Vec<StratumDef> {
        match self {
            Strata::Default => StratumDef::default_table(),
            Strata::All => vec![StratumDef::everything()],
        }
    }
}

pub fn impute(inputs: &Inputs) -> Output {
    let Some(imp) = &inputs.imputation else {
        let mut t = Table::new("imputation", "Imputation", &["note"]);
        t.row(vec!["no missing prop_women values".into()]);
        return Output {
            json: json!({ "imputed": [], "selected_terms": [], "candidates": [] }),
            tables: vec![t],
        };
    };
    let mut values = Table::new(
        "imputed_values",
        "Imputed prop_women",
        &["study", "prop_women"],
    );
    for (id, v) in &imp.imputed {
        values.row(vec![id.clone(), fixed(*v, 4)]);
    }
    let mut cands = Table::new(
        "imputation_candidates",
        "Imputation candidates",
        &["terms", "BIC", "selected"],
    );
    for c in &imp.candidates {
        let terms = if c.terms.is_empty() {
            "(intercept)".to_string()
        } else {
            c.terms.join(" + ")
        };
        cands.row(vec![
            terms,
            c.bic.map_or("-".into(), |b| fixed(b, 2)),
            if c.terms == imp.selected_terms {
                "*".into()
            } else {
                String::new()
            },
        ]);
    }
    let json = json!({
        "imputed": imp.imputed.iter().map(|(id, v)| json!({"id": id, "prop_women": num(*v)})).collect::<Vec<_>>(),
        "selected_terms": imp.selected_terms,
        "bic": num(imp.bic),
        "candidates": imp.candidates.iter().map(|c| json!({"terms": c.terms, "bic": opt_num(c.bic)})).collect::<Vec<_>>(),
    });
    Output {
        json,
        tables: vec![values, cands],
    }
}

pub fn naive(inputs: &Inputs) -> Result<Output> {
    let linear = pooled_rate_linear(&inputs.raw)?.rate;
    let log = pooled_rate_log(&inputs.raw)?.rate;
    let mut t = Table::new(
        "pooled_rates",
        "Pooled rates (per 100,000 person-years)",
        &["estimator", "rate"],
    );
    t.row(vec![
        "inverse variance, linear".into(),
        fixed(1e5 * linear, 2),
    ]);
    t.row(vec!["inverse variance, log".into(), fixed(1e5 * log, 2)]);
    Ok(Output {
        json: json!({
            "naive_linear": num(linear),
            "naive_log": num(log),
            "naive_linear_per_100k": num(1e5 * linear),
            "naive_log_per_100k": num(1e5 * log),
        }),
        tables: vec![t],
    })
}

fn fit_json(fit: &FitResult, weight: Option<f64>) -> Value {
    let rates: Vec<Value> = SubPopulation::defaults()
        .iter()
        .map(|sp| {
            json!({
                "label": sp.label(),
                "x1": num(sp.x1),
                "usa": sp.usa,
                "rate": num(fit.predict_rate(sp.x1, sp.usa)),
                "rate_per_100k": num(1e5 * fit.predict_rate(sp.x1, sp.usa)),
            })
        })
        .collect();
    json!({
        "model": fit.spec.label(),
        "family": fit.spec.family.label(),
        "lp": fit.spec.lp.index(),
        "truncated": fit.spec.truncated,
        "loglik": num(fit.loglik),
        "k": fit.k,
        "bic": num(fit.bic),
        "bic_weight": opt_num(weight),
        "beta": fit.beta.iter().map(|&b| num(b)).collect::<Vec<_>>(),
        "se_beta": fit.se_beta.iter().map(|&b| num(b)).collect::<Vec<_>>(),
        "alpha": opt_num(fit.alpha),
        "converged": fit.converged,
        "dispersion_at_bound": fit.dispersion_at_bound,
        "rates": rates,
    })
}

fn failed_json(spec: ModelSpec, err: &Error) -> Value {
    json!({ "model": spec.label(), "error": err.to_string() })
}

fn fit_table(
    key: &str,
    title: &str,
    specs: &[ModelSpec],
    fits: &[ztmeta::Result<FitResult>],
    weights: &[Option<f64>],
) -> Table {
    let mut t = Table::new(
        key,
        title,
        &[
            "model",
            "loglik",
            "k",
            "BIC",
            "weight",
            "USA 0.80",
            "Others 0.80",
        ],
    );
    for ((spec, fit), w) in specs.iter().zip(fits).zip(weights) {
        match fit {
            Ok(f) => t.row(vec![
                spec.label(),
                fixed(f.loglik, 3),
                f.k.to_string(),
                fixed(f.bic, 2),
                w.map_or("-".into(), |w| fixed(w, 4)),
                fixed(1e5 * f.predict_rate(0.8, true), 2),
                fixed(1e5 * f.predict_rate(0.8, false), 2),
            ]),
            Err(e) => {
                let mut row = vec![spec.label(), format!("failed: {e}")];
                row.resize(7, "-".into());
                t.row(row);
            }
        }
    }
    t
}

/// The BIC-best converged count model; ties go to the earlier grid entry.
pub fn selected(fits: &[ztmeta::Result<FitResult>]) -> Result<&FitResult> {
    fits.iter()
        .flatten()
        .filter(|f| f.converged)
        .fold(None::<&FitResult>, |best, f| match best {
            Some(b) if b.bic <= f.bic => Some(b),
            _ => Some(f),
        })
        .ok_or_else(|| Error::AllFitsFailed.into())
}

/// Fits the untruncated Poisson grid and the 15 zero-truncated models.
pub fn fit_all(inputs: &Inputs) -> Result<(Output, Vec<ztmeta::Result<FitResult>>)> {
    let ds = &inputs.data;
    let glm_specs = ModelSpec::untruncated_grid(Family::Poisson);
    let glm = fit_grid(ds, &glm_specs)?;
    let zt_specs = ModelSpec::full_grid();
    let zt = fit_grid(ds, &zt_specs)?;
    let weights = bic_weights(&zt[..10])?;
    let mut w: Vec<Option<f64>> = weights.weights.iter().map(|&x| Some(x)).collect();
    w.resize(zt.len(), None);
    let best = selected(&zt[..10])?;

    let rows = |specs: &[ModelSpec],
                fits: &[ztmeta::Result<FitResult>],
                w: &[Option<f64>]|
     -> Vec<Value> {
        specs
            .iter()
            .zip(fits)
            .zip(w)
            .map(|((s, f), w)| match f {
                Ok(f) => fit_json(f, *w),
                Err(e) => failed_json(*s, e),
            })
            .collect()
    };
    let json = json!({
        "untruncated_poisson": rows(&glm_specs, &glm, &vec![None; glm.len()]),
        "zero_truncated": rows(&zt_specs, &zt, &w),
        "selected_model": best.spec.label(),
        "zt_rate": num(best.predict_rate(0.8, true)),
        "zt_rate_per_100k": num(1e5 * best.predict_rate(0.8, true)),
    });
    let tables = vec![
        fit_table(
            "untruncated_models",
            "Untruncated Poisson models (rates per 100,000)",
            &glm_specs,
            &glm,
            &vec![None; glm.len()],
        ),
        fit_table(
            "truncated_models",
            "Zero-truncated models (rates per 100,000)",
            &zt_specs,
            &zt,
            &w,
        ),
    ];
    let count_fits = zt.into_iter().take(10).collect();
    Ok((Output { json, tables }, count_fits))
}

pub fn fit_one(inputs: &Inputs, spec: ModelSpec) -> Result<Output> {
    let fit = fit_model(&inputs.data, spec)?;
    let t = fit_table(
        "fit",
        "Fit (rates per 100,000)",
        &[spec],
        &[Ok(fit.clone())],
        &[None],
    );
    let mut coef = Table::new("coefficients", "Coefficients", &["term", "estimate", "se"]);
    let names = ["intercept", "prop_women", "usa", "prop_women:usa"];
    let terms: Vec<&str> = match spec.lp.index() {
        1 => vec![names[0]],
        2 => vec![names[0], names[1]],
        3 => vec![names[0], names[2]],
        4 => names[..3].to_vec(),
        _ => names.to_vec(),
    };
    for (i, term) in terms.iter().enumerate() {
        coef.row(vec![
            term.to_string(),
            fixed(fit.beta[i], 4),
            fit.se_beta.get(i).map_or("-".into(), |s| fixed(*s, 4)),
        ]);
    }
    if let Some(a) = fit.alpha {
        coef.row(vec!["alpha".into(), format!("{a:.4e}"), "-".into()]);
    }
    Ok(Output {
        json: fit_json(&fit, None),
        tables: vec![t, coef],
    })
}

/// The model used by the stage commands: `spec` if given, else the BIC-best
/// zero-truncated count model.
pub fn chosen_fit(inputs: &Inputs, spec: Option<ModelSpec>) -> Result<FitResult> {
    match spec {
        Some(s) => Ok(fit_model(&inputs.data, s)?),
        None => {
            let fits = fit_grid(&inputs.data, &ModelSpec::count_grid())?;
            selected(&fits).cloned()
        }
    }
}

pub fn gof(inputs: &Inputs, fit: &FitResult, tail_threshold: u64) -> Result<Output> {
    let table = fitted_frequencies(&inputs.data, fit, tail_threshold)?;
    let chi = chi_square_test(&table, fit.spec.n_params())?;
    let mut t = Table::new(
        "frequencies",
        format!("Observed and fitted frequencies ({})", fit.spec.label()),
        &["events", "observed", "fitted"],
    );
    for b in &table.bins {
        t.row(vec![
            b.label.clone(),
            b.observed.to_string(),
            fixed(b.fitted, 2),
        ]);
    }
    let mut s = Table::new(
        "chi_square",
        "Chi-square test",
        &["statistic", "dof", "p-value"],
    );
    s.row(vec![
        fixed(chi.statistic, 3),
        chi.dof.to_string(),
        fixed(chi.p_value, 3),
    ]);
    Ok(Output {
        json: json!({
            "model": fit.spec.label(),
            "bins": table.bins.iter().map(|b| json!({"label": b.label, "observed": b.observed, "fitted": num(b.fitted)})).collect::<Vec<_>>(),
            "chi_square": num(chi.statistic),
            "dof": chi.dof,
            "p_value": num(chi.p_value),
        }),
        tables: vec![t, s],
    })
}

pub fn wald(fit: &FitResult, level: f64) -> Result<Output> {
    let ci = wald_interval(fit, level)?;
    let mut t = Table::new(
        "wald",
        format!("Wald interval ({}, per 100,000)", fit.spec.label()),
        &["level", "lower", "upper"],
    );
    t.row(vec![
        fixed(level, 2),
        fixed(1e5 * ci.lower, 2),
        fixed(1e5 * ci.upper, 2),
    ]);
    Ok(Output {
        json: json!({
            "model": fit.spec.label(),
            "level": num(level),
            "lower": num(ci.lower),
            "upper": num(ci.upper),
            "lower_per_100k": num(1e5 * ci.lower),
            "upper_per_100k": num(1e5 * ci.upper),
        }),
        tables: vec![t],
    })
}

fn stratum_json(r: &StratumRow) -> Value {
    json!({
        "label": r.label,
        "observed": r.observed,
        "missing": num(r.missing),
        "missing_rounded": r.missing_rounded(),
    })
}

pub fn population(
    inputs: &Inputs,
    fit: &FitResult,
    strata: &[StratumDef],
) -> Result<(Output, Vec<StratumRow>)> {
    let pe = ht_estimate(&inputs.data, fit)?;
    let rows = stratify(&pe, &inputs.data, strata)?;
    let mut t = Table::new(
        "excluded_studies",
        format!("Estimated excluded studies ({})", fit.spec.label()),
        &["stratum", "observed", "missing", "rounded"],
    );
    for r in &rows {
        t.row(vec![
            r.label.clone(),
            r.observed.to_string(),
            fixed(r.missing, 2),
            r.missing_rounded().to_string(),
        ]);
    }
    t.row(vec![
        "Total".into(),
        pe.n_observed.to_string(),
        fixed(pe.total_m, 2),
        format!("{}", pe.total_m.round()),
    ]);
    let mut per = Table::new("per_study", "Per-study estimates", &["study", "N", "M"]);
    for s in &pe.per_study {
        per.row(vec![s.id.clone(), fixed(s.total, 3), fixed(s.missing, 3)]);
    }
    let json = json!({
        "model": fit.spec.label(),
        "total_n": num(pe.total_n),
        "total_m": num(pe.total_m),
        "total_missing": pe.total_m.round() as i64,
        "n_observed": pe.n_observed,
        "strata": rows.iter().map(stratum_json).collect::<Vec<_>>(),
        "per_study": pe.per_study.iter().map(|s| json!({"id": s.id, "n_hat": num(s.total), "m_hat": num(s.missing)})).collect::<Vec<_>>(),
    });
    Ok((
        Output {
            json,
            tables: vec![t, per],
        },
        rows,
    ))
}

fn interval_json(i: Interval) -> Value {
    json!({ "lower": num(i.lower), "upper": num(i.upper) })
}

fn rate_json(r: &RateInterval) -> Value {
    json!({
        "label": r.label,
        "x1": num(r.subpopulation.x1),
        "usa": r.subpopulation.usa,
        "lower": num(r.interval.lower),
        "upper": num(r.interval.upper),
        "lower_per_100k": num(1e5 * r.interval.lower),
        "upper_per_100k": num(1e5 * r.interval.upper),
    })
}

fn group_json(g: &GroupInterval) -> Value {
    json!({ "label": g.label, "lower": num(g.interval.lower), "upper": num(g.interval.upper) })
}

fn counts_json(counts: &[(String, usize)]) -> Value {
    let map: Map<String, Value> = counts
        .iter()
        .map(|(k, v)| (k.clone(), Value::from(*v)))
        .collect();
    Value::Object(map)
}

pub fn bootstrap(
    inputs: &Inputs,
    fits: &[ztmeta::Result<FitResult>],
    cfg: &BootstrapConfig,
) -> Result<(Output, BootstrapSummary)> {
    let s = run_bootstrap(&inputs.data, fits, cfg)?;
    let pct = (100.0 * cfg.confidence_level).round();
    let mut rates = Table::new(
        "rate_intervals",
        format!("{pct}% percentile intervals for rates (per 100,000)"),
        &["sub-population", "lower", "upper"],
    );
    for r in &s.rate_intervals {
        rates.row(vec![
            r.label.clone(),
            fixed(1e5 * r.interval.lower, 1),
            fixed(1e5 * r.interval.upper, 1),
        ]);
    }
    let mut counts = Table::new(
        "count_intervals",
        format!("{pct}% percentile intervals for study counts"),
        &["quantity", "lower", "upper"],
    );
    let mut push =
        |label: String, i: Interval| counts.row(vec![label, fixed(i.lower, 1), fixed(i.upper, 1)]);
    push("total studies".into(), s.total_n);
    push("total missing".into(), s.total_missing);
    for g in s
        .strata_intervals
        .iter()
        .chain(&s.country_totals)
        .chain(&s.range_totals)
    {
        push(format!("missing {}", g.label), g.interval);
    }
    let d = &s.diagnostics;
    let mut diag = Table::new(
        "diagnostics",
        "Replicate diagnostics",
        &["model", "generated", "selected", "failed refits"],
    );
    for ((sampled, selected), failed) in d
        .sampled_counts
        .iter()
        .zip(&d.selected_counts)
        .zip(&d.refit_failures)
    {
        diag.row(vec![
            sampled.0.clone(),
            sampled.1.to_string(),
            selected.1.to_string(),
            failed.1.to_string(),
        ]);
    }
    let json = json!({
        "b": s.b,
        "seed": cfg.seed,
        "confidence_level": num(cfg.confidence_level),
        "rates": s.rate_intervals.iter().map(rate_json).collect::<Vec<_>>(),
        "total_n": interval_json(s.total_n),
        "total_missing": interval_json(s.total_missing),
        "strata": s.strata_intervals.iter().map(group_json).collect::<Vec<_>>(),
        "country_totals": s.country_totals.iter().map(group_json).collect::<Vec<_>>(),
        "range_totals": s.range_totals.iter().map(group_json).collect::<Vec<_>>(),
        "diagnostics": {
            "generated": counts_json(&d.sampled_counts),
            "selected": counts_json(&d.selected_counts),
            "failed_refits": counts_json(&d.refit_failures),
            "redraws": d.redraws,
            "excessive_redraws": d.excessive_redraws,
        },
    });
    Ok((
        Output {
            json,
            tables: vec![rates, counts, diag],
        },
        s,
    ))
}

pub struct ReportConfig {
    pub tail_threshold: u64,
    pub strata: Vec<StratumDef>,
    pub bootstrap: BootstrapConfig,
}

/// Runs every stage and assembles the combined report.
pub fn report(inputs: &Inputs, cfg: &ReportConfig) -> Result<Output> {
    let imputation = impute(inputs);
    let naive = naive(inputs).context("stage naive")?;
    let (models, count_fits) = fit_all(inputs).context("stage fit")?;
    let best = selected(&count_fits).context("stage fit")?.clone();
    let intercept = count_fits[0]
        .as_ref()
        .map_err(|e| anyhow::anyhow!("stage fit: {e}"))?;
    let gof = gof(inputs, &best, cfg.tail_threshold).context("stage gof")?;
    let wald = wald(intercept, cfg.bootstrap.confidence_level).context("stage wald")?;
    let (population, rows) = population(inputs, &best, &cfg.strata).context("stage population")?;
    let (boot, summary) =
        bootstrap(inputs, &count_fits, &cfg.bootstrap).context("stage bootstrap")?;

    let strata: Vec<Value> = rows
        .iter()
        .zip(&summary.strata_intervals)
        .map(|(r, ci)| {
            let mut v = stratum_json(r);
            v["ci_lower"] = num(ci.interval.lower);
            v["ci_upper"] = num(ci.interval.upper);
            v
        })
        .collect();

    let mut json = Map::new();
    json.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
    json.insert(
        "config".into(),
        json!({
            "input": inputs.source,
            "b": cfg.bootstrap.b,
            "seed": cfg.bootstrap.seed,
            "confidence_level": num(cfg.bootstrap.confidence_level),
            "tail_threshold": cfg.tail_threshold,
        }),
    );
    json.insert(
        "data".into(),
        json!({
            "n_studies": inputs.raw.n(),
            "total_events": inputs.raw.total_events(),
            "total_person_years": num(inputs.raw.total_exposure()),
        }),
    );
    json.insert("imputation".into(), imputation.json);
    for (k, v) in naive.json.as_object().expect("object") {
        json.insert(k.clone(), v.clone());
    }
    for key in [
        "selected_model",
        "zt_rate",
        "zt_rate_per_100k",
        "untruncated_poisson",
    ] {
        json.insert(key.into(), models.json[key].clone());
    }
    json.insert(
        "zero_truncated".into(),
        models.json["zero_truncated"].clone(),
    );
    json.insert("goodness_of_fit".into(), gof.json);
    json.insert("wald".into(), wald.json);
    json.insert(
        "total_missing".into(),
        population.json["total_missing"].clone(),
    );
    json.insert("population".into(), population.json);
    json.insert("rate_intervals".into(), boot.json["rates"].clone());
    json.insert(
        "missing_intervals".into(),
        json!({
            "strata": strata,
            "country_totals": boot.json["country_totals"].clone(),
            "range_totals": boot.json["range_totals"].clone(),
            "total_missing_interval": boot.json["total_missing"].clone(),
        }),
    );
    json.insert("bootstrap".into(), boot.json);

    let tables = [
        imputation.tables,
        naive.tables,
        models.tables,
        gof.tables,
        wald.tables,
        population.tables,
        boot.tables,
    ]
    .into_iter()
    .flatten()
    .collect();
    Ok(Output {
        json: Value::Object(json),
        tables,
    })
}

/// Writes `report.json` and, if asked, one CSV per table into `dir`.
pub fn write_report(out: &Output, dir: &Path, csv: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    let path = dir.join("report.json");
    std::fs::write(&path, out.render(crate::render::Format::Json))
        .with_context(|| format!("writing {}", path.display()))?;
    written.push(path);
    if csv {
        for t in &out.tables {
            let path = dir.join(format!("{}.csv", t.key));
            std::fs::write(&path, t.to_csv())
                .with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
    }
    Ok(written)
}
