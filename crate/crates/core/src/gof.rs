//! Observed versus fitted count frequencies and the chi-square test.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::ztreg::ModelData;
use crate::{Dataset, Error, FitResult, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyBin {
    pub label: String,
    pub observed: u64,
    pub fitted: f64,
}

/// Counts `1, 2, …, threshold − 1` followed by a pooled `threshold+` bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyTable {
    pub bins: Vec<FrequencyBin>,
    pub tail_threshold: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Fitted frequencies `r̂_y = Σᵢ p⁺(y; μ̂ᵢ)` under a zero-truncated fit. The
/// tail bin is the complement `n − Σ_{y<threshold} r̂_y`.
pub fn fitted_frequencies(
    ds: &Dataset,
    fit: &FitResult,
    tail_threshold: u64,
) -> Result<FrequencyTable> {
    if !fit.converged {
        return Err(Error::NotConverged);
    }
    if !fit.spec.truncated {
        return Err(Error::InvalidArgument(
            "fitted frequencies need a zero-truncated fit".into(),
        ));
    }
    if tail_threshold < 2 {
        return Err(Error::InvalidArgument(format!(
            "tail threshold must be at least 2, got {tail_threshold}"
        )));
    }
    let data = ModelData::from_dataset(ds)?;
    let n = data.len();
    let head = (tail_threshold - 1) as usize;
    let mut fitted = vec![0.0; head];
    for i in 0..n {
        let dist = fit.count_dist_at(&data, i)?;
        for (k, f) in fitted.iter_mut().enumerate() {
            *f += dist.zt_pmf(k as u64 + 1)?;
        }
    }
    let mut observed = vec![0u64; head + 1];
    for &y in data.events() {
        if y == 0 {
            return Err(Error::Domain("observed data contain a zero count".into()));
        }
        observed[((y - 1) as usize).min(head)] += 1;
    }

    let mut bins: Vec<FrequencyBin> = fitted
        .iter()
        .enumerate()
        .map(|(k, &f)| FrequencyBin {
            label: (k + 1).to_string(),
            observed: observed[k],
            fitted: f,
        })
        .collect();
    bins.push(FrequencyBin {
        label: format!("{tail_threshold}+"),
        observed: observed[head],
        fitted: n as f64 - fitted.iter().sum::<f64>(),
    });
    Ok(FrequencyTable {
        bins,
        tail_threshold,
    })
}

/// Pearson statistic over the displayed bins, with
/// `#bins − 1 − n_params` degrees of freedom.
pub fn chi_square_test(ft: &FrequencyTable, n_params: usize) -> Result<ChiSquareResult> {
    let dof = ft.bins.len() as i64 - 1 - n_params as i64;
    if dof <= 0 {
        return Err(Error::InvalidArgument(format!(
            "{} bins leave no degrees of freedom for {n_params} parameters",
            ft.bins.len()
        )));
    }
    let mut statistic = 0.0;
    for b in &ft.bins {
        if b.fitted.is_nan() || b.fitted <= 0.0 {
            return Err(Error::Domain(format!("bin {} has no fitted mass", b.label)));
        }
        statistic += (b.observed as f64 - b.fitted).powi(2) / b.fitted;
    }
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    Ok(ChiSquareResult {
        statistic,
        dof: dof as usize,
        p_value: dist.sf(statistic),
    })
}
