//! Pooled rate estimators that ignore the missing zero-event studies.

use serde::Serialize;

use crate::{Dataset, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMethod {
    /// Inverse-variance weighting of the study rates `yᵢ/eᵢ`; equal to the
    /// Poisson MLE `Σy / Σe`.
    InverseVarianceLinear,
    /// Inverse-variance weighting of `ln(yᵢ/eᵢ)` with delta-method weights `yᵢ`.
    InverseVarianceLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PooledEstimate {
    /// Events per person-year.
    pub rate: f64,
    pub method: PoolingMethod,
}

pub fn pooled_rate_linear(ds: &Dataset) -> Result<PooledEstimate> {
    let exposure = ds.total_exposure();
    if ds.n() == 0 || exposure <= 0.0 {
        return Err(Error::InvalidArgument("no exposure to pool".into()));
    }
    Ok(PooledEstimate {
        rate: ds.total_events() as f64 / exposure,
        method: PoolingMethod::InverseVarianceLinear,
    })
}

pub fn pooled_rate_log(ds: &Dataset) -> Result<PooledEstimate> {
    let mut weighted = 0.0;
    let mut weight = 0.0;
    for r in ds.records() {
        if r.events == 0 {
            return Err(Error::Domain(format!(
                "{}: log-scale pooling is undefined for a zero count",
                r.id
            )));
        }
        let y = r.events as f64;
        weighted += y * (y / r.exposure).ln();
        weight += y;
    }
    Ok(PooledEstimate {
        rate: (weighted / weight).exp(),
        method: PoolingMethod::InverseVarianceLog,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::StudyRecord;
    use proptest::prelude::*;

    fn ds(rows: &[(u64, f64)]) -> Dataset {
        Dataset::new(
            rows.iter()
                .enumerate()
                .map(|(i, &(y, e))| StudyRecord {
                    id: i.to_string(),
                    exposure: e,
                    prop_women: Some(0.5),
                    country: "USA".into(),
                    events: y,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn bundled_estimates() {
        let d = Dataset::bundled();
        assert!((1e5 * pooled_rate_linear(&d).unwrap().rate - 44.5).abs() < 0.05);
        assert!((1e5 * pooled_rate_log(&d).unwrap().rate - 60.0).abs() < 0.05);
    }

    #[test]
    fn single_and_pair() {
        assert!((pooled_rate_linear(&ds(&[(2, 1000.0)])).unwrap().rate - 0.002).abs() < 1e-15);
        assert!((pooled_rate_log(&ds(&[(2, 1000.0)])).unwrap().rate - 0.002).abs() < 1e-15);
        let pair = ds(&[(1, 100.0), (1, 100.0)]);
        assert!((pooled_rate_linear(&pair).unwrap().rate - 0.01).abs() < 1e-15);
    }

    #[test]
    fn log_pooling_rejects_zero() {
        assert!(matches!(
            pooled_rate_log(&ds(&[(0, 10.0), (1, 10.0)])),
            Err(Error::Domain(_))
        ));
    }

    proptest! {
        #[test]
        fn linear_is_split_invariant(y1 in 1u64..50, y2 in 1u64..50, e in 10.0f64..1e5, f in 0.05f64..0.95) {
            let whole = pooled_rate_linear(&ds(&[(y1 + y2, e)])).unwrap().rate;
            let split = pooled_rate_linear(&ds(&[(y1, e * f), (y2, e * (1.0 - f))])).unwrap().rate;
            prop_assert!((whole - split).abs() <= 1e-12 * whole);
        }

        #[test]
        fn exposure_rescaling(rows in prop::collection::vec((1u64..30, 1.0f64..1e5), 1..10), c in 0.01f64..100.0) {
            let base = ds(&rows);
            let scaled: Vec<_> = rows.iter().map(|&(y, e)| (y, e * c)).collect();
            let scaled = ds(&scaled);
            for f in [pooled_rate_linear, pooled_rate_log] {
                let a = f(&base).unwrap().rate;
                let b = f(&scaled).unwrap().rate;
                prop_assert!((a / c - b).abs() <= 1e-10 * b);
            }
        }
    }
}
