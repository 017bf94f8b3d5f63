//! Rate estimation for meta-analyses in which studies with zero events were
//! never included.
//!
//! The observed event counts are modelled with zero-truncated Poisson,
//! negative-binomial and binomial regressions on study exposure. The fitted
//! models give the probability that a study "like" each observed one would
//! have recorded zero events, which in turn gives a Horvitz-Thompson estimate
//! of how many studies were left out. A parametric bootstrap that samples the
//! generating model by BIC weight supplies percentile intervals for both the
//! rates and the missing-study counts.
//!
//! ```no_run
//! use ztmeta::{Dataset, Family, LinearPredictor, ModelSpec};
//!
//! let (ds, _) = Dataset::bundled().impute_prop_women().unwrap();
//! let spec = ModelSpec::truncated(Family::Poisson, LinearPredictor::INTERCEPT);
//! let fit = ztmeta::fit_model(&ds, spec).unwrap();
//! println!("{:.1} per 100k", 1e5 * fit.predict_rate(0.8, true));
//! ```

pub mod bootstrap;
pub mod dataset;
pub mod distributions;
mod error;
pub mod gof;
pub mod meta;
pub mod population;
pub mod ztreg;

pub use bootstrap::{
    bic_weights, run_bootstrap, wald_interval, BicWeights, BootstrapConfig, BootstrapReplicates,
    BootstrapSummary, Interval, SubPopulation,
};
pub use dataset::{Dataset, ImputationResult, StudyRecord};
pub use distributions::CountDist;
pub use error::{Error, Result};
pub use gof::{chi_square_test, fitted_frequencies, ChiSquareResult, FrequencyTable};
pub use meta::{pooled_rate_linear, pooled_rate_log, PooledEstimate, PoolingMethod};
pub use population::{ht_estimate, stratify, CountryFilter, PopulationEstimate, StratumDef};
pub use ztreg::{
    fit_glm, fit_grid, fit_model, fit_zt, Family, FitResult, LinearPredictor, ModelData, ModelSpec,
};
