//! Shared fixtures for the benchmarks.

use ztmeta::{fit_grid, Dataset, FitResult, ModelSpec, Result};

/// The bundled data with its missing covariate imputed.
pub fn imputed() -> Dataset {
    Dataset::bundled()
        .impute_prop_women()
        .expect("bundled data imputes")
        .0
}

/// The ten zero-truncated count fits the bootstrap starts from.
pub fn count_fits(ds: &Dataset) -> Vec<Result<FitResult>> {
    fit_grid(ds, &ModelSpec::count_grid()).expect("non-empty grid")
}
