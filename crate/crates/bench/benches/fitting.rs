use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use ztmeta::{fit_grid, fit_zt, Family, LinearPredictor, ModelData, ModelSpec};
use ztmeta_bench::imputed;

fn single_fits(c: &mut Criterion) {
    let ds = imputed();
    let data = ModelData::from_dataset(&ds).unwrap();
    let mut group = c.benchmark_group("single_fit");
    for family in [Family::Poisson, Family::NegBin, Family::Binomial] {
        for lp in [1, 5] {
            let spec = ModelSpec::truncated(family, LinearPredictor::new(lp).unwrap());
            group.bench_function(spec.label(), |b| {
                b.iter(|| data.fit(black_box(spec)).unwrap())
            });
        }
    }
    group.finish();
    c.bench_function("fit_zt_from_dataset", |b| {
        let spec = ModelSpec::truncated(Family::Poisson, LinearPredictor::INTERCEPT);
        b.iter(|| fit_zt(black_box(&ds), spec).unwrap())
    });
}

fn grids(c: &mut Criterion) {
    let ds = imputed();
    c.bench_function("full_grid", |b| {
        b.iter(|| fit_grid(black_box(&ds), &ModelSpec::full_grid()).unwrap())
    });
}

criterion_group!(benches, single_fits, grids);
criterion_main!(benches);
