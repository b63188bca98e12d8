use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use tinyscale::gpr::{fit_hyperparameters, GprModel, MeanFunction};
use tinyscale::pareto::{nondominated_sort, select_frontier};
use tinyscale::search::{sample_band, SamplingConfig};
use tinyscale::{ArchitectureSpec, CostModel, ScalingCoefficients};
use tinyscale_bench::{demo_formula, demo_frontier, labelled_records, SEED};

fn cost(c: &mut Criterion) {
    let model = CostModel::new(ArchitectureSpec::efficientnet_b0()).unwrap();
    let coeffs = ScalingCoefficients::new(0.86, 0.8, 0.89).unwrap();
    c.bench_function("cost/efficientnet-b0", |b| {
        b.iter(|| model.evaluate(black_box(coeffs)).unwrap())
    });
    let ghost = CostModel::new(ArchitectureSpec::ghostnet_a()).unwrap();
    c.bench_function("cost/ghostnet-a", |b| {
        b.iter(|| ghost.evaluate(black_box(ScalingCoefficients::IDENTITY)).unwrap())
    });
}

fn sampling(c: &mut Criterion) {
    let spec = ArchitectureSpec::efficientnet_b0();
    let cfg = SamplingConfig {
        seed: SEED,
        ..SamplingConfig::default()
    };
    c.bench_function("sample/band-100", |b| {
        b.iter(|| sample_band(&spec, black_box(&cfg)).unwrap())
    });
}

fn pareto(c: &mut Criterion) {
    let population = labelled_records(1000);
    c.bench_function("pareto/sort-1000", |b| {
        b.iter(|| nondominated_sort(black_box(&population)).unwrap())
    });
    c.bench_function("pareto/select-1000", |b| {
        b.iter(|| select_frontier(black_box(&population), 0.2).unwrap())
    });
}

fn gpr(c: &mut Criterion) {
    let frontier = demo_frontier();
    let pairs: Vec<(f64, f64)> = frontier.iter().map(|r| (r.realized_ratio, r.coeffs.r)).collect();
    c.bench_function("gpr/grid-search-20", |b| {
        b.iter(|| fit_hyperparameters(black_box(&pairs), MeanFunction::Zero).unwrap())
    });
    let hyper = fit_hyperparameters(&pairs, MeanFunction::Zero).unwrap();
    c.bench_function("gpr/fit-20", |b| {
        b.iter(|| GprModel::fit(black_box(&pairs), hyper.kernel, hyper.noise_variance).unwrap())
    });
    let model = GprModel::fit(&pairs, hyper.kernel, hyper.noise_variance).unwrap();
    c.bench_function("gpr/predict", |b| b.iter(|| model.predict(black_box(0.25)).unwrap()));
}

fn solve(c: &mut Criterion) {
    let formula = demo_formula();
    let model = CostModel::new(ArchitectureSpec::efficientnet_b0()).unwrap();
    c.bench_function("formula/solve", |b| b.iter(|| formula.solve(black_box(0.25)).unwrap()));
    c.bench_function("formula/solve-resolved", |b| {
        b.iter_batched(
            || 0.06,
            |budget| formula.solve_with(&model, budget).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, cost, sampling, pareto, gpr, solve);
criterion_main!(benches);
