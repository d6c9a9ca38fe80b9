use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use dipw::estimators::{fit, ModelKind};
use dipw::eval::uplift_curve;
use dipw::forest::fit_forest;
use dipw::lasso::{cv_lasso, PenaltySpec};
use dipw::sim::{generate, DgpSpec};
use dipw::transform::ipw_transform;
use dipw::{EstimatorConfig, ForestSpec};

fn sample(n: usize) -> dipw::SimulatedSample {
    let spec = DgpSpec {
        n_train: n,
        n_test: 10_000,
        seed: 3,
        ..DgpSpec::default()
    };
    generate(&spec).unwrap().0
}

fn lasso(c: &mut Criterion) {
    let s = sample(1000);
    let raw = ipw_transform(&s.dataset).raw;
    let mask = vec![true; s.dataset.p()];
    c.bench_function("cv_lasso n=1000 p=50", |b| {
        b.iter(|| cv_lasso(s.dataset.x(), &raw, &mask, &PenaltySpec::default(), 1).unwrap())
    });
}

fn forest(c: &mut Criterion) {
    let s = sample(800);
    let spec = ForestSpec::default();
    let mut g = c.benchmark_group("forest");
    g.sample_size(10);
    g.bench_function("fit 100 trees n=800 p=50", |b| {
        b.iter(|| fit_forest(s.dataset.x(), s.dataset.y(), &spec).unwrap())
    });
    g.finish();
}

fn estimators(c: &mut Criterion) {
    let s = sample(1000);
    let cfg = EstimatorConfig::default();
    let mut g = c.benchmark_group("fit n=1000");
    g.sample_size(10);
    for kind in [ModelKind::Ipw, ModelKind::DipwAlgo1, ModelKind::TLearner] {
        g.bench_function(kind.name(), |b| b.iter(|| fit(kind, &s.dataset, &cfg).unwrap()));
    }
    g.finish();
}

fn uplift(c: &mut Criterion) {
    let s = sample(100_000);
    let d = &s.dataset;
    c.bench_function("uplift_curve n=100000", |b| {
        b.iter_batched(
            || s.tau_true().to_vec(),
            |scores| uplift_curve(&scores, d.y(), d.t()).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(benches, lasso, forest, estimators, uplift);
criterion_main!(benches);
