use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use tergm_core::degeneracy::{entropy_bruteforce, entropy_edgecount_ds, InitialDistribution};
use tergm_core::estimator::{fit_exact, fit_sampled, FitConfig};
use tergm_core::model::SeriesDesign;
use tergm_core::sampler::{
    sample_initial, sample_transition, simulate_chain, InitialLaw, SamplerConfig,
};
use tergm_core::{NetworkSeries, ParameterVector, StatisticSet, TransitionModel};

fn series(n: usize, len: usize) -> (StatisticSet, NetworkSeries) {
    let stats = StatisticSet::parse("D,S,R,T").unwrap();
    let model = TransitionModel::new(
        stats.clone(),
        ParameterVector(vec![-20.0, 3.0, 2.0, 1.0]),
        None,
    )
    .unwrap();
    let cfg = SamplerConfig::with_seed(1);
    let first = sample_initial(&stats, &[], n, None, &cfg, InitialLaw::Bernoulli(0.1)).unwrap();
    (stats, simulate_chain(&model, &first, len, &cfg).unwrap())
}

fn change_scores(c: &mut Criterion) {
    let mut group = c.benchmark_group("change_scores");
    for n in [25, 50, 100] {
        let (stats, s) = series(n, 2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &s, |b, s| {
            b.iter(|| {
                stats
                    .change_scores(black_box(&s.networks()[0]), None)
                    .unwrap()
            })
        });
    }
    group.finish();
}

fn likelihood(c: &mut Criterion) {
    let (stats, s) = series(100, 12);
    let design = SeriesDesign::new(&stats, &s, None).unwrap();
    let theta = [-20.0, 3.0, 2.0, 1.0];
    c.bench_function("log_likelihood_gradient_hessian/n100_T12", |b| {
        b.iter(|| design.evaluate(black_box(&theta)))
    });
}

fn fitting(c: &mut Criterion) {
    let (stats, s) = series(50, 8);
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    group.bench_function("exact/n50_T8", |b| {
        b.iter(|| fit_exact(&stats, &s, &FitConfig::default()).unwrap())
    });
    group.bench_function("sampled/n50_T8", |b| {
        b.iter(|| fit_sampled(&stats, &s, &FitConfig::default()).unwrap())
    });
    group.finish();
}

fn sampling(c: &mut Criterion) {
    let (stats, s) = series(50, 2);
    let factorized =
        TransitionModel::new(stats, ParameterVector(vec![-20.0, 3.0, 2.0, 1.0]), None).unwrap();
    let cfg = SamplerConfig {
        samples: 100,
        ..SamplerConfig::with_seed(3)
    };
    c.bench_function("sample_transition/exact_n50_B100", |b| {
        b.iter(|| sample_transition(&factorized, black_box(&s.networks()[0]), &cfg).unwrap())
    });
}

fn entropy(c: &mut Criterion) {
    let stats = StatisticSet::parse("D,S").unwrap();
    let model = TransitionModel::new(stats, ParameterVector(vec![1.0, 2.0]), None).unwrap();
    let mut group = c.benchmark_group("entropy");
    group.sample_size(10);
    group.bench_function("bruteforce/n4", |b| {
        b.iter(|| entropy_bruteforce(&model, &InitialDistribution::Bernoulli(0.25), 4).unwrap())
    });
    group.bench_function("edgecount/n7", |b| {
        b.iter(|| entropy_edgecount_ds(black_box(1.0), 2.0, 7, 0.25).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    change_scores,
    likelihood,
    fitting,
    sampling,
    entropy
);
criterion_main!(benches);
