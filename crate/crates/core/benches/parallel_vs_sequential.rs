//! Rayon pool against a single worker on the hot fan-out points.
//!
//! `cargo bench -p mirror-fdr --bench parallel_vs_sequential`

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mirror_fdr::bench::{run_bench, Method, Regime, Scenario};
use mirror_fdr::datagen::{sample_coefficients, sample_design, sample_response};
use mirror_fdr::datagen::{CovarianceSpec, DesignScale, SignalMode, SignalSpec};
use mirror_fdr::estimators::{fit_mle, node_wise_precision, theory_lambda, MleOptions, NodewiseOptions};
use mirror_fdr::mirror::{mds, BaseSelector, MdsOptions};
use mirror_fdr::par::{map_indexed, map_indexed_seq};
use mirror_fdr::rng::substream;
use mirror_fdr::{Dataset, GlmFamily, MirrorConfig};
use nalgebra::DMatrix;
use std::hint::black_box;

fn logistic(n: usize, p: usize, seed: u64) -> Dataset {
    let mut rng = substream(seed, 0);
    let sigma = DMatrix::identity(p, p);
    let x = sample_design(n, &sigma, DesignScale::Unit, &mut rng).unwrap();
    let spec = SignalSpec { p1: p / 4, mode: SignalMode::Fixed { magnitude: 0.5 } };
    let (beta, _) = sample_coefficients(p, n, &spec, &mut rng).unwrap();
    let y = sample_response(&x, &beta, GlmFamily::Logistic, &mut rng).unwrap();
    Dataset::new(x, y, GlmFamily::Logistic).unwrap()
}

fn single_pool() -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()
}

fn map_helpers(c: &mut Criterion) {
    let data = logistic(300, 20, 1);
    let rows: Vec<Vec<usize>> = (0..16).map(|k| (0..300).filter(|i| i % 16 != k).collect()).collect();
    let fit = |k: usize| fit_mle(&data.rows(&rows[k]), &MleOptions::default()).unwrap().beta_hat[0];
    let mut g = c.benchmark_group("map_indexed/16 MLE fits");
    g.bench_function("parallel", |b| b.iter(|| black_box(map_indexed(16, fit))));
    g.bench_function("sequential", |b| b.iter(|| black_box(map_indexed_seq(16, fit))));
    g.finish();
}

fn nodewise(c: &mut Criterion) {
    let single = single_pool();
    let mut g = c.benchmark_group("node_wise_precision");
    g.sample_size(10);
    for p in [100, 300] {
        let x = sample_design(150, &DMatrix::identity(p, p), DesignScale::Unit, &mut substream(2, 0)).unwrap();
        let lams = vec![theory_lambda(1.0, 150, p); p];
        let opts = NodewiseOptions::default();
        g.bench_with_input(BenchmarkId::new("pool", p), &p, |b, _| {
            b.iter(|| node_wise_precision(&x, &lams, None, &opts).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("one_thread", p), &p, |b, _| {
            b.iter(|| single.install(|| node_wise_precision(&x, &lams, None, &opts).unwrap()))
        });
    }
    g.finish();
}

fn splits(c: &mut Criterion) {
    let single = single_pool();
    let data = logistic(400, 30, 3);
    let cfg = MirrorConfig::default();
    let opts = MdsOptions::default();
    let mut g = c.benchmark_group("mds/20 splits");
    g.sample_size(10);
    g.bench_function("pool", |b| b.iter(|| mds(&data, BaseSelector::DsModerate, 20, &cfg, &opts).unwrap()));
    g.bench_function("one_thread", |b| {
        b.iter(|| single.install(|| mds(&data, BaseSelector::DsModerate, 20, &cfg, &opts).unwrap()))
    });
    g.finish();
}

fn grid(c: &mut Criterion) {
    let single = single_pool();
    let signal = SignalSpec { p1: 10, mode: SignalMode::Fixed { magnitude: 6.5 } };
    let mut sc = Scenario::new(
        Regime::Moderate,
        300,
        30,
        GlmFamily::Logistic,
        CovarianceSpec::Toeplitz { r: 0.2 },
        signal,
        Method::Ds,
    );
    sc.reps = 8;
    let cells = vec![sc.clone(), Scenario { method: Method::Gm, ..sc }];
    let mut g = c.benchmark_group("run_bench/2 cells x 8 reps");
    g.sample_size(10);
    g.bench_function("pool", |b| b.iter(|| run_bench(&cells).unwrap()));
    g.bench_function("one_thread", |b| b.iter(|| single.install(|| run_bench(&cells).unwrap())));
    g.finish();
}

criterion_group!(benches, map_helpers, nodewise, splits, grid);
criterion_main!(benches);
