use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ergocert::par::Execution;
use ergocert::paramalg::MultiPoly;
use ergocert::parse::parse_network;
use ergocert::positivity::{search_counterexample_on_box, ParamBox, SearchConfig};
use ergocert::ssa::stationary_mean;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn ssa(c: &mut Criterion) {
    let n = parse_network(
        "species: M, P
param k1 = 10
param k2 = 2
param g1 = 1
param g2 = 0.5
reaction: 0 -> M @ k1
reaction: M -> M + P @ k2
reaction: M -> 0 @ g1
reaction: P -> 0 @ g2
",
    )
    .unwrap();
    let mut group = c.benchmark_group("stationary_mean");
    group.sample_size(10);
    for (label, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(label, "64 runs"), &exec, |b, &exec| {
            b.iter(|| stationary_mean(black_box(&n), &[0, 0], 100.0, 0.5, 64, 1, exec).unwrap())
        });
    }
    group.finish();
}

fn search(c: &mut Criterion) {
    // (x - 1)² + (y - 2)² + 0.01, positive everywhere, so every start runs to completion
    let vars = vec!["x".to_string(), "y".to_string()];
    let p = MultiPoly::from_terms(
        &vars,
        [
            (vec![2, 0], 1.0),
            (vec![1, 0], -2.0),
            (vec![0, 2], 1.0),
            (vec![0, 1], -4.0),
            (vec![0, 0], 5.01),
        ],
    );
    let domain: ParamBox = BTreeMap::from([("x".to_string(), (0.0, 4.0)), ("y".to_string(), (0.0, 4.0))]);
    let mut group = c.benchmark_group("counterexample_search");
    for (label, exec) in MODES {
        let cfg = SearchConfig { starts: 2048, execution: exec, ..SearchConfig::default() };
        group.bench_with_input(BenchmarkId::new(label, "2048 starts"), &cfg, |b, cfg| {
            b.iter(|| search_counterexample_on_box(black_box(&p), &domain, cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, ssa, search);
criterion_main!(benches);
