use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use demm::engine::{run_gemm_with, DemmConfig};
use demm::experiment::{Experiment, Job};
use demm::functional::{dense_matmul_with, rowwise_sparse_matmul_with};
use demm::sparse::{random_dense, random_sparse, unpack, SparsityPattern};
use demm::workloads::{load_layer_file, WeightMode};
use demm::Execution;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn oracles(c: &mut Criterion) {
    let p = SparsityPattern::new(8, 128).unwrap();
    let a = random_sparse(256, 1024, p, 1).unwrap();
    let dense_a = unpack(&a);
    let b = random_dense(1024, 256, 2);
    let mut g = c.benchmark_group("oracle");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new("dense_matmul", name), &exec, |bch, &e| {
            bch.iter(|| dense_matmul_with(black_box(&dense_a), black_box(&b), e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("rowwise_sparse", name), &exec, |bch, &e| {
            bch.iter(|| rowwise_sparse_matmul_with(black_box(&a), black_box(&b), e).unwrap())
        });
    }
    g.finish();
}

fn engine(c: &mut Criterion) {
    let p = SparsityPattern::new(8, 128).unwrap();
    let a = random_sparse(256, 512, p, 3).unwrap();
    let b = random_dense(512, 512, 4);
    let cfg = DemmConfig::new(8, 128, 64, 8).unwrap();
    let mut g = c.benchmark_group("run_gemm");
    g.sample_size(20);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |bch, &e| {
            bch.iter(|| run_gemm_with(black_box(&a), black_box(&b), cfg, e, false).unwrap())
        });
    }
    g.finish();
}

fn layer_sweep(c: &mut Criterion) {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/resnet50.json");
    let jobs: Vec<Job> = load_layer_file(path.as_ref())
        .unwrap()
        .into_iter()
        .map(Job::Layer)
        .collect();
    let mut g = c.benchmark_group("resnet50_timing");
    g.sample_size(10);
    for (name, exec) in MODES {
        let exp = Experiment {
            engines: vec![DemmConfig::new(8, 128, 64, 8).unwrap()],
            baselines: vec!["dense-ws:32x16".parse().unwrap()],
            weights: WeightMode::Pattern(SparsityPattern::new(8, 128).unwrap()),
            seed: 0,
            verify: false,
            trace: false,
            exec,
        };
        g.bench_function(name, |bch| bch.iter(|| exp.run(black_box(&jobs)).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, oracles, engine, layer_sweep);
criterion_main!(benches);
