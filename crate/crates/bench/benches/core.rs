use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fedspike_bench::{session, spiked_data, symmetric};
use fedspike_core::protocol::InProcessTransport;
use fedspike_core::{run_federated_session, sample_covariance, svd_r, sym_eig, SessionOptions};
use std::hint::black_box;

fn eigen(c: &mut Criterion) {
    let mut group = c.benchmark_group("sym_eig");
    for p in [20, 50, 251] {
        let m = symmetric(p, 7);
        group.bench_with_input(BenchmarkId::from_parameter(p), &m, |b, m| b.iter(|| sym_eig(black_box(m)).unwrap()));
    }
    group.finish();
    let m = symmetric(50, 8);
    c.bench_function("svd_r/p50_r5", |b| b.iter(|| svd_r(black_box(&m), 5).unwrap()));
}

fn covariance(c: &mut Criterion) {
    let mut group = c.benchmark_group("sample_covariance");
    for n in [1_000, 10_000] {
        let (_, data) = spiked_data(50, 1, n, 3);
        group.bench_with_input(BenchmarkId::from_parameter(n), &data, |b, d| b.iter(|| sample_covariance(black_box(d))));
    }
    group.finish();
}

fn federated(c: &mut Criterion) {
    let (clients, server) = session(50, 1, 10, 1000);
    c.bench_function("session/p50_m10_n1000", |b| {
        b.iter(|| run_federated_session(&clients, &server, &InProcessTransport::new(), &SessionOptions::default()).unwrap())
    });
}

criterion_group!(benches, eigen, covariance, federated);
criterion_main!(benches);
