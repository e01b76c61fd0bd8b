use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use spdcforge_bench::simulated_run;
use spdcforge_core::pipeline::{cluster, connected_components};

fn bench_clustering(c: &mut Criterion) {
    let mut group = c.benchmark_group("clustering");
    group.sample_size(10);
    for hours in [0.5, 2.0] {
        let (sim, out) = simulated_run(hours, 10.0);
        group.throughput(Throughput::Elements(out.hits.len() as u64));
        group.bench_with_input(
            BenchmarkId::new("components", hours),
            &out.hits,
            |b, hits| b.iter(|| connected_components(hits, 100.0)),
        );
        group.bench_with_input(BenchmarkId::new("events", hours), &out.hits, |b, hits| {
            b.iter(|| cluster(hits, &sim.layout, &sim.calib, 100.0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_clustering);
criterion_main!(benches);
