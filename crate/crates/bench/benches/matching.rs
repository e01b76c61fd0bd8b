use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use spdcforge_bench::clustered_run;
use spdcforge_core::coincidence::{analyze_events, match_pairs, PairFilterConfig};
use spdcforge_core::detector::Arm;
use spdcforge_core::pipeline::{ClusterEvent, Selection};

fn bench_matching(c: &mut Criterion) {
    let (sim, events) = clustered_run(4.0, 10.0);
    let arm =
        |a: Arm| -> Vec<ClusterEvent> { events.iter().filter(|e| e.arm == a).copied().collect() };
    let (signal, idler) = (arm(Arm::Signal), arm(Arm::Idler));

    let mut group = c.benchmark_group("matching");
    group.throughput(Throughput::Elements(events.len() as u64));
    group.bench_function("greedy", |b| b.iter(|| match_pairs(&signal, &idler, 200.0)));
    group.bench_function("analyze", |b| {
        b.iter(|| {
            analyze_events(
                &events,
                &sim.config.geometry,
                sim.ring_center_mm(),
                &Selection::default(),
                &PairFilterConfig::default(),
            )
            .unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, bench_matching);
criterion_main!(benches);
