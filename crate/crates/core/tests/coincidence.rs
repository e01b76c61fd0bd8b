use std::collections::HashMap;

use spdcforge_core::coincidence::{analyze_events, MatchedPair, PairFilterConfig};
use spdcforge_core::detector::{apply_hot_mask, Arm};
use spdcforge_core::pipeline::{cluster_labeled, ClusterEvent, RawHit, Selection};
use spdcforge_core::simulator::{
    event_origins, BiphotonTruth, HitSource, SimulationConfig, SimulationOutput, Simulator,
};

struct Run {
    sim: Simulator,
    out: SimulationOutput,
    events: Vec<ClusterEvent>,
    origins: Vec<Option<(u64, u8)>>,
}

fn run(f: impl FnOnce(&mut SimulationConfig)) -> Run {
    let mut cfg = SimulationConfig {
        seed: 23,
        ..SimulationConfig::default()
    };
    f(&mut cfg);
    let sim = Simulator::new(cfg).unwrap();
    let out = sim.run().unwrap();
    let (hits, sources): (Vec<RawHit>, Vec<HitSource>) = out
        .hits
        .iter()
        .zip(&out.sources)
        .filter(|(h, _)| !sim.layout.is_masked(h.col, h.row))
        .map(|(h, s)| (*h, *s))
        .unzip();
    assert_eq!(apply_hot_mask(out.hits.iter().copied(), &sim.layout), hits);
    let cl = cluster_labeled(&hits, &sim.layout, &sim.calib, 100.0).unwrap();
    let origins = event_origins(&sources, &cl);
    Run {
        sim,
        out,
        events: cl.events,
        origins,
    }
}

/// Index of each event by its time and position, to look up origins of
/// matched events.
fn origin_lookup(r: &Run) -> HashMap<(u64, u64, u64), Option<(u64, u8)>> {
    r.events
        .iter()
        .zip(&r.origins)
        .map(|(e, o)| ((e.toa_ns.to_bits(), e.x_mm.to_bits(), e.y_mm.to_bits()), *o))
        .collect()
}

fn key(e: &ClusterEvent) -> (u64, u64, u64) {
    (e.toa_ns.to_bits(), e.x_mm.to_bits(), e.y_mm.to_bits())
}

/// Truth pairs whose matched events trace back to both of their photons.
fn matched_truth(r: &Run, pairs: &[MatchedPair]) -> HashMap<u64, usize> {
    let lookup = origin_lookup(r);
    let mut found = HashMap::new();
    for (k, p) in pairs.iter().enumerate() {
        if let (Some(s), Some(i)) = (lookup[&key(&p.signal)], lookup[&key(&p.idler)]) {
            if s.0 == i.0 && s.1 != i.1 {
                found.insert(s.0, k);
            }
        }
    }
    found
}

#[test]
fn detected_truth_pairs_are_matched() {
    let r = run(|c| c.background_ratio = 0.0);
    let analysis = analyze_events(
        &r.events,
        &r.sim.config.geometry,
        r.sim.ring_center_mm(),
        &Selection::default(),
        &PairFilterConfig::default(),
    )
    .unwrap();
    // Both photons left hits, one on each arm.
    let detected = r.out.detected_photons();
    let expected: Vec<&BiphotonTruth> = r
        .out
        .truths
        .iter()
        .zip(&detected)
        .filter(|(t, d)| d[0] && d[1] && t.photons[0].arm != t.photons[1].arm)
        .map(|(t, _)| t)
        .collect();
    assert!(expected.len() > 2000, "{}", expected.len());

    let all = matched_truth(&r, &analysis.unselected.pairs);
    let found = expected
        .iter()
        .filter(|t| all.contains_key(&t.pair_id))
        .count();
    assert!(
        found as f64 >= 0.99 * expected.len() as f64,
        "{found}/{} matched",
        expected.len()
    );

    // Far enough inside the energy band that resolution cannot push them out.
    let central: Vec<&&BiphotonTruth> = expected
        .iter()
        .filter(|t| {
            t.photons
                .iter()
                .all(|p| (7.0..=8.0).contains(&p.energy_kev))
        })
        .collect();
    let selected = matched_truth(&r, &analysis.matching.pairs);
    let found = central
        .iter()
        .filter(|t| selected.contains_key(&t.pair_id))
        .count();
    assert!(
        found as f64 >= 0.99 * central.len() as f64,
        "{found}/{} central",
        central.len()
    );
    let passed = central
        .iter()
        .filter(|t| {
            selected
                .get(&t.pair_id)
                .is_some_and(|&k| analysis.candidates[k].passed)
        })
        .count();
    assert!(
        passed as f64 >= 0.95 * found as f64,
        "{passed}/{found} passed the filters"
    );
}

#[test]
fn filters_reject_most_accidentals() {
    // Dense enough that unrelated photons share coincidence windows.
    let r = run(|c| {
        c.pair_rate_per_hour = 1e8;
        c.duration_hours = 0.002;
        c.background_ratio = 1.0;
    });
    let analysis = analyze_events(
        &r.events,
        &r.sim.config.geometry,
        r.sim.ring_center_mm(),
        &Selection::default(),
        &PairFilterConfig::default(),
    )
    .unwrap();
    let lookup = origin_lookup(&r);
    let (mut true_pass, mut true_total, mut acc_pass, mut acc_total) = (0, 0, 0, 0);
    for c in &analysis.candidates {
        let s = lookup[&key(&c.signal)];
        let i = lookup[&key(&c.idler)];
        let genuine = matches!((s, i), (Some(a), Some(b)) if a.0 == b.0);
        if genuine {
            true_total += 1;
            true_pass += usize::from(c.passed);
        } else {
            acc_total += 1;
            acc_pass += usize::from(c.passed);
        }
    }
    assert!(acc_total > 100, "{acc_total} accidentals");
    let true_rate = true_pass as f64 / true_total as f64;
    let acc_rate = acc_pass as f64 / acc_total as f64;
    assert!(true_rate > 0.9, "{true_rate}");
    assert!(acc_rate < 0.1, "{acc_rate}");
    // Arms are respected by the split.
    assert!(analysis
        .matching
        .pairs
        .iter()
        .all(|p| p.signal.arm == Arm::Signal && p.idler.arm == Arm::Idler));
    assert!(analysis.unselected.pairs.len() >= analysis.matching.pairs.len());
}
