use spdcforge_core::hit::write_events;
use spdcforge_core::pipeline::{cluster_labeled, read_events, RawHit};
use spdcforge_core::simulator::{HitSource, SimulationConfig, SimulationOutput, Simulator};

fn simulate(f: impl FnOnce(&mut SimulationConfig)) -> (Simulator, SimulationOutput) {
    let mut cfg = SimulationConfig {
        seed: 11,
        ..SimulationConfig::default()
    };
    f(&mut cfg);
    let sim = Simulator::new(cfg).unwrap();
    let out = sim.run().unwrap();
    (sim, out)
}

/// Hits and sources with masked pixels removed, keeping them aligned.
fn unmasked(sim: &Simulator, out: &SimulationOutput) -> (Vec<RawHit>, Vec<HitSource>) {
    out.hits
        .iter()
        .zip(&out.sources)
        .filter(|(h, _)| !sim.layout.is_masked(h.col, h.row))
        .map(|(h, s)| (*h, *s))
        .unzip()
}

#[test]
fn event_file_round_trip() {
    let (_, out) = simulate(|c| {
        c.duration_hours = 6.0;
        c.background_ratio = 12.0;
    });
    assert!(out.hits.len() >= 1_000_000, "{} hits", out.hits.len());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.csv");
    write_events(std::fs::File::create(&path).unwrap(), &out.hits, None).unwrap();
    let back = read_events(&path, 16).unwrap();
    assert_eq!(back.len(), out.hits.len());
    assert_eq!(back, out.hits);
}

#[test]
fn charge_shared_photons_form_single_clusters() {
    let (sim, out) = simulate(|c| {
        c.duration_hours = 1.0;
        c.background_ratio = 0.0;
    });
    let (hits, sources) = unmasked(&sim, &out);
    let cl = cluster_labeled(&hits, &sim.layout, &sim.calib, 100.0).unwrap();

    let mut per_photon: std::collections::HashMap<(u64, u8), Vec<Option<u32>>> = Default::default();
    for (s, label) in sources.iter().zip(&cl.labels) {
        if let HitSource::Pair { pair_id, photon } = *s {
            per_photon
                .entry((pair_id, photon))
                .or_default()
                .push(*label);
        }
    }
    let multi: Vec<_> = per_photon.values().filter(|v| v.len() > 1).collect();
    assert!(multi.len() > 500, "{} multi-pixel photons", multi.len());
    let whole = multi
        .iter()
        .filter(|v| v[0].is_some() && v.iter().all(|l| *l == v[0]))
        .count();
    let frac = whole as f64 / multi.len() as f64;
    assert!(frac >= 0.99, "single-cluster fraction {frac}");

    // Centroid accuracy for clusters made of exactly one photon's hits.
    let mut owners: Vec<Option<(u64, u8)>> = vec![None; cl.events.len()];
    let mut mixed = vec![false; cl.events.len()];
    for (s, label) in sources.iter().zip(&cl.labels) {
        let (Some(k), HitSource::Pair { pair_id, photon }) = (label, *s) else {
            continue;
        };
        let k = *k as usize;
        match owners[k] {
            None => owners[k] = Some((pair_id, photon)),
            Some(o) if o != (pair_id, photon) => mixed[k] = true,
            _ => {}
        }
    }
    let mut sq = 0.0;
    let mut n = 0usize;
    for (k, owner) in owners.iter().enumerate() {
        let Some((pair_id, photon)) = owner else {
            continue;
        };
        if mixed[k] {
            continue;
        }
        let p = out.truths[*pair_id as usize].photons[*photon as usize];
        let ev = &cl.events[k];
        sq += (ev.x_mm - p.x_mm).powi(2) + (ev.y_mm - p.y_mm).powi(2);
        n += 1;
    }
    let rms = (sq / n as f64).sqrt();
    assert!(rms <= 0.055, "centroid rms {rms} mm over {n} clusters");
}
