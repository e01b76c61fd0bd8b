use std::collections::{HashMap, VecDeque};

use rayon::prelude::*;

use super::ClusterEvent;
use crate::detector::{DetectorLayout, ToTCalibration, LOGICAL_SIZE};
use crate::error::Result;
use crate::hit::{RawHit, TOA_QUANTUM_NS};

/// Clusters of one hit stream together with the hit-to-cluster assignment.
#[derive(Debug, Clone, Default)]
pub struct Clustering {
    /// Events ordered by time of arrival.
    pub events: Vec<ClusterEvent>,
    /// For each input hit, the index of its event, or `None` when the
    /// cluster carried no calibrated energy and was dropped.
    pub labels: Vec<Option<u32>>,
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi as usize] = lo;
        }
    }
}

fn window_ticks(window_ns: f64) -> u64 {
    (window_ns / TOA_QUANTUM_NS + 1e-9).floor().max(0.0) as u64
}

fn pixel_key(col: u16, row: u16) -> u32 {
    row as u32 * LOGICAL_SIZE as u32 + col as u32
}

/// Connected components of time-ordered hits: two hits are linked when
/// their pixels touch (8-connectivity, same pixel included) and their
/// arrival times differ by at most `window_ns`. Returns the root of each hit.
pub fn connected_components(hits: &[RawHit], window_ns: f64) -> Vec<u32> {
    let w = window_ticks(window_ns);
    let mut sets = DisjointSet::new(hits.len());
    let mut by_pixel: HashMap<u32, VecDeque<u32>> = HashMap::new();
    let mut active: VecDeque<u32> = VecDeque::new();
    for (i, h) in hits.iter().enumerate() {
        let t = h.toa_ticks;
        while let Some(&j) = active.front() {
            let old = &hits[j as usize];
            if old.toa_ticks + w >= t {
                break;
            }
            active.pop_front();
            let key = pixel_key(old.col, old.row);
            if let Some(list) = by_pixel.get_mut(&key) {
                list.pop_front();
                if list.is_empty() {
                    by_pixel.remove(&key);
                }
            }
        }
        for dr in -1i32..=1 {
            for dc in -1i32..=1 {
                let (c, r) = (h.col as i32 + dc, h.row as i32 + dr);
                if c < 0 || r < 0 || c >= LOGICAL_SIZE as i32 || r >= LOGICAL_SIZE as i32 {
                    continue;
                }
                if let Some(list) = by_pixel.get(&pixel_key(c as u16, r as u16)) {
                    for &j in list {
                        debug_assert!(hits[j as usize].toa_ticks + w >= t);
                        sets.union(i as u32, j);
                    }
                }
            }
        }
        by_pixel
            .entry(pixel_key(h.col, h.row))
            .or_default()
            .push_back(i as u32);
        active.push_back(i as u32);
    }
    (0..hits.len() as u32).map(|i| sets.find(i)).collect()
}

/// Index ranges of the stream separated by gaps longer than the window;
/// no cluster can straddle such a gap. Ranges are merged up to roughly
/// `target` hits each.
fn independent_ranges(
    hits: &[RawHit],
    window_ns: f64,
    target: usize,
) -> Vec<std::ops::Range<usize>> {
    let w = window_ticks(window_ns);
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..hits.len() {
        if i - start >= target && hits[i].toa_ticks > hits[i - 1].toa_ticks + w {
            out.push(start..i);
            start = i;
        }
    }
    if start < hits.len() {
        out.push(start..hits.len());
    }
    out
}

fn summarize(
    members: &mut [RawHit],
    layout: &DetectorLayout,
    calib: &ToTCalibration,
) -> Result<ClusterEvent> {
    // Member order is fixed before any floating-point sum.
    members.sort_unstable();
    let mut energy = 0.0;
    let (mut wx, mut wy, mut wsum) = (0.0, 0.0, 0.0);
    let mut tot_sum = 0u64;
    let mut within_cutoff = true;
    let mut lead = members[0];
    for h in members.iter() {
        let pixel = calib.pixel(h.col, h.row)?;
        energy += pixel.energy(h.tot_ns as f64);
        within_cutoff &= (h.tot_ns as f64) <= pixel.cutoff_ns;
        let w = h.tot_ns as f64;
        wx += w * layout.axis_center(h.col);
        wy += w * layout.axis_center(h.row);
        wsum += w;
        tot_sum += h.tot_ns as u64;
        if h.tot_ns > lead.tot_ns {
            lead = *h;
        }
    }
    Ok(ClusterEvent {
        arm: layout.arm_of_chip(lead.chip),
        x_mm: wx / wsum,
        y_mm: wy / wsum,
        energy_kev: energy,
        toa_ns: members[0].toa_ns(),
        n_pixels: members.len(),
        tot_sum_ns: tot_sum,
        within_cutoff,
    })
}

/// Cluster a time-ordered hit stream, keeping the hit assignment.
///
/// The stream is cut at time gaps wider than the window and the pieces are
/// labelled in parallel; the result does not depend on the number of threads
/// or on the order of hits sharing a timestamp.
pub fn cluster_labeled(
    hits: &[RawHit],
    layout: &DetectorLayout,
    calib: &ToTCalibration,
    window_ns: f64,
) -> Result<Clustering> {
    let target = (hits.len() / (4 * rayon::current_num_threads()).max(1)).max(4096);
    let ranges = independent_ranges(hits, window_ns, target);
    let groups: Vec<Vec<Vec<u32>>> = ranges
        .into_par_iter()
        .map(|range| {
            let offset = range.start as u32;
            let roots = connected_components(&hits[range], window_ns);
            let mut index_of_root: HashMap<u32, usize> = HashMap::new();
            let mut groups: Vec<Vec<u32>> = Vec::new();
            for (i, root) in roots.into_iter().enumerate() {
                let k = *index_of_root.entry(root).or_insert_with(|| {
                    groups.push(Vec::new());
                    groups.len() - 1
                });
                groups[k].push(offset + i as u32);
            }
            groups
        })
        .collect();
    let groups: Vec<Vec<u32>> = groups.into_iter().flatten().collect();

    let mut summarized: Vec<(ClusterEvent, RawHit, usize)> = groups
        .par_iter()
        .enumerate()
        .map(|(g, idx)| {
            let mut members: Vec<RawHit> = idx.iter().map(|&i| hits[i as usize]).collect();
            let ev = summarize(&mut members, layout, calib)?;
            Ok((ev, members[0], g))
        })
        .collect::<Result<_>>()?;
    summarized.retain(|(ev, _, _)| ev.energy_kev > 0.0);
    summarized.sort_unstable_by(|a, b| a.1.cmp(&b.1).then(a.0.x_mm.total_cmp(&b.0.x_mm)));

    let mut labels = vec![None; hits.len()];
    let mut events = Vec::with_capacity(summarized.len());
    for (k, (ev, _, g)) in summarized.into_iter().enumerate() {
        for &i in &groups[g] {
            labels[i as usize] = Some(k as u32);
        }
        events.push(ev);
    }
    Ok(Clustering { events, labels })
}

pub fn cluster(
    hits: &[RawHit],
    layout: &DetectorLayout,
    calib: &ToTCalibration,
    window_ns: f64,
) -> Result<Vec<ClusterEvent>> {
    Ok(cluster_labeled(hits, layout, calib, window_ns)?.events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::Arm;
    use proptest::prelude::*;

    fn setup() -> (DetectorLayout, ToTCalibration) {
        (
            DetectorLayout::new(0.055),
            ToTCalibration::uniform(50.0, 50.0, 2.0),
        )
    }

    fn hit(t: u64, col: u16, row: u16, tot: u32) -> RawHit {
        RawHit {
            toa_ticks: t,
            chip: DetectorLayout::chip_of(col, row),
            col,
            row,
            tot_ns: tot,
        }
    }

    #[test]
    fn isolated_hit() {
        let (l, c) = setup();
        let ev = cluster(&[hit(64, 10, 300, 425)], &l, &c, 100.0).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].n_pixels, 1);
        assert_eq!(ev[0].x_mm, l.axis_center(10));
        assert_eq!(ev[0].y_mm, l.axis_center(300));
        assert_eq!(ev[0].toa_ns, 100.0);
        assert_eq!(ev[0].arm, Arm::Signal);
        assert!((ev[0].energy_kev - 7.5).abs() < 1e-12);
    }

    #[test]
    fn equal_tot_neighbours_meet_halfway() {
        let (l, c) = setup();
        let ev = cluster(&[hit(0, 10, 10, 300), hit(3, 11, 11, 300)], &l, &c, 100.0).unwrap();
        assert_eq!(ev.len(), 1);
        assert!((ev[0].x_mm - (l.axis_center(10) + l.axis_center(11)) / 2.0).abs() < 1e-12);
        assert!((ev[0].y_mm - (l.axis_center(10) + l.axis_center(11)) / 2.0).abs() < 1e-12);
        assert_eq!(ev[0].toa_ns, 0.0);
        assert_eq!(ev[0].energy_kev, 10.0);
    }

    #[test]
    fn separation_rules() {
        let (l, c) = setup();
        // Two pixels apart in space.
        assert_eq!(
            cluster(&[hit(0, 10, 10, 300), hit(0, 12, 10, 300)], &l, &c, 100.0)
                .unwrap()
                .len(),
            2
        );
        // Adjacent but 64 ticks = 100 ns apart: linked; 65 ticks: not.
        assert_eq!(
            cluster(&[hit(0, 10, 10, 300), hit(64, 11, 10, 300)], &l, &c, 100.0)
                .unwrap()
                .len(),
            1
        );
        assert_eq!(
            cluster(&[hit(0, 10, 10, 300), hit(65, 11, 10, 300)], &l, &c, 100.0)
                .unwrap()
                .len(),
            2
        );
        // Chained transitively across the window.
        let chain = [
            hit(0, 10, 10, 300),
            hit(60, 11, 10, 300),
            hit(120, 12, 10, 300),
        ];
        assert_eq!(cluster(&chain, &l, &c, 100.0).unwrap().len(), 1);
    }

    #[test]
    fn energy_is_sum_of_members() {
        let (l, c) = setup();
        let hits = [
            hit(0, 100, 100, 175),
            hit(1, 101, 100, 225),
            hit(2, 100, 101, 125),
        ];
        let ev = cluster(&hits, &l, &c, 100.0).unwrap();
        let expected: f64 = hits
            .iter()
            .map(|h| c.tot_to_energy(h.tot_ns as f64, h.col, h.row).unwrap())
            .sum();
        assert_eq!(ev[0].energy_kev, expected);
        assert_eq!(ev[0].tot_sum_ns, 525);
    }

    #[test]
    fn arm_follows_leading_pixel() {
        let (l, c) = setup();
        // Straddles the idler/signal boundary; the brighter pixel is on the signal side.
        let ev = cluster(&[hit(0, 40, 255, 200), hit(0, 40, 256, 400)], &l, &c, 100.0).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].arm, Arm::Signal);
    }

    #[test]
    fn zero_energy_clusters_dropped() {
        let (l, c) = setup();
        let cl = cluster_labeled(&[hit(0, 1, 1, 25), hit(500, 5, 5, 425)], &l, &c, 100.0).unwrap();
        assert_eq!(cl.events.len(), 1);
        assert_eq!(cl.labels, vec![None, Some(0)]);
    }

    #[test]
    fn ranges_split_only_at_gaps() {
        let hits: Vec<RawHit> = (0..100)
            .map(|i| hit(i * 10 + (i / 10) * 1000, 1, 1, 100))
            .collect();
        let r = independent_ranges(&hits, 100.0, 1);
        assert_eq!(r.len(), 10);
        assert!(r.iter().all(|r| r.len() == 10));
    }

    fn arb_hits() -> impl Strategy<Value = Vec<RawHit>> {
        prop::collection::vec((0u64..400, 0u16..12, 250u16..262, 1u32..20), 1..120).prop_map(|v| {
            let mut hits: Vec<RawHit> = v
                .into_iter()
                .map(|(t, c, r, q)| hit(t / 20 * 20, c + 250, r, q * 25 + 100))
                .collect();
            hits.sort_by_key(|h| h.toa_ticks);
            hits
        })
    }

    proptest! {
        #[test]
        fn equal_time_permutations_agree(hits in arb_hits(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let (l, c) = setup();
            let base = cluster(&hits, &l, &c, 100.0).unwrap();
            let mut shuffled = hits.clone();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            // Shuffle within runs of equal timestamps only.
            let mut start = 0;
            while start < shuffled.len() {
                let t = shuffled[start].toa_ticks;
                let end = start + shuffled[start..].iter().take_while(|h| h.toa_ticks == t).count();
                shuffled[start..end].shuffle(&mut rng);
                start = end;
            }
            prop_assert_eq!(base, cluster(&shuffled, &l, &c, 100.0).unwrap());
        }

        #[test]
        fn labels_cover_members(hits in arb_hits()) {
            let (l, c) = setup();
            let cl = cluster_labeled(&hits, &l, &c, 100.0).unwrap();
            for (k, ev) in cl.events.iter().enumerate() {
                let n = cl.labels.iter().filter(|x| **x == Some(k as u32)).count();
                prop_assert_eq!(n, ev.n_pixels);
            }
        }
    }
}
