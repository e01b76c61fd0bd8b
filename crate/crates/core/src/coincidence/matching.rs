use crate::pipeline::ClusterEvent;

/// A signal and idler event paired by arrival time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPair {
    pub signal: ClusterEvent,
    pub idler: ClusterEvent,
    /// Signal minus idler arrival time (ns).
    pub dt_ns: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Matching {
    pub pairs: Vec<MatchedPair>,
    pub signal_singles: Vec<ClusterEvent>,
    pub idler_singles: Vec<ClusterEvent>,
}

/// Greedy one-to-one matching in signal time order: each signal event takes
/// the nearest unconsumed idler within `±window_ns`; on equal distance the
/// earlier idler wins. Inputs must be time-ordered.
pub fn match_pairs(signal: &[ClusterEvent], idler: &[ClusterEvent], window_ns: f64) -> Matching {
    let mut used = vec![false; idler.len()];
    let mut out = Matching::default();
    let mut lo = 0usize;
    for s in signal {
        while lo < idler.len() && idler[lo].toa_ns < s.toa_ns - window_ns {
            lo += 1;
        }
        let mut best: Option<(usize, f64)> = None;
        for (j, i) in idler.iter().enumerate().skip(lo) {
            let d = i.toa_ns - s.toa_ns;
            if d > window_ns {
                break;
            }
            if used[j] {
                continue;
            }
            // Strict comparison keeps the earlier idler on ties.
            if best.is_none_or(|(_, b)| d.abs() < b) {
                best = Some((j, d.abs()));
            }
        }
        match best {
            Some((j, _)) => {
                used[j] = true;
                out.pairs.push(MatchedPair {
                    signal: *s,
                    idler: idler[j],
                    dt_ns: s.toa_ns - idler[j].toa_ns,
                });
            }
            None => out.signal_singles.push(*s),
        }
    }
    out.idler_singles = idler
        .iter()
        .zip(&used)
        .filter(|(_, u)| !**u)
        .map(|(e, _)| *e)
        .collect();
    out
}
