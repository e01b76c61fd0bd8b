//! Pairing of signal- and idler-arm photons, energy/momentum filtering and
//! the per-pair observables derived from positions.

mod matching;

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use matching::{match_pairs, MatchedPair, Matching};

use crate::detector::Arm;
use crate::error::{Error, Result};
use crate::fit::{fit_gaussian, GaussianFit};
use crate::kinematics::{
    detuning_from_angles, emission_angle, energy_from_radius, AngleMode, ExperimentGeometry,
};
use crate::metadata::OutputMeta;
use crate::pipeline::{ClusterEvent, Selection};

/// Raw-ToT acceptance region for the summed cluster ToT of each arm (ns).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TotBox {
    pub signal_ns: (f64, f64),
    pub idler_ns: (f64, f64),
}

impl TotBox {
    pub fn contains(&self, signal_tot: f64, idler_tot: f64) -> bool {
        (self.signal_ns.0..=self.signal_ns.1).contains(&signal_tot)
            && (self.idler_ns.0..=self.idler_ns.1).contains(&idler_tot)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairFilterConfig {
    /// Half-width of the coincidence window (ns).
    pub time_window_ns: f64,
    /// Bound on `|phi_s - phi_i - pi|` (rad).
    pub azimuth_tolerance_rad: f64,
    /// Bound on `|E_s + E_i - E_pump|` from position-reconstructed energies (keV).
    pub energy_tolerance_kev: f64,
    pub tot_box: Option<TotBox>,
}

impl Default for PairFilterConfig {
    fn default() -> Self {
        Self {
            time_window_ns: 200.0,
            azimuth_tolerance_rad: 0.05,
            energy_tolerance_kev: 1.5,
            tot_box: None,
        }
    }
}

impl PairFilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.time_window_ns > 0.0
            && self.azimuth_tolerance_rad > 0.0
            && self.energy_tolerance_kev > 0.0)
        {
            return Err(Error::Config(
                "pair filter tolerances must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A time-matched pair with its position-derived observables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidatePair {
    pub signal: ClusterEvent,
    pub idler: ClusterEvent,
    pub dt_ns: f64,
    pub r_s: f64,
    pub r_i: f64,
    pub azimuth_s: f64,
    pub azimuth_i: f64,
    pub alpha_s: f64,
    pub alpha_i: f64,
    pub e_s_pos: f64,
    pub e_i_pos: f64,
    pub detuning_calc: f64,
    /// `phi_s - phi_i - pi`, wrapped to `(-pi, pi]`.
    pub azimuth_residual: f64,
    /// `E_s + E_i - E_pump` (keV).
    pub energy_residual: f64,
    pub anti_collinear: bool,
    pub energy_conserved: bool,
    pub in_tot_box: bool,
    pub passed: bool,
}

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(std::f64::consts::TAU);
    if w > std::f64::consts::PI {
        w - std::f64::consts::TAU
    } else {
        w
    }
}

impl CandidatePair {
    pub fn evaluate(
        m: &MatchedPair,
        geom: &ExperimentGeometry,
        center_mm: (f64, f64),
        cfg: &PairFilterConfig,
    ) -> Result<Self> {
        let (cx, cy) = center_mm;
        let l = geom.crystal_to_detector_mm;
        let polar = |e: &ClusterEvent| -> Result<(f64, f64)> {
            let (dx, dy) = (e.x_mm - cx, e.y_mm - cy);
            let r = dx.hypot(dy);
            if r < 1e-12 {
                return Err(Error::DegenerateGeometry(format!(
                    "event at ({:.4}, {:.4}) mm coincides with the ring center",
                    e.x_mm, e.y_mm
                )));
            }
            Ok((r, dy.atan2(dx).rem_euclid(std::f64::consts::TAU)))
        };
        let (r_s, azimuth_s) = polar(&m.signal)?;
        let (r_i, azimuth_i) = polar(&m.idler)?;
        let (alpha_s, alpha_i) = ((r_s / l).atan(), (r_i / l).atan());
        let e_s_pos = energy_from_radius(r_s, geom);
        let e_i_pos = energy_from_radius(r_i, geom);
        let azimuth_residual = wrap_angle(azimuth_s - azimuth_i - std::f64::consts::PI);
        let energy_residual = e_s_pos + e_i_pos - geom.pump_energy_kev;
        let anti_collinear = azimuth_residual.abs() <= cfg.azimuth_tolerance_rad;
        let energy_conserved = energy_residual.abs() <= cfg.energy_tolerance_kev;
        let in_tot_box = cfg
            .tot_box
            .is_none_or(|b| b.contains(m.signal.tot_sum_ns as f64, m.idler.tot_sum_ns as f64));
        Ok(Self {
            signal: m.signal,
            idler: m.idler,
            dt_ns: m.dt_ns,
            r_s,
            r_i,
            azimuth_s,
            azimuth_i,
            alpha_s,
            alpha_i,
            e_s_pos,
            e_i_pos,
            detuning_calc: detuning_from_angles(alpha_s, alpha_i, geom.bragg_angle)?,
            azimuth_residual,
            energy_residual,
            anti_collinear,
            energy_conserved,
            in_tot_box,
            passed: anti_collinear && energy_conserved && in_tot_box,
        })
    }

    pub fn record(&self) -> PairRecord {
        PairRecord {
            dt_ns: self.dt_ns,
            xs_mm: self.signal.x_mm,
            ys_mm: self.signal.y_mm,
            xi_mm: self.idler.x_mm,
            yi_mm: self.idler.y_mm,
            es_kev: self.e_s_pos,
            ei_kev: self.e_i_pos,
            detuning_rad: self.detuning_calc,
            passed: self.passed,
        }
    }
}

/// Evaluate the energy and momentum filters on matched pairs.
pub fn spatial_filter(
    pairs: &[MatchedPair],
    geom: &ExperimentGeometry,
    center_mm: (f64, f64),
    cfg: &PairFilterConfig,
) -> Result<Vec<CandidatePair>> {
    cfg.validate()?;
    pairs
        .iter()
        .map(|m| CandidatePair::evaluate(m, geom, center_mm, cfg))
        .collect()
}

/// Flat row of the pair CSV; also the input of the imaging stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub dt_ns: f64,
    pub xs_mm: f64,
    pub ys_mm: f64,
    pub xi_mm: f64,
    pub yi_mm: f64,
    #[serde(rename = "es_keV")]
    pub es_kev: f64,
    #[serde(rename = "ei_keV")]
    pub ei_kev: f64,
    pub detuning_rad: f64,
    #[serde(with = "flag")]
    pub passed: bool,
}

mod flag {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(serde::de::Error::custom(format!(
                "expected 0 or 1, got {v}"
            ))),
        }
    }
}

pub fn write_pairs<W: Write>(
    out: W,
    pairs: &[PairRecord],
    meta: Option<&OutputMeta>,
) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(out);
    if let Some(meta) = meta {
        writeln!(out, "{}", meta.header_line())?;
    }
    let mut w = csv::Writer::from_writer(out);
    if pairs.is_empty() {
        w.write_record([
            "dt_ns",
            "xs_mm",
            "ys_mm",
            "xi_mm",
            "yi_mm",
            "es_keV",
            "ei_keV",
            "detuning_rad",
            "passed",
        ])?;
    }
    for p in pairs {
        w.serialize(p)?;
    }
    w.flush()
}

pub fn read_pairs<R: Read>(input: R, path: &Path) -> Result<Vec<PairRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    rdr.deserialize()
        .map(|r| r.map_err(|e| Error::csv(path, e)))
        .collect()
}

pub fn load_pairs(path: &Path) -> Result<Vec<PairRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_pairs(file, path)
}

/// Fixed-width 1-D histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub low: f64,
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(low: f64, high: f64, bin_width: f64) -> Result<Self> {
        if !(bin_width > 0.0 && high > low) {
            return Err(Error::Config(
                "histogram needs a positive bin width and range".into(),
            ));
        }
        let n = ((high - low) / bin_width - 1e-9).ceil().max(1.0) as usize;
        Ok(Self {
            low,
            bin_width,
            counts: vec![0; n],
        })
    }

    pub fn fill(&mut self, x: f64) {
        let k = ((x - self.low) / self.bin_width).floor();
        if k >= 0.0 && (k as usize) < self.counts.len() {
            self.counts[k as usize] += 1;
        }
    }

    pub fn bin_low(&self, k: usize) -> f64 {
        self.low + k as f64 * self.bin_width
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.counts.len())
            .map(|k| self.bin_low(k) + 0.5 * self.bin_width)
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn write<W: Write>(&self, out: W, meta: Option<&OutputMeta>) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(out);
        if let Some(meta) = meta {
            writeln!(out, "{}", meta.header_line())?;
        }
        writeln!(out, "bin_low,count")?;
        for (k, c) in self.counts.iter().enumerate() {
            writeln!(out, "{},{c}", self.bin_low(k))?;
        }
        out.flush()
    }
}

/// Summary of the arrival-time difference of passed pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DtSummary {
    pub entries: usize,
    pub center_ns: f64,
    pub rms_ns: f64,
    /// Mean accidental count per bin estimated from the outer sidebands.
    pub accidental_per_bin: f64,
    /// Peak entries (within 3 rms) over the accidental estimate in that span.
    pub signal_to_accidental: f64,
}

pub fn dt_histogram(
    pairs: &[CandidatePair],
    bin_ns: f64,
    window_ns: f64,
) -> Result<(Histogram, DtSummary)> {
    let mut hist = Histogram::new(-window_ns, window_ns, bin_ns)?;
    let dts: Vec<f64> = pairs.iter().filter(|p| p.passed).map(|p| p.dt_ns).collect();
    for &d in &dts {
        hist.fill(d);
    }
    let n = dts.len();
    let center = if n > 0 {
        dts.iter().sum::<f64>() / n as f64
    } else {
        0.0
    };
    let rms = if n > 0 {
        (dts.iter().map(|d| (d - center).powi(2)).sum::<f64>() / n as f64).sqrt()
    } else {
        0.0
    };
    // Sidebands: the outer quarter of the window on both sides.
    let side = 0.75 * window_ns;
    let (mut side_count, mut side_bins) = (0u64, 0usize);
    for (k, &c) in hist.counts.iter().enumerate() {
        let mid = hist.bin_low(k) + 0.5 * bin_ns;
        if mid.abs() >= side {
            side_count += c;
            side_bins += 1;
        }
    }
    let accidental_per_bin = if side_bins > 0 {
        side_count as f64 / side_bins as f64
    } else {
        0.0
    };
    let peak = dts
        .iter()
        .filter(|d| (*d - center).abs() <= 3.0 * rms)
        .count() as f64;
    let accidental_in_peak = accidental_per_bin * (6.0 * rms / bin_ns);
    Ok((
        hist,
        DtSummary {
            entries: n,
            center_ns: center,
            rms_ns: rms,
            accidental_per_bin,
            signal_to_accidental: if accidental_in_peak > 0.0 {
                peak / accidental_in_peak
            } else {
                f64::INFINITY
            },
        },
    ))
}

pub const MIN_DETUNING_ENTRIES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct DetuningHistogram {
    pub histogram: Histogram,
    pub fit: GaussianFit,
}

/// Histogram of per-pair calculated detuning (rad) with a Gaussian fit.
/// Bins span the sample mean +- 6 standard deviations, 60 bins.
pub fn detuning_histogram(pairs: &[CandidatePair]) -> Result<DetuningHistogram> {
    let values: Vec<f64> = pairs
        .iter()
        .filter(|p| p.passed)
        .map(|p| p.detuning_calc)
        .collect();
    if values.len() < MIN_DETUNING_ENTRIES {
        return Err(Error::Fit(format!(
            "{} passed pairs; at least {MIN_DETUNING_ENTRIES} needed for a detuning fit",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    // A spread far below the mean still gets a usable binning.
    let half = (6.0 * sd).max(1e-4 * mean.abs()).max(1e-12);
    let mut histogram = Histogram::new(mean - half, mean + half, 2.0 * half / 60.0)?;
    values.iter().for_each(|&v| histogram.fill(v));
    let counts: Vec<f64> = histogram.counts.iter().map(|&c| c as f64).collect();
    let fit = fit_gaussian(&histogram.centers(), &counts)?;
    Ok(DetuningHistogram { histogram, fit })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScatterRow {
    pub alpha_s: f64,
    pub alpha_i: f64,
    #[serde(rename = "e_s_keV")]
    pub e_s_pos: f64,
    #[serde(rename = "e_i_keV")]
    pub e_i_pos: f64,
}

pub fn emission_scatter(pairs: &[CandidatePair]) -> Vec<ScatterRow> {
    pairs
        .iter()
        .filter(|p| p.passed)
        .map(|p| ScatterRow {
            alpha_s: p.alpha_s,
            alpha_i: p.alpha_i,
            e_s_pos: p.e_s_pos,
            e_i_pos: p.e_i_pos,
        })
        .collect()
}

/// Theoretical `(alpha(b), alpha(1 - b))` curve at the nominal detuning.
pub fn emission_curve(geom: &ExperimentGeometry, n: usize) -> Result<Vec<(f64, f64)>> {
    let w = geom.validity;
    let lo = w.b_min.max(1.0 - w.b_max);
    let hi = w.b_max.min(1.0 - w.b_min);
    (0..n)
        .map(|k| {
            let b = (lo + (hi - lo) * k as f64 / (n.max(2) - 1) as f64).clamp(lo, hi);
            Ok((
                emission_angle(b, geom, AngleMode::Exact)?,
                emission_angle((1.0 - b).clamp(lo, hi), geom, AngleMode::Exact)?,
            ))
        })
        .collect()
}

pub fn write_rows<W: Write, T: Serialize>(
    out: W,
    rows: &[T],
    header: &[&str],
    meta: Option<&OutputMeta>,
) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(out);
    if let Some(meta) = meta {
        writeln!(out, "{}", meta.header_line())?;
    }
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::Arm;
    use crate::kinematics::radius_from_b;

    fn ev(arm: Arm, x: f64, y: f64, t: f64) -> ClusterEvent {
        ClusterEvent {
            arm,
            x_mm: x,
            y_mm: y,
            energy_kev: 7.5,
            toa_ns: t,
            n_pixels: 1,
            tot_sum_ns: 425,
            within_cutoff: true,
        }
    }

    fn truth_pair(b: f64, phi: f64, g: &ExperimentGeometry, c: (f64, f64)) -> MatchedPair {
        let rs = radius_from_b(b, g, AngleMode::Approximate).unwrap();
        let ri = radius_from_b(1.0 - b, g, AngleMode::Approximate).unwrap();
        let s = ev(Arm::Signal, c.0 + rs * phi.cos(), c.1 + rs * phi.sin(), 0.0);
        let i = ev(Arm::Idler, c.0 - ri * phi.cos(), c.1 - ri * phi.sin(), 0.0);
        MatchedPair {
            signal: s,
            idler: i,
            dt_ns: 0.0,
        }
    }

    #[test]
    fn noiseless_pair_passes_with_zero_residuals() {
        let g = ExperimentGeometry::default();
        let c = (14.0, 14.0);
        for (b, phi) in [(0.5, 1.0), (0.3, 4.0), (0.7, 2.5)] {
            let p = CandidatePair::evaluate(
                &truth_pair(b, phi, &g, c),
                &g,
                c,
                &PairFilterConfig::default(),
            )
            .unwrap();
            assert!(p.passed);
            assert!(p.azimuth_residual.abs() < 1e-12);
            assert!(p.energy_residual.abs() < 1e-9, "{}", p.energy_residual);
            assert!((p.detuning_calc - g.detuning_nominal).abs() < 1e-12);
        }
    }

    #[test]
    fn same_side_accidental_fails() {
        let g = ExperimentGeometry::default();
        let c = (14.0, 14.0);
        let m = MatchedPair {
            signal: ev(Arm::Signal, 20.0, 20.0, 0.0),
            idler: ev(Arm::Idler, 22.0, 22.0, 0.0),
            dt_ns: 0.0,
        };
        let p = CandidatePair::evaluate(&m, &g, c, &PairFilterConfig::default()).unwrap();
        assert!(!p.anti_collinear && !p.passed);
    }

    #[test]
    fn center_event_is_degenerate() {
        let g = ExperimentGeometry::default();
        let m = MatchedPair {
            signal: ev(Arm::Signal, 14.0, 14.0, 0.0),
            idler: ev(Arm::Idler, 2.0, 2.0, 0.0),
            dt_ns: 0.0,
        };
        let r = CandidatePair::evaluate(&m, &g, (14.0, 14.0), &PairFilterConfig::default());
        assert!(matches!(r, Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn tot_box_gates_pairs() {
        let g = ExperimentGeometry::default();
        let c = (14.0, 14.0);
        let cfg = PairFilterConfig {
            tot_box: Some(TotBox {
                signal_ns: (0.0, 400.0),
                idler_ns: (0.0, 1000.0),
            }),
            ..PairFilterConfig::default()
        };
        let p = CandidatePair::evaluate(&truth_pair(0.5, 1.0, &g, c), &g, c, &cfg).unwrap();
        assert!(!p.in_tot_box && !p.passed);
    }

    #[test]
    fn degenerate_pair_on_diagonal() {
        let g = ExperimentGeometry::default();
        let c = (14.0, 14.0);
        let p = CandidatePair::evaluate(
            &truth_pair(0.5, 0.3, &g, c),
            &g,
            c,
            &PairFilterConfig::default(),
        )
        .unwrap();
        let rows = emission_scatter(&[p]);
        assert!((rows[0].alpha_s - rows[0].alpha_i).abs() < 1e-12);
        assert!((rows[0].alpha_s.to_degrees() - 0.9727).abs() < 1e-3);
        let curve = emission_curve(&g, 101).unwrap();
        for (a, b) in curve {
            assert!((a * b / g.coupling() - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn detuning_fit_needs_entries() {
        let g = ExperimentGeometry::default();
        let c = (14.0, 14.0);
        let p = CandidatePair::evaluate(
            &truth_pair(0.5, 0.3, &g, c),
            &g,
            c,
            &PairFilterConfig::default(),
        )
        .unwrap();
        assert!(matches!(
            detuning_histogram(&vec![p; 99]),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn zero_jitter_dt_single_bin() {
        let g = ExperimentGeometry::default();
        let c = (14.0, 14.0);
        let pairs: Vec<_> = (0..50)
            .map(|k| {
                CandidatePair::evaluate(
                    &truth_pair(0.5, k as f64 * 0.1, &g, c),
                    &g,
                    c,
                    &PairFilterConfig::default(),
                )
                .unwrap()
            })
            .collect();
        let (h, s) = dt_histogram(&pairs, 5.0, 200.0).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.counts[40], 50);
        assert_eq!(s.rms_ns, 0.0);
        assert_eq!(s.center_ns, 0.0);
    }

    #[test]
    fn pair_csv_round_trip() {
        let rec = PairRecord {
            dt_ns: -3.125,
            xs_mm: 1.5,
            ys_mm: 2.5,
            xi_mm: 3.5,
            yi_mm: 4.5,
            es_kev: 7.0,
            ei_kev: 8.0,
            detuning_rad: 3.6e-4,
            passed: true,
        };
        let mut buf = Vec::new();
        write_pairs(&mut buf, &[rec], Some(&OutputMeta::new("ab", 1))).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text.lines().nth(1),
            Some("dt_ns,xs_mm,ys_mm,xi_mm,yi_mm,es_keV,ei_keV,detuning_rad,passed")
        );
        let back = read_pairs(buf.as_slice(), Path::new("p.csv")).unwrap();
        assert_eq!(back, vec![rec]);

        let mut empty = Vec::new();
        write_pairs(&mut empty, &[], None).unwrap();
        assert!(read_pairs(empty.as_slice(), Path::new("p.csv"))
            .unwrap()
            .is_empty());
    }
}

/// Everything derived from one cluster stream.
#[derive(Debug, Clone)]
pub struct PairAnalysis {
    /// Matching of all clusters, before the energy selection.
    pub unselected: Matching,
    /// Matching of the selected down-converted candidates.
    pub matching: Matching,
    pub candidates: Vec<CandidatePair>,
}

/// Split clusters by arm, select, match and filter.
pub fn analyze_events(
    clusters: &[ClusterEvent],
    geom: &ExperimentGeometry,
    center_mm: (f64, f64),
    selection: &Selection,
    cfg: &PairFilterConfig,
) -> Result<PairAnalysis> {
    cfg.validate()?;
    let arm = |a: Arm, selected: bool| -> Vec<ClusterEvent> {
        clusters
            .iter()
            .filter(|c| c.arm == a && (!selected || selection.accepts(c)))
            .copied()
            .collect()
    };
    let unselected = match_pairs(
        &arm(Arm::Signal, false),
        &arm(Arm::Idler, false),
        cfg.time_window_ns,
    );
    let matching = match_pairs(
        &arm(Arm::Signal, true),
        &arm(Arm::Idler, true),
        cfg.time_window_ns,
    );
    let candidates = spatial_filter(&matching.pairs, geom, center_mm, cfg)?;
    Ok(PairAnalysis {
        unselected,
        matching,
        candidates,
    })
}

/// Counts of signal against idler cluster ToT.
#[derive(Debug, Clone, PartialEq)]
pub struct TotMap {
    pub bin_ns: f64,
    pub n: usize,
    pub counts: Vec<u64>,
}

impl TotMap {
    pub fn new(bin_ns: f64, max_ns: f64) -> Result<Self> {
        if !(bin_ns > 0.0 && max_ns > bin_ns) {
            return Err(Error::Config("ToT map needs 0 < bin < max".into()));
        }
        let n = (max_ns / bin_ns).ceil() as usize;
        Ok(Self {
            bin_ns,
            n,
            counts: vec![0; n * n],
        })
    }

    /// Pairs beyond `max_ns` on either axis are not counted.
    pub fn fill(&mut self, signal_ns: f64, idler_ns: f64) {
        let (i, j) = (
            (signal_ns / self.bin_ns).floor(),
            (idler_ns / self.bin_ns).floor(),
        );
        if i >= 0.0 && j >= 0.0 && (i as usize) < self.n && (j as usize) < self.n {
            self.counts[j as usize * self.n + i as usize] += 1;
        }
    }

    pub fn from_pairs(pairs: &[MatchedPair], bin_ns: f64, max_ns: f64) -> Result<Self> {
        let mut map = Self::new(bin_ns, max_ns)?;
        for p in pairs {
            map.fill(p.signal.tot_sum_ns as f64, p.idler.tot_sum_ns as f64);
        }
        Ok(map)
    }

    /// Nonzero cells with their lower edges.
    pub fn write<W: Write>(&self, out: W, meta: Option<&OutputMeta>) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(out);
        if let Some(meta) = meta {
            writeln!(out, "{}", meta.header_line())?;
        }
        writeln!(out, "signal_tot_ns,idler_tot_ns,count")?;
        for j in 0..self.n {
            for i in 0..self.n {
                let c = self.counts[j * self.n + i];
                if c > 0 {
                    writeln!(
                        out,
                        "{},{},{c}",
                        i as f64 * self.bin_ns,
                        j as f64 * self.bin_ns
                    )?;
                }
            }
        }
        out.flush()
    }
}
