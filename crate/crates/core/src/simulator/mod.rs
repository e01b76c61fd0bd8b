//! Monte Carlo generation of down-converted pairs, scattered-pump background
//! and the pixel hits they leave in the detector.
//!
//! A run is cut into fixed-length time slices. Each slice draws from its own
//! ChaCha stream selected by `(seed, slice index)`, so slices can be simulated
//! in parallel and the merged output is identical regardless of scheduling.

mod mask;
mod output;

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use mask::{apply_masks, MaskSpec, TransmissionMask};
pub use output::{write_outputs, SimulationFiles};

use crate::detector::{
    synthesize_hits, Arm, Deposit, DetectorLayout, DetectorSpec, TimingModel, ToTCalibration,
};
use crate::error::{Error, Result};
use crate::hit::{toa_to_ticks, RawHit};
use crate::kinematics::{emission_angle, AngleMode, ExperimentGeometry};
use crate::pipeline::Clustering;

const NS_PER_HOUR: f64 = 3.6e12;
const NS_PER_SECOND: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundLaw {
    /// Uniform over the sensor.
    #[default]
    Uniform,
    /// Areal density falling as 1/r from the ring center.
    InverseRadius,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub geometry: ExperimentGeometry,
    pub detector: DetectorSpec,
    pub timing: TimingModel,
    pub pair_rate_per_hour: f64,
    /// Background (scattered pump) photons per down-converted photon.
    pub background_ratio: f64,
    pub background_law: BackgroundLaw,
    pub duration_hours: f64,
    /// Noise hits per second emitted by each masked (hot) pixel.
    pub hot_pixel_rate_hz: f64,
    pub masks: Vec<TransmissionMask>,
    pub angle_mode: AngleMode,
    pub slice_seconds: f64,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            geometry: ExperimentGeometry::default(),
            detector: DetectorSpec::default(),
            timing: TimingModel::default(),
            pair_rate_per_hour: 6300.0,
            background_ratio: 10.0,
            background_law: BackgroundLaw::Uniform,
            duration_hours: 1.0,
            hot_pixel_rate_hz: 0.01,
            masks: Vec::new(),
            angle_mode: AngleMode::Exact,
            slice_seconds: 60.0,
            seed: 0,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.timing.validate()?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.pair_rate_per_hour >= 0.0) {
            return bad("pair rate must be non-negative");
        }
        if !(self.background_ratio >= 0.0) {
            return bad("background ratio must be non-negative");
        }
        if !(self.duration_hours > 0.0) {
            return bad("duration must be positive");
        }
        if !(self.slice_seconds > 0.0) {
            return bad("slice length must be positive");
        }
        if !(self.hot_pixel_rate_hz >= 0.0) {
            return bad("hot-pixel rate must be non-negative");
        }
        let w = self.geometry.validity;
        if !(w.b_min < 0.5 && w.b_max > 0.5) {
            return bad("validity window must contain the degenerate fraction 0.5");
        }
        Ok(())
    }

    pub fn duration_ns(&self) -> f64 {
        self.duration_hours * NS_PER_HOUR
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonTruth {
    pub arm: Arm,
    pub energy_kev: f64,
    pub alpha: f64,
    /// Azimuth about the ring center (rad, in [0, 2 pi)).
    pub azimuth: f64,
    pub x_mm: f64,
    pub y_mm: f64,
    pub absorbed: bool,
}

/// Ground truth of one emitted pair. `photons[0]` carries fraction `b` at
/// azimuth `azimuth`; `photons[1]` carries `1 - b` diametrically opposite.
#[derive(Debug, Clone, PartialEq)]
pub struct BiphotonTruth {
    pub pair_id: u64,
    pub b: f64,
    pub detuning: f64,
    pub azimuth: f64,
    pub emission_time_ns: f64,
    pub photons: [PhotonTruth; 2],
}

impl BiphotonTruth {
    /// The photon on the signal arm, or the first photon if neither is.
    pub fn signal(&self) -> &PhotonTruth {
        self.photons
            .iter()
            .find(|p| p.arm == Arm::Signal)
            .unwrap_or(&self.photons[0])
    }

    pub fn idler(&self) -> &PhotonTruth {
        let s = self.signal() as *const PhotonTruth;
        self.photons
            .iter()
            .find(|p| !std::ptr::eq(*p, s))
            .unwrap_or(&self.photons[1])
    }
}

/// A scattered pump photon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundPhoton {
    pub x_mm: f64,
    pub y_mm: f64,
    pub energy_kev: f64,
    pub time_ns: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HitSource {
    Pair { pair_id: u64, photon: u8 },
    Background { index: u64 },
    HotPixel,
}

#[derive(Debug, Clone, Default)]
pub struct SimulationOutput {
    pub truths: Vec<BiphotonTruth>,
    pub background: Vec<BackgroundPhoton>,
    /// Hits sorted by time of arrival.
    pub hits: Vec<RawHit>,
    /// Origin of each entry of `hits`.
    pub sources: Vec<HitSource>,
}

impl SimulationOutput {
    /// Per pair, whether each photon left at least one hit.
    pub fn detected_photons(&self) -> Vec<[bool; 2]> {
        let mut seen = vec![[false; 2]; self.truths.len()];
        for s in &self.sources {
            if let HitSource::Pair { pair_id, photon } = *s {
                seen[pair_id as usize][photon as usize] = true;
            }
        }
        seen
    }

    pub fn summary(&self, duration_hours: f64) -> SimulationSummary {
        let detected = self.detected_photons();
        SimulationSummary {
            pairs: self.truths.len(),
            pairs_per_hour: self.truths.len() as f64 / duration_hours,
            detected_pairs: detected.iter().filter(|d| d[0] && d[1]).count(),
            absorbed_photons: self
                .truths
                .iter()
                .flat_map(|t| t.photons.iter())
                .filter(|p| p.absorbed)
                .count(),
            background_photons: self.background.len(),
            hits: self.hits.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub pairs: usize,
    pub pairs_per_hour: f64,
    pub detected_pairs: usize,
    pub absorbed_photons: usize,
    pub background_photons: usize,
    pub hits: usize,
}

/// A validated configuration bound to its detector.
pub struct Simulator {
    pub config: SimulationConfig,
    pub layout: DetectorLayout,
    pub calib: ToTCalibration,
    ring_center_mm: (f64, f64),
    detuning_dist: Option<Normal<f64>>,
}

impl Simulator {
    pub fn new(config: SimulationConfig) -> Result<Self> {
        config.validate()?;
        let (layout, calib) = config.detector.build(config.seed)?;
        Self::with_detector(config, layout, calib)
    }

    pub fn with_detector(
        config: SimulationConfig,
        layout: DetectorLayout,
        calib: ToTCalibration,
    ) -> Result<Self> {
        config.validate()?;
        let g = &config.geometry;
        let detuning_dist = if g.detuning_sigma > 0.0 {
            Some(
                Normal::new(g.detuning_nominal, g.detuning_sigma)
                    .map_err(|e| Error::Config(format!("detuning spread: {e}")))?,
            )
        } else {
            None
        };
        let ring_center_mm = layout.ring_center_mm(g);
        Ok(Self {
            config,
            layout,
            calib,
            ring_center_mm,
            detuning_dist,
        })
    }

    pub fn ring_center_mm(&self) -> (f64, f64) {
        self.ring_center_mm
    }

    /// Energy fraction drawn from `b (1 - b)` restricted to the validity window.
    pub fn sample_fraction<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let w = self.config.geometry.validity;
        loop {
            let b = rng.random_range(w.b_min..=w.b_max);
            if !w.contains(1.0 - b) {
                continue;
            }
            if rng.random::<f64>() * 0.25 < b * (1.0 - b) {
                return b;
            }
        }
    }

    /// Per-pair detuning: Gaussian about the nominal value, redrawn until positive.
    pub fn sample_detuning<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.detuning_dist {
            None => self.config.geometry.detuning_nominal,
            Some(d) => loop {
                let v = d.sample(rng);
                if v > 0.0 {
                    return v;
                }
            },
        }
    }

    /// Arm of the chip under a point, extending the chip grid past the edges.
    pub fn arm_at(&self, x_mm: f64, y_mm: f64) -> Arm {
        let ext = self.layout.extent_mm();
        let clamp = |v: f64| v.clamp(0.0, ext - 1e-9);
        let col = self.layout.axis_index(clamp(x_mm)).unwrap_or(0);
        let row = self.layout.axis_index(clamp(y_mm)).unwrap_or(0);
        self.layout.arm_of_chip(DetectorLayout::chip_of(col, row))
    }

    pub fn sample_pair<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        emission_time_ns: f64,
    ) -> Result<BiphotonTruth> {
        let b = self.sample_fraction(rng);
        let detuning = self.sample_detuning(rng);
        let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
        let geom = self.config.geometry.with_detuning(detuning);
        let l = geom.crystal_to_detector_mm;
        let (cx, cy) = self.ring_center_mm;
        let photon = |fraction: f64, phi: f64| -> Result<PhotonTruth> {
            let alpha = emission_angle(fraction, &geom, self.config.angle_mode)?;
            let r = l * alpha.tan();
            let (x, y) = (cx + r * phi.cos(), cy + r * phi.sin());
            Ok(PhotonTruth {
                arm: self.arm_at(x, y),
                energy_kev: fraction * geom.pump_energy_kev,
                alpha,
                azimuth: phi,
                x_mm: x,
                y_mm: y,
                absorbed: false,
            })
        };
        let first = photon(b, azimuth)?;
        let opposite = (azimuth + std::f64::consts::PI) % std::f64::consts::TAU;
        let mut second = photon(1.0 - b, opposite)?;
        // Energy conservation holds exactly, not just to rounding of 1 - b.
        second.energy_kev = geom.pump_energy_kev - first.energy_kev;
        Ok(BiphotonTruth {
            pair_id: 0,
            b,
            detuning,
            azimuth,
            emission_time_ns,
            photons: [first, second],
        })
    }

    /// Expected down-converted photons (two per pair) in an interval.
    fn expected_pair_photons(&self, duration_ns: f64) -> f64 {
        2.0 * self.config.pair_rate_per_hour * duration_ns / NS_PER_HOUR
    }

    /// Scattered pump photons arriving in `[t0, t1)`.
    pub fn sample_background<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        t0: f64,
        t1: f64,
    ) -> Vec<BackgroundPhoton> {
        let mean = self.config.background_ratio * self.expected_pair_photons(t1 - t0);
        let n = poisson(rng, mean);
        let ext = self.layout.extent_mm();
        let (cx, cy) = self.ring_center_mm;
        let r_max = [(0.0, 0.0), (ext, 0.0), (0.0, ext), (ext, ext)]
            .iter()
            .map(|&(x, y)| (x - cx).hypot(y - cy))
            .fold(0.0, f64::max);
        let mut out: Vec<BackgroundPhoton> = (0..n)
            .map(|_| {
                let (x, y) = match self.config.background_law {
                    BackgroundLaw::Uniform => {
                        (rng.random_range(0.0..ext), rng.random_range(0.0..ext))
                    }
                    BackgroundLaw::InverseRadius => loop {
                        let r = rng.random_range(0.0..r_max);
                        let phi = rng.random_range(0.0..std::f64::consts::TAU);
                        let (x, y) = (cx + r * phi.cos(), cy + r * phi.sin());
                        if (0.0..ext).contains(&x) && (0.0..ext).contains(&y) {
                            break (x, y);
                        }
                    },
                };
                BackgroundPhoton {
                    x_mm: x,
                    y_mm: y,
                    energy_kev: self.config.geometry.pump_energy_kev,
                    time_ns: rng.random_range(t0..t1),
                }
            })
            .collect();
        out.sort_by(|a, b| a.time_ns.total_cmp(&b.time_ns));
        out
    }

    /// Whether a photon at this point can reach an active pixel.
    pub fn reaches_sensor(&self, x_mm: f64, y_mm: f64) -> bool {
        self.layout.pixel_at(x_mm, y_mm).is_some()
            && !self.config.geometry.beamstop.blocks(x_mm, y_mm)
    }

    fn deposit<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        x: f64,
        y: f64,
        e: f64,
        t: f64,
    ) -> Result<Vec<RawHit>> {
        if !self.reaches_sensor(x, y) {
            return Ok(Vec::new());
        }
        let d = Deposit {
            x_mm: x,
            y_mm: y,
            energy_kev: e,
            time_ns: t,
        };
        synthesize_hits(
            &d,
            &self.layout,
            &self.calib,
            &self.config.detector.response,
            &self.config.timing,
            rng,
        )
    }

    fn hot_pixel_noise<R: Rng + ?Sized>(&self, rng: &mut R, t0: f64, t1: f64) -> Vec<RawHit> {
        let mean = self.config.hot_pixel_rate_hz * (t1 - t0) / NS_PER_SECOND;
        let mut out = Vec::new();
        if mean <= 0.0 {
            return out;
        }
        let q = self.calib.tot_quantum_ns;
        for (col, row) in self.layout.hot_pixels() {
            for _ in 0..poisson(rng, mean) {
                let t = rng.random_range(t0..t1) + self.config.timing.latency_ns;
                out.push(RawHit {
                    toa_ticks: toa_to_ticks(t),
                    chip: DetectorLayout::chip_of(col, row),
                    col,
                    row,
                    tot_ns: q * rng.random_range(1..=40),
                });
            }
        }
        out
    }

    fn simulate_slice(&self, index: u64, t0: f64, t1: f64) -> Result<SimulationOutput> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(index + 1);

        let n_pairs = poisson(
            &mut rng,
            self.config.pair_rate_per_hour * (t1 - t0) / NS_PER_HOUR,
        );
        let mut times: Vec<f64> = (0..n_pairs).map(|_| rng.random_range(t0..t1)).collect();
        times.sort_by(f64::total_cmp);

        let mut out = SimulationOutput::default();
        for (i, &t) in times.iter().enumerate() {
            let mut truth = self.sample_pair(&mut rng, t)?;
            truth.pair_id = i as u64;
            apply_masks(&mut truth, &self.config.masks, &mut rng);
            out.truths.push(truth);
        }
        out.background = self.sample_background(&mut rng, t0, t1);

        let mut tagged: Vec<(RawHit, HitSource)> = Vec::new();
        for truth in &out.truths {
            for (k, p) in truth.photons.iter().enumerate() {
                if p.absorbed {
                    continue;
                }
                let source = HitSource::Pair {
                    pair_id: truth.pair_id,
                    photon: k as u8,
                };
                for h in self.deposit(
                    &mut rng,
                    p.x_mm,
                    p.y_mm,
                    p.energy_kev,
                    truth.emission_time_ns,
                )? {
                    tagged.push((h, source));
                }
            }
        }
        for (i, bg) in out.background.iter().enumerate() {
            let source = HitSource::Background { index: i as u64 };
            for h in self.deposit(&mut rng, bg.x_mm, bg.y_mm, bg.energy_kev, bg.time_ns)? {
                tagged.push((h, source));
            }
        }
        for h in self.hot_pixel_noise(&mut rng, t0, t1) {
            tagged.push((h, HitSource::HotPixel));
        }
        (out.hits, out.sources) = tagged.into_iter().unzip();
        Ok(out)
    }

    /// Simulate the whole run, slices in parallel, merged deterministically.
    pub fn run(&self) -> Result<SimulationOutput> {
        let total = self.config.duration_ns();
        let slice = self.config.slice_seconds * NS_PER_SECOND;
        let n_slices = (total / slice).ceil().max(1.0) as u64;
        let parts: Vec<SimulationOutput> = (0..n_slices)
            .into_par_iter()
            .map(|i| {
                let t0 = i as f64 * slice;
                let t1 = ((i + 1) as f64 * slice).min(total);
                self.simulate_slice(i, t0, t1)
            })
            .collect::<Result<_>>()?;
        Ok(merge(parts))
    }
}

/// For each clustered event, the pair photon `(pair_id, photon)` that
/// supplied most of its hits, or `None` when background or noise hits
/// dominate. `sources` must be aligned with the clustered hits.
pub fn event_origins(sources: &[HitSource], clustering: &Clustering) -> Vec<Option<(u64, u8)>> {
    let mut tally: Vec<HashMap<Option<(u64, u8)>, usize>> =
        vec![HashMap::new(); clustering.events.len()];
    for (s, label) in sources.iter().zip(&clustering.labels) {
        if let Some(k) = label {
            let key = match *s {
                HitSource::Pair { pair_id, photon } => Some((pair_id, photon)),
                _ => None,
            };
            *tally[*k as usize].entry(key).or_default() += 1;
        }
    }
    tally
        .into_iter()
        .map(|t| {
            t.into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .and_then(|(k, _)| k)
        })
        .collect()
}

fn merge(parts: Vec<SimulationOutput>) -> SimulationOutput {
    let mut out = SimulationOutput::default();
    let mut tagged = Vec::new();
    for part in parts {
        let pair_offset = out.truths.len() as u64;
        let bg_offset = out.background.len() as u64;
        for mut t in part.truths {
            t.pair_id += pair_offset;
            out.truths.push(t);
        }
        out.background.extend(part.background);
        for (h, s) in part.hits.into_iter().zip(part.sources) {
            let s = match s {
                HitSource::Pair { pair_id, photon } => HitSource::Pair {
                    pair_id: pair_id + pair_offset,
                    photon,
                },
                HitSource::Background { index } => HitSource::Background {
                    index: index + bg_offset,
                },
                HitSource::HotPixel => HitSource::HotPixel,
            };
            tagged.push((h, s));
        }
    }
    tagged.sort_unstable();
    (out.hits, out.sources) = tagged.into_iter().unzip();
    out
}

fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean)
        .map(|d| d.sample(rng) as u64)
        .unwrap_or(0)
}
