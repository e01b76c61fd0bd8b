use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::calibration::ToTCalibration;
use super::layout::DetectorLayout;
use crate::error::{Error, Result};
use crate::hit::{toa_to_ticks, RawHit};

/// Pixel-level response to a point-like energy deposit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResponseModel {
    /// Half-width of the square charge cloud (mm). Zero confines the charge
    /// to the pixel under the deposit.
    pub sharing_radius_mm: f64,
    /// Pixels collecting less than this energy do not fire.
    pub threshold_kev: f64,
}

impl Default for ResponseModel {
    fn default() -> Self {
        Self {
            sharing_radius_mm: 0.010,
            threshold_kev: 1.0,
        }
    }
}

impl ResponseModel {
    pub fn ideal() -> Self {
        Self {
            sharing_radius_mm: 0.0,
            threshold_kev: 0.0,
        }
    }
}

/// Arrival-time model: per-photon Gaussian jitter plus a per-pixel,
/// ToT-dependent delay `w_max * (1 - tot / tot_ref)` clamped to `[0, w_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingModel {
    pub jitter_rms_ns: f64,
    pub timewalk_max_ns: f64,
    pub timewalk_tot_ref_ns: f64,
    /// Constant readout latency added to every arrival so that jitter never
    /// pushes a timestamp below zero.
    pub latency_ns: f64,
}

impl Default for TimingModel {
    fn default() -> Self {
        Self {
            jitter_rms_ns: 18.0,
            timewalk_max_ns: 100.0,
            timewalk_tot_ref_ns: 2000.0,
            latency_ns: 1000.0,
        }
    }
}

impl TimingModel {
    pub fn ideal() -> Self {
        Self {
            jitter_rms_ns: 0.0,
            timewalk_max_ns: 0.0,
            ..Self::default()
        }
    }

    pub fn timewalk_ns(&self, tot_ns: f64) -> f64 {
        if self.timewalk_max_ns == 0.0 {
            return 0.0;
        }
        (self.timewalk_max_ns * (1.0 - tot_ns / self.timewalk_tot_ref_ns))
            .clamp(0.0, self.timewalk_max_ns)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.jitter_rms_ns >= 0.0 && self.timewalk_max_ns >= 0.0 && self.latency_ns >= 0.0) {
            return Err(Error::Config(
                "timing parameters must be non-negative".into(),
            ));
        }
        if !(self.timewalk_tot_ref_ns > 0.0) {
            return Err(Error::Config(
                "timewalk reference ToT must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A photon absorbed in the sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deposit {
    pub x_mm: f64,
    pub y_mm: f64,
    pub energy_kev: f64,
    pub time_ns: f64,
}

/// Fractions of a cloud `[x - s, x + s]` collected by each pixel along one axis.
fn axis_shares(layout: &DetectorLayout, x: f64, s: f64) -> Vec<(u16, f64)> {
    let Some(center) = layout.axis_index(x) else {
        return Vec::new();
    };
    if s <= 0.0 {
        return vec![(center, 1.0)];
    }
    let (lo, hi) = ((x - s).max(0.0), (x + s).min(layout.extent_mm()));
    let span = hi - lo;
    let first = center.saturating_sub(1);
    let last = (center + 1).min(super::layout::LOGICAL_SIZE - 1);
    (first..=last)
        .filter_map(|i| {
            let (a, b) = layout.axis_bounds(i);
            let overlap = b.min(hi) - a.max(lo);
            (overlap > 0.0).then_some((i, overlap / span))
        })
        .collect()
}

/// Pixel weights of the bilinear charge-sharing kernel; they sum to one.
pub fn sharing_weights(
    layout: &DetectorLayout,
    x: f64,
    y: f64,
    radius_mm: f64,
) -> Vec<((u16, u16), f64)> {
    let xs = axis_shares(layout, x, radius_mm);
    let ys = axis_shares(layout, y, radius_mm);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &(row, wy) in &ys {
        for &(col, wx) in &xs {
            out.push(((col, row), wx * wy));
        }
    }
    out
}

/// Turn one deposit into the pixel hits it produces.
///
/// Energy is split by the charge-sharing kernel; each pixel's share gets
/// Gaussian noise with variance proportional to the share, so the summed
/// cluster energy carries the nominal resolution. Hits on masked pixels and
/// below threshold are dropped.
pub fn synthesize_hits<R: Rng + ?Sized>(
    deposit: &Deposit,
    layout: &DetectorLayout,
    calib: &ToTCalibration,
    response: &ResponseModel,
    timing: &TimingModel,
    rng: &mut R,
) -> Result<Vec<RawHit>> {
    let Deposit {
        x_mm,
        y_mm,
        energy_kev,
        time_ns,
    } = *deposit;
    if layout.pixel_at(x_mm, y_mm).is_none() {
        return Err(Error::OutOfActiveArea { x_mm, y_mm });
    }
    let jitter = if timing.jitter_rms_ns > 0.0 {
        Normal::new(0.0, timing.jitter_rms_ns).unwrap().sample(rng)
    } else {
        0.0
    };
    let sigma = calib.sigma_kev();
    let mut hits = Vec::new();
    for ((col, row), w) in sharing_weights(layout, x_mm, y_mm, response.sharing_radius_mm) {
        if layout.is_masked(col, row) {
            continue;
        }
        let mut e = w * energy_kev;
        if sigma > 0.0 {
            e += sigma * w.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
        if e < response.threshold_kev || e <= 0.0 {
            continue;
        }
        let pixel = calib.pixel(col, row)?;
        let tot_ns = calib.quantize(pixel.expected_tot(e));
        if tot_ns == 0 {
            continue;
        }
        let t = time_ns + timing.latency_ns + jitter + timing.timewalk_ns(tot_ns as f64);
        hits.push(RawHit {
            toa_ticks: toa_to_ticks(t),
            chip: DetectorLayout::chip_of(col, row),
            col,
            row,
            tot_ns,
        });
    }
    Ok(hits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ideal_calib() -> ToTCalibration {
        ToTCalibration::uniform(50.0, 50.0, 0.0)
    }

    #[test]
    fn centered_deposit_without_sharing_is_one_hit() {
        let layout = DetectorLayout::default();
        let calib = ideal_calib();
        let (x, y) = layout.logical_to_physical(100, 200).unwrap();
        let d = Deposit {
            x_mm: x,
            y_mm: y,
            energy_kev: 7.5,
            time_ns: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let hits = synthesize_hits(
            &d,
            &layout,
            &calib,
            &ResponseModel::ideal(),
            &TimingModel::ideal(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].pixel(), (100, 200));
        let e = calib
            .tot_to_energy(hits[0].tot_ns as f64, 100, 200)
            .unwrap();
        assert!((e - 7.5).abs() <= 0.25 + 1e-12);
        assert_eq!(hits[0].toa_ns(), 1000.0);
    }

    #[test]
    fn corner_deposit_splits_four_ways() {
        let layout = DetectorLayout::default();
        let calib = ToTCalibration::default();
        let (x0, _) = layout.axis_bounds(101);
        let (y0, _) = layout.axis_bounds(201);
        let w = sharing_weights(&layout, x0, y0, 0.02);
        assert_eq!(w.len(), 4);
        for (_, wi) in &w {
            assert!((wi - 0.25).abs() < 1e-12);
        }
        let response = ResponseModel {
            sharing_radius_mm: 0.02,
            threshold_kev: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = Deposit {
            x_mm: x0,
            y_mm: y0,
            energy_kev: 12.0,
            time_ns: 0.0,
        };
        let hits = synthesize_hits(
            &d,
            &layout,
            &calib,
            &response,
            &TimingModel::ideal(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(hits.len(), 4);
        let total: f64 = hits
            .iter()
            .map(|h| calib.tot_to_energy(h.tot_ns as f64, h.col, h.row).unwrap())
            .sum();
        // Resolution noise plus four quantization errors of at most 0.25 keV.
        assert!((total - 12.0).abs() < 4.0 * calib.sigma_kev() + 1.0);
    }

    #[test]
    fn masked_neighbourhood_yields_nothing() {
        let mut mask = Vec::new();
        for c in 99..=101 {
            for r in 199..=201 {
                mask.push((c, r));
            }
        }
        let layout = DetectorLayout::default().with_hot_pixels(mask).unwrap();
        let (x, y) = layout.logical_to_physical(100, 200).unwrap();
        let d = Deposit {
            x_mm: x + 0.02,
            y_mm: y - 0.02,
            energy_kev: 7.5,
            time_ns: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let hits = synthesize_hits(
            &d,
            &layout,
            &ToTCalibration::default(),
            &ResponseModel::default(),
            &TimingModel::default(),
            &mut rng,
        )
        .unwrap();
        assert!(hits.is_empty());
    }

    #[test]
    fn outside_active_area() {
        let layout = DetectorLayout::default();
        let d = Deposit {
            x_mm: -0.1,
            y_mm: 3.0,
            energy_kev: 7.5,
            time_ns: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = synthesize_hits(
            &d,
            &layout,
            &ToTCalibration::default(),
            &ResponseModel::default(),
            &TimingModel::default(),
            &mut rng,
        );
        assert!(matches!(r, Err(Error::OutOfActiveArea { .. })));
    }

    #[test]
    fn shared_energy_is_conserved_on_average() {
        // Quantization is removed by a 1 ns quantum so only resolution noise remains.
        let layout = DetectorLayout::default();
        let mut calib = ToTCalibration::default();
        calib.tot_quantum_ns = 1;
        let response = ResponseModel {
            sharing_radius_mm: 0.02,
            threshold_kev: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 20_000;
        let energy = 7.5;
        let mut sum = 0.0;
        for i in 0..n {
            let (x0, x1) = layout.axis_bounds(300 + (i % 7) as u16);
            let (y0, y1) = layout.axis_bounds(100 + (i % 5) as u16);
            let d = Deposit {
                x_mm: x0 + (x1 - x0) * rng.random::<f64>(),
                y_mm: y0 + (y1 - y0) * rng.random::<f64>(),
                energy_kev: energy,
                time_ns: 0.0,
            };
            let hits = synthesize_hits(
                &d,
                &layout,
                &calib,
                &response,
                &TimingModel::ideal(),
                &mut rng,
            )
            .unwrap();
            sum += hits
                .iter()
                .map(|h| calib.tot_to_energy(h.tot_ns as f64, h.col, h.row).unwrap())
                .sum::<f64>();
        }
        let mean = sum / n as f64;
        // Per-deposit sum has variance sigma^2 plus 1 ns rounding (1/50 keV).
        let se =
            (calib.sigma_kev().powi(2) + 4.0 * (0.02f64.powi(2) / 12.0)).sqrt() / (n as f64).sqrt();
        assert!((mean - energy).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn timewalk_is_clamped_and_monotone() {
        let t = TimingModel::default();
        assert_eq!(t.timewalk_ns(0.0), 100.0);
        assert_eq!(t.timewalk_ns(5000.0), 0.0);
        assert!(t.timewalk_ns(400.0) > t.timewalk_ns(800.0));
        assert_eq!(TimingModel::ideal().timewalk_ns(10.0), 0.0);
    }
}
