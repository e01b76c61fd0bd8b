//! From raw pixel hits to calibrated photon events: reading, clustering,
//! centroiding and energy selection.

mod cluster;
mod reader;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use cluster::{cluster, cluster_labeled, connected_components, Clustering};
pub use reader::{read_events, EventReader, DEFAULT_REORDER_BUFFER};

use crate::detector::{apply_hot_mask, Arm, DetectorLayout, ToTCalibration};
use crate::error::{Error, Result};
pub use crate::hit::RawHit;
use crate::metadata::OutputMeta;

/// One reconstructed photon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterEvent {
    pub arm: Arm,
    /// ToT-weighted centroid in physical coordinates (mm).
    pub x_mm: f64,
    pub y_mm: f64,
    /// Sum of the members' calibrated energies.
    pub energy_kev: f64,
    /// Earliest member arrival.
    pub toa_ns: f64,
    pub n_pixels: usize,
    pub tot_sum_ns: u64,
    /// Every member's ToT is at or below its pixel's cutoff.
    pub within_cutoff: bool,
}

/// Which clusters count as down-converted photons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Selection {
    /// Calibrated cluster energy within `[min_kev, max_kev]`.
    EnergyBand { min_kev: f64, max_kev: f64 },
    /// No member pixel above its calibrated ToT cutoff.
    PixelCutoff,
}

impl Default for Selection {
    fn default() -> Self {
        Selection::EnergyBand {
            min_kev: 4.0,
            max_kev: 11.0,
        }
    }
}

impl Selection {
    pub fn accepts(&self, ev: &ClusterEvent) -> bool {
        match *self {
            Selection::EnergyBand { min_kev, max_kev } => {
                (min_kev..=max_kev).contains(&ev.energy_kev)
            }
            Selection::PixelCutoff => ev.within_cutoff,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub time_window_ns: f64,
    pub reorder_buffer: usize,
    pub selection: Selection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            time_window_ns: 100.0,
            reorder_buffer: DEFAULT_REORDER_BUFFER,
            selection: Selection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.time_window_ns >= 0.0) {
            return Err(Error::Config(
                "cluster time window must be non-negative".into(),
            ));
        }
        if self.reorder_buffer == 0 {
            return Err(Error::Config(
                "reorder buffer must hold at least one hit".into(),
            ));
        }
        if let Selection::EnergyBand { min_kev, max_kev } = self.selection {
            if !(min_kev < max_kev) {
                return Err(Error::Config("energy band must have min < max".into()));
            }
        }
        Ok(())
    }
}

pub fn select_spdc_singles(clusters: &[ClusterEvent], selection: &Selection) -> Vec<ClusterEvent> {
    clusters
        .iter()
        .filter(|c| selection.accepts(c))
        .copied()
        .collect()
}

/// Mask hot pixels and cluster a time-ordered hit stream.
pub fn reconstruct(
    hits: &[RawHit],
    layout: &DetectorLayout,
    calib: &ToTCalibration,
    cfg: &PipelineConfig,
) -> Result<Vec<ClusterEvent>> {
    cfg.validate()?;
    let hits = apply_hot_mask(hits.iter().copied(), layout);
    cluster(&hits, layout, calib, cfg.time_window_ns)
}

pub fn write_clusters<W: Write>(
    out: W,
    clusters: &[ClusterEvent],
    meta: Option<&OutputMeta>,
) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(out);
    if let Some(meta) = meta {
        writeln!(out, "{}", meta.header_line())?;
    }
    writeln!(out, "arm,x_mm,y_mm,energy_keV,toa_ns,n_pixels")?;
    for c in clusters {
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{},{}",
            c.arm.as_str(),
            c.x_mm,
            c.y_mm,
            c.energy_kev,
            c.toa_ns,
            c.n_pixels
        )?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{synthesize_hits, Deposit, DetectorSpec, ResponseModel, TimingModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn event(energy_kev: f64) -> ClusterEvent {
        ClusterEvent {
            arm: Arm::Signal,
            x_mm: 1.0,
            y_mm: 1.0,
            energy_kev,
            toa_ns: 0.0,
            n_pixels: 1,
            tot_sum_ns: 0,
            within_cutoff: energy_kev < 12.0,
        }
    }

    #[test]
    fn band_edges() {
        let sel = Selection::default();
        assert!(!sel.accepts(&event(15.0)));
        assert!(sel.accepts(&event(7.5)));
        assert!(!Selection::PixelCutoff.accepts(&event(15.0)));
        assert!(Selection::PixelCutoff.accepts(&event(7.5)));
        let kept = select_spdc_singles(&[event(3.0), event(7.5), event(15.0)], &sel);
        assert_eq!(kept.len(), 1);
    }

    // Pass fractions of mono-energetic photons through the full response,
    // clustering and energy band.
    fn pass_fraction(energy: f64, n: usize, seed: u64) -> f64 {
        let spec = DetectorSpec {
            hot_pixel_fraction: 0.0,
            ..DetectorSpec::default()
        };
        let (layout, calib) = spec.build(seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hits = Vec::new();
        for i in 0..n {
            let d = Deposit {
                x_mm: rng.random_range(1.0..27.0),
                y_mm: rng.random_range(1.0..27.0),
                energy_kev: energy,
                time_ns: i as f64 * 10_000.0,
            };
            hits.extend(
                synthesize_hits(
                    &d,
                    &layout,
                    &calib,
                    &ResponseModel::default(),
                    &TimingModel::default(),
                    &mut rng,
                )
                .unwrap(),
            );
        }
        hits.sort();
        let clusters = cluster(&hits, &layout, &calib, 100.0).unwrap();
        select_spdc_singles(&clusters, &Selection::default()).len() as f64 / n as f64
    }

    #[test]
    fn band_suppresses_pump_by_gaussian_tail() {
        let sigma = 2.0 / crate::detector::FWHM_PER_SIGMA;
        // Leakage of the 15 keV line below 11 keV for a Gaussian response.
        let tail = Normal::new(15.0, sigma).unwrap().cdf(11.0);
        let n = 100_000;
        let pump = pass_fraction(15.0, n, 1);
        // Allow Poisson room over the tiny tail expectation.
        assert!(pump * n as f64 <= tail * n as f64 + 5.0, "pump pass {pump}");
        let spdc = pass_fraction(7.5, 20_000, 2);
        let expected = Normal::new(7.5, sigma).unwrap();
        let inside = expected.cdf(11.0) - expected.cdf(4.0);
        assert!((spdc - inside).abs() < 0.01, "spdc pass {spdc}");
    }

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let bad = PipelineConfig {
            reorder_buffer: 0,
            ..PipelineConfig::default()
        };
        assert!(bad.validate().is_err());
        let json = r#"{"selection":{"mode":"pixel_cutoff"}}"#;
        let cfg: PipelineConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.selection, Selection::PixelCutoff);
    }

    #[test]
    fn cluster_csv() {
        let mut buf = Vec::new();
        write_clusters(&mut buf, &[event(7.5)], None).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(
            s.lines().next(),
            Some("arm,x_mm,y_mm,energy_keV,toa_ns,n_pixels")
        );
        assert_eq!(
            s.lines().nth(1),
            Some("signal,1.000000,1.000000,7.500000,0,1")
        );
    }
}
