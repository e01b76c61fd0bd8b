use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DetectorLayout, ResponseModel, ToTCalibration};
use crate::error::Result;

// Stream ids keep the detector draws independent of the event streams.
const HOT_MASK_STREAM: u64 = 0x4d41_534b;
const GAIN_MAP_STREAM: u64 = 0x4741_494e;

/// Serializable description of the detector; [`DetectorSpec::build`] turns it
/// into a layout and calibration, drawing any random maps from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSpec {
    pub pixel_pitch_mm: f64,
    pub tot_gain_ns_per_kev: f64,
    pub tot_offset_ns: f64,
    pub energy_resolution_fwhm_kev: f64,
    /// Standard deviation of the per-pixel multiplicative gain map.
    pub gain_spread: f64,
    /// Fraction of randomly chosen hot pixels (ignored when `hot_mask` is set).
    pub hot_pixel_fraction: f64,
    pub hot_mask: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub response: ResponseModel,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self {
            pixel_pitch_mm: 0.055,
            tot_gain_ns_per_kev: 50.0,
            tot_offset_ns: 50.0,
            energy_resolution_fwhm_kev: 2.0,
            gain_spread: 0.03,
            hot_pixel_fraction: 0.001,
            hot_mask: None,
            calibration: None,
            response: ResponseModel::default(),
        }
    }
}

impl DetectorSpec {
    /// Noise-free pixels: no sharing, no resolution smearing, no gain map,
    /// no hot pixels. Pixelation and ToT quantization remain.
    pub fn ideal() -> Self {
        Self {
            energy_resolution_fwhm_kev: 0.0,
            gain_spread: 0.0,
            hot_pixel_fraction: 0.0,
            response: ResponseModel::ideal(),
            ..Self::default()
        }
    }

    pub fn build(&self, seed: u64) -> Result<(DetectorLayout, ToTCalibration)> {
        let layout = DetectorLayout::new(self.pixel_pitch_mm);
        let layout = match &self.hot_mask {
            Some(path) => layout.load_hot_mask(path)?,
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(HOT_MASK_STREAM);
                layout.with_random_hot_pixels(self.hot_pixel_fraction, &mut rng)?
            }
        };
        let base = ToTCalibration::uniform(
            self.tot_gain_ns_per_kev,
            self.tot_offset_ns,
            self.energy_resolution_fwhm_kev,
        );
        let calib = match &self.calibration {
            Some(path) => ToTCalibration::load(path, &base)?,
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(GAIN_MAP_STREAM);
                base.with_variation(self.gain_spread, &mut rng)?
            }
        };
        calib.validate()?;
        Ok((layout, calib))
    }
}
