use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layout::LOGICAL_SIZE;
use crate::error::{Error, Result};
use crate::hit::TOT_QUANTUM_NS;
use crate::metadata::OutputMeta;

/// Converts a FWHM to the standard deviation of a Gaussian.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// Energy at which the default per-pixel cutoff sits: halfway between the
/// expected 9 keV and 15 keV responses.
const CUTOFF_ENERGY_KEV: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelCalibration {
    pub gain_ns_per_kev: f64,
    pub offset_ns: f64,
    /// Multiplicative gain factor; the map averages to one.
    pub variation: f64,
    /// Raw-ToT threshold separating the down-converted band from the pump band.
    pub cutoff_ns: f64,
}

impl PixelCalibration {
    pub fn expected_tot(&self, energy_kev: f64) -> f64 {
        self.offset_ns + self.gain_ns_per_kev * self.variation * energy_kev
    }

    pub fn energy(&self, tot_ns: f64) -> f64 {
        ((tot_ns - self.offset_ns) / (self.gain_ns_per_kev * self.variation)).max(0.0)
    }
}

/// Linear per-pixel ToT response `tot = offset + gain * variation * E`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToTCalibration {
    pub gain_ns_per_kev: f64,
    pub offset_ns: f64,
    pub energy_resolution_fwhm_kev: f64,
    pub tot_quantum_ns: u32,
    /// Use the global gain/offset for pixels missing from `pixels`.
    pub allow_global_fallback: bool,
    pixels: Vec<Option<PixelCalibration>>,
}

impl Default for ToTCalibration {
    fn default() -> Self {
        Self::uniform(50.0, 50.0, 2.0)
    }
}

impl ToTCalibration {
    /// Every pixel shares the same gain and offset.
    pub fn uniform(gain_ns_per_kev: f64, offset_ns: f64, fwhm_kev: f64) -> Self {
        let mut c = Self {
            gain_ns_per_kev,
            offset_ns,
            energy_resolution_fwhm_kev: fwhm_kev,
            tot_quantum_ns: TOT_QUANTUM_NS,
            allow_global_fallback: true,
            pixels: Vec::new(),
        };
        let global = c.global();
        c.pixels = vec![Some(global); LOGICAL_SIZE as usize * LOGICAL_SIZE as usize];
        c
    }

    /// Draw a Gaussian gain-variation map with mean one and the given spread.
    pub fn with_variation<R: Rng + ?Sized>(mut self, spread: f64, rng: &mut R) -> Result<Self> {
        if spread == 0.0 {
            return Ok(self);
        }
        let dist = Normal::new(1.0, spread)
            .map_err(|e| Error::Config(format!("gain spread {spread}: {e}")))?;
        for p in self.pixels.iter_mut().flatten() {
            // Keep the factor well away from zero so the inversion stays finite.
            p.variation = dist.sample(rng).max(0.2);
            p.cutoff_ns = p.expected_tot(CUTOFF_ENERGY_KEV);
        }
        Ok(self)
    }

    fn global(&self) -> PixelCalibration {
        let mut p = PixelCalibration {
            gain_ns_per_kev: self.gain_ns_per_kev,
            offset_ns: self.offset_ns,
            variation: 1.0,
            cutoff_ns: 0.0,
        };
        p.cutoff_ns = p.expected_tot(CUTOFF_ENERGY_KEV);
        p
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain_ns_per_kev > 0.0) {
            return Err(Error::Config("ToT gain must be positive".into()));
        }
        if !(self.energy_resolution_fwhm_kev >= 0.0) {
            return Err(Error::Config(
                "energy resolution must be non-negative".into(),
            ));
        }
        if self.tot_quantum_ns == 0 {
            return Err(Error::Config("ToT quantum must be positive".into()));
        }
        if self
            .pixels
            .iter()
            .flatten()
            .any(|p| !(p.gain_ns_per_kev > 0.0 && p.variation > 0.0))
        {
            return Err(Error::Config(
                "per-pixel gain and variation must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn sigma_kev(&self) -> f64 {
        self.energy_resolution_fwhm_kev / FWHM_PER_SIGMA
    }

    pub fn pixel(&self, col: u16, row: u16) -> Result<PixelCalibration> {
        let entry = if col < LOGICAL_SIZE && row < LOGICAL_SIZE {
            self.pixels
                .get(row as usize * LOGICAL_SIZE as usize + col as usize)
                .copied()
                .flatten()
        } else {
            None
        };
        match entry {
            Some(p) => Ok(p),
            None if self.allow_global_fallback => Ok(self.global()),
            None => Err(Error::CalibrationMissing { col, row }),
        }
    }

    /// Calibrated energy (keV) of a raw ToT reading; clamps at zero.
    pub fn tot_to_energy(&self, tot_ns: f64, col: u16, row: u16) -> Result<f64> {
        Ok(self.pixel(col, row)?.energy(tot_ns))
    }

    /// Expected ToT for `energy_kev` rounded to the readout quantum.
    pub fn energy_to_tot(&self, energy_kev: f64, col: u16, row: u16) -> Result<u32> {
        let tot = self.pixel(col, row)?.expected_tot(energy_kev);
        Ok(self.quantize(tot))
    }

    pub fn quantize(&self, tot_ns: f64) -> u32 {
        let q = self.tot_quantum_ns as f64;
        ((tot_ns / q).round().max(0.0) * q) as u32
    }

    pub fn cutoff_ns(&self, col: u16, row: u16) -> Result<f64> {
        Ok(self.pixel(col, row)?.cutoff_ns)
    }

    pub fn load(path: &Path, template: &ToTCalibration) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(file, path, template)
    }

    /// Per-pixel table; pixels absent from the file fall back to `template`'s
    /// globals only if `template.allow_global_fallback` is set.
    pub fn read<R: Read>(input: R, path: &Path, template: &ToTCalibration) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            col: u16,
            row: u16,
            #[serde(rename = "gain_ns_per_keV")]
            gain: f64,
            offset_ns: f64,
            variation: f64,
            cutoff_ns: f64,
        }
        let mut cal = ToTCalibration {
            pixels: vec![None; LOGICAL_SIZE as usize * LOGICAL_SIZE as usize],
            ..template.clone()
        };
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(input);
        for rec in rdr.deserialize::<Row>() {
            let r = rec.map_err(|e| Error::csv(path, e))?;
            if r.col >= LOGICAL_SIZE || r.row >= LOGICAL_SIZE {
                return Err(Error::Index {
                    col: r.col as i64,
                    row: r.row as i64,
                    size: LOGICAL_SIZE as usize,
                });
            }
            cal.pixels[r.row as usize * LOGICAL_SIZE as usize + r.col as usize] =
                Some(PixelCalibration {
                    gain_ns_per_kev: r.gain,
                    offset_ns: r.offset_ns,
                    variation: r.variation,
                    cutoff_ns: r.cutoff_ns,
                });
        }
        cal.validate()?;
        Ok(cal)
    }

    pub fn write<W: Write>(&self, out: W, meta: Option<&OutputMeta>) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(out);
        if let Some(meta) = meta {
            writeln!(out, "{}", meta.header_line())?;
        }
        writeln!(out, "col,row,gain_ns_per_keV,offset_ns,variation,cutoff_ns")?;
        for (i, p) in self.pixels.iter().enumerate() {
            if let Some(p) = p {
                let col = i % LOGICAL_SIZE as usize;
                let row = i / LOGICAL_SIZE as usize;
                writeln!(
                    out,
                    "{col},{row},{},{},{},{}",
                    p.gain_ns_per_kev, p.offset_ns, p.variation, p.cutoff_ns
                )?;
            }
        }
        out.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn offset_maps_to_zero() {
        let c = ToTCalibration::default();
        assert_eq!(c.tot_to_energy(c.offset_ns, 3, 4).unwrap(), 0.0);
        assert_eq!(c.tot_to_energy(0.0, 3, 4).unwrap(), 0.0);
    }

    #[test]
    fn quantized_round_trip() {
        let c = ToTCalibration::default();
        let tot = c.energy_to_tot(7.5, 10, 10).unwrap();
        assert_eq!(tot % 25, 0);
        let e = c.tot_to_energy(tot as f64, 10, 10).unwrap();
        assert!((e - 7.5).abs() <= 0.5 * 25.0 / c.gain_ns_per_kev + 1e-12);
    }

    #[test]
    fn variation_scales_energy() {
        let mut c = ToTCalibration::default();
        c.pixels[0].as_mut().unwrap().variation = 0.9;
        c.pixels[1].as_mut().unwrap().variation = 1.1;
        let a = c.tot_to_energy(500.0, 0, 0).unwrap();
        let b = c.tot_to_energy(500.0, 1, 0).unwrap();
        assert!((a / b - 11.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn missing_pixel_without_fallback() {
        let template = ToTCalibration {
            allow_global_fallback: false,
            ..ToTCalibration::default()
        };
        let csv = "col,row,gain_ns_per_keV,offset_ns,variation,cutoff_ns\n1,2,50,50,1.0,650\n";
        let c = ToTCalibration::read(csv.as_bytes(), Path::new("cal.csv"), &template).unwrap();
        assert!(c.tot_to_energy(300.0, 1, 2).is_ok());
        assert!(matches!(
            c.tot_to_energy(300.0, 2, 2),
            Err(Error::CalibrationMissing { col: 2, row: 2 })
        ));
        let fallback = ToTCalibration::default();
        assert!(fallback.allow_global_fallback);
        let c = ToTCalibration::read(csv.as_bytes(), Path::new("cal.csv"), &fallback).unwrap();
        assert!(c.tot_to_energy(300.0, 2, 2).is_ok());
    }

    #[test]
    fn cutoff_between_bands() {
        let c = ToTCalibration::default();
        let p = c.pixel(7, 7).unwrap();
        assert!(p.cutoff_ns > p.expected_tot(9.0) && p.cutoff_ns < p.expected_tot(15.0));
    }

    #[test]
    fn write_read_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = ToTCalibration::default()
            .with_variation(0.05, &mut rng)
            .unwrap();
        let mut buf = Vec::new();
        c.write(&mut buf, None).unwrap();
        let back = ToTCalibration::read(buf.as_slice(), Path::new("x"), &c).unwrap();
        for (col, row) in [(0, 0), (511, 511), (255, 256)] {
            let (a, b) = (c.pixel(col, row).unwrap(), back.pixel(col, row).unwrap());
            assert_eq!(a, b);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn energy_nondecreasing_in_tot(
                variation in 0.5f64..1.5,
                t in 0.0f64..2000.0,
                dt in 0.0f64..500.0,
            ) {
                let mut c = ToTCalibration::default();
                c.pixels[0].as_mut().unwrap().variation = variation;
                let a = c.tot_to_energy(t, 0, 0).unwrap();
                let b = c.tot_to_energy(t + dt, 0, 0).unwrap();
                prop_assert!(b >= a);
            }
        }
    }
}
