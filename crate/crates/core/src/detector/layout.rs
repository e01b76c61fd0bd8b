use std::io::{Read, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hit::RawHit;
use crate::kinematics::ExperimentGeometry;
use crate::metadata::OutputMeta;

pub const CHIP_SIZE: u16 = 256;
/// Pixels per side of the logical 2x2-chip grid.
pub const LOGICAL_SIZE: u16 = 512;
/// Slots per side once each double-width strip is split into two pitches.
pub const PHYSICAL_SLOTS: usize = 514;
/// Logical index of the first double-width pixel on each axis.
const GAP_FIRST: u16 = 255;
const MAX_HOT_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Signal,
    Idler,
}

impl Arm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Arm::Signal => "signal",
            Arm::Idler => "idler",
        }
    }
}

impl std::str::FromStr for Arm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "signal" => Ok(Arm::Signal),
            "idler" => Ok(Arm::Idler),
            other => Err(format!("unknown arm {other:?}")),
        }
    }
}

/// Quad-chip pixel detector with double-width pixels along the chip seams.
///
/// Chips are numbered 1..=4 row-major: chips 1 and 2 cover rows 0..256,
/// chips 3 and 4 rows 256..512. Logical columns and rows 255 and 256 are
/// 2 pitches wide, so the physical extent is 514 pitches per side.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorLayout {
    pub pixel_pitch_mm: f64,
    pub chip_roles: [Arm; 4],
    hot: Vec<bool>,
    hot_count: usize,
}

impl Default for DetectorLayout {
    fn default() -> Self {
        Self::new(0.055)
    }
}

impl DetectorLayout {
    /// Upper chips record idlers, lower chips record signals.
    pub fn new(pixel_pitch_mm: f64) -> Self {
        Self {
            pixel_pitch_mm,
            chip_roles: [Arm::Idler, Arm::Idler, Arm::Signal, Arm::Signal],
            hot: vec![false; LOGICAL_SIZE as usize * LOGICAL_SIZE as usize],
            hot_count: 0,
        }
    }

    pub fn with_hot_pixels<I>(mut self, pixels: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u16, u16)>,
    {
        for (col, row) in pixels {
            check_index(col as i64, row as i64)?;
            let i = flat(col, row);
            if !self.hot[i] {
                self.hot[i] = true;
                self.hot_count += 1;
            }
        }
        if self.hot_fraction() > MAX_HOT_FRACTION {
            return Err(Error::Config(format!(
                "hot-pixel mask covers {:.3}% of pixels (limit 1%)",
                100.0 * self.hot_fraction()
            )));
        }
        Ok(self)
    }

    /// Mask a uniformly random `fraction` of the pixels.
    pub fn with_random_hot_pixels<R: Rng + ?Sized>(
        self,
        fraction: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let total = LOGICAL_SIZE as usize * LOGICAL_SIZE as usize;
        let n = (fraction * total as f64).round() as usize;
        if n > total {
            return Err(Error::Config(format!("hot fraction {fraction} exceeds 1")));
        }
        let mut picked: Vec<usize> = sample(rng, total, n).into_iter().collect();
        picked.sort_unstable();
        let pixels = picked.into_iter().map(|i| {
            (
                (i % LOGICAL_SIZE as usize) as u16,
                (i / LOGICAL_SIZE as usize) as u16,
            )
        });
        self.with_hot_pixels(pixels)
    }

    pub fn hot_fraction(&self) -> f64 {
        self.hot_count as f64 / self.hot.len() as f64
    }

    pub fn hot_pixels(&self) -> impl Iterator<Item = (u16, u16)> + '_ {
        self.hot
            .iter()
            .enumerate()
            .filter(|(_, &h)| h)
            .map(|(i, _)| {
                (
                    (i % LOGICAL_SIZE as usize) as u16,
                    (i / LOGICAL_SIZE as usize) as u16,
                )
            })
    }

    pub fn is_masked(&self, col: u16, row: u16) -> bool {
        col < LOGICAL_SIZE && row < LOGICAL_SIZE && self.hot[flat(col, row)]
    }

    pub fn chip_of(col: u16, row: u16) -> u8 {
        1 + (col / CHIP_SIZE) as u8 + 2 * (row / CHIP_SIZE) as u8
    }

    pub fn arm_of_chip(&self, chip: u8) -> Arm {
        self.chip_roles[(chip.clamp(1, 4) - 1) as usize]
    }

    /// Physical side length of the sensor (mm).
    pub fn extent_mm(&self) -> f64 {
        PHYSICAL_SLOTS as f64 * self.pixel_pitch_mm
    }

    /// Lower and upper edge (mm) of logical pixel `i` along one axis.
    pub fn axis_bounds(&self, i: u16) -> (f64, f64) {
        let p = self.pixel_pitch_mm;
        let i = i as f64;
        match i as u16 {
            0..GAP_FIRST => (i * p, (i + 1.0) * p),
            GAP_FIRST => (i * p, (i + 2.0) * p),
            256 => ((i + 1.0) * p, (i + 3.0) * p),
            _ => ((i + 2.0) * p, (i + 3.0) * p),
        }
    }

    pub fn axis_center(&self, i: u16) -> f64 {
        let (lo, hi) = self.axis_bounds(i);
        0.5 * (lo + hi)
    }

    /// Logical index of the pixel covering physical coordinate `x` (mm).
    pub fn axis_index(&self, x: f64) -> Option<u16> {
        let p = self.pixel_pitch_mm;
        if !(x >= 0.0 && x < self.extent_mm()) {
            return None;
        }
        let slot = (x / p).floor() as i64;
        let i = match slot {
            s if s < GAP_FIRST as i64 => s,
            255 | 256 => 255,
            257 | 258 => 256,
            s => s - 2,
        };
        Some(i.min(LOGICAL_SIZE as i64 - 1) as u16)
    }

    /// Physical pixel-center coordinates (mm) of a logical pixel.
    pub fn logical_to_physical(&self, col: u16, row: u16) -> Result<(f64, f64)> {
        check_index(col as i64, row as i64)?;
        Ok((self.axis_center(col), self.axis_center(row)))
    }

    /// Piecewise-linear extension of [`Self::logical_to_physical`] to fractional indices.
    pub fn fractional_to_physical(&self, col: f64, row: f64) -> (f64, f64) {
        (self.axis_fractional(col), self.axis_fractional(row))
    }

    fn axis_fractional(&self, v: f64) -> f64 {
        let max = (LOGICAL_SIZE - 1) as f64;
        let v = v.clamp(0.0, max);
        let i = v.floor().min(max - 1.0) as u16;
        let t = v - i as f64;
        let a = self.axis_center(i);
        let b = self.axis_center(i + 1);
        a + t * (b - a)
    }

    pub fn pixel_at(&self, x: f64, y: f64) -> Option<(u16, u16)> {
        Some((self.axis_index(x)?, self.axis_index(y)?))
    }

    /// Diffracted-pump impact point (mm); the configured center is logical.
    pub fn ring_center_mm(&self, geom: &ExperimentGeometry) -> (f64, f64) {
        self.fractional_to_physical(geom.ring_center_px.0, geom.ring_center_px.1)
    }

    /// Slots of the 514-wide image grid that no pixel center falls into.
    ///
    /// Logical 255 and 256 are centered on slots 256 and 258, so the two
    /// remaining halves of the double-width strips (255 and 257) stay empty
    /// when binning raw pixel centers.
    pub fn is_gap_slot(slot: usize) -> bool {
        slot == 255 || slot == 257
    }

    pub fn load_hot_mask(mut self, path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let pixels = read_mask(file, path)?;
        self.hot.iter_mut().for_each(|h| *h = false);
        self.hot_count = 0;
        self.with_hot_pixels(pixels)
    }

    pub fn write_hot_mask<W: Write>(
        &self,
        out: W,
        meta: Option<&OutputMeta>,
    ) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(out);
        if let Some(meta) = meta {
            writeln!(out, "{}", meta.header_line())?;
        }
        writeln!(out, "col,row")?;
        for (c, r) in self.hot_pixels() {
            writeln!(out, "{c},{r}")?;
        }
        out.flush()
    }
}

fn read_mask<R: Read>(input: R, path: &Path) -> Result<Vec<(u16, u16)>> {
    #[derive(Deserialize)]
    struct Row {
        col: u16,
        row: u16,
    }
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    rdr.deserialize::<Row>()
        .map(|r| r.map(|r| (r.col, r.row)).map_err(|e| Error::csv(path, e)))
        .collect()
}

fn flat(col: u16, row: u16) -> usize {
    row as usize * LOGICAL_SIZE as usize + col as usize
}

fn check_index(col: i64, row: i64) -> Result<()> {
    let n = LOGICAL_SIZE as i64;
    if (0..n).contains(&col) && (0..n).contains(&row) {
        Ok(())
    } else {
        Err(Error::Index {
            col,
            row,
            size: LOGICAL_SIZE as usize,
        })
    }
}

/// Drop hits recorded on masked pixels, preserving order.
pub fn apply_hot_mask(
    hits: impl IntoIterator<Item = RawHit>,
    layout: &DetectorLayout,
) -> Vec<RawHit> {
    hits.into_iter()
        .filter(|h| !layout.is_masked(h.col, h.row))
        .collect()
}
