//! Correlation images of the two arms, the detuning-spread correction of
//! idler positions, and the geometric maps relating the arms.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coincidence::PairRecord;
use crate::detector::{Arm, DetectorLayout, PHYSICAL_SLOTS};
use crate::error::{Error, Result};
use crate::fit::{circle_fit, fit_edge, line_fit_rms, CircleFit};
use crate::kinematics::{conjugate_radius, ExperimentGeometry};
use crate::metadata::OutputMeta;

/// Count image on the physical slot grid, optionally rebinned.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationImage {
    pub arm: Arm,
    pub nx: usize,
    pub ny: usize,
    /// Physical slots merged per bin along each axis.
    pub rebin: usize,
    pub bin_mm: f64,
    pub exposure_hours: f64,
    pub counts: Vec<u64>,
}

impl CorrelationImage {
    pub fn new(arm: Arm, pitch_mm: f64, rebin: usize, exposure_hours: f64) -> Result<Self> {
        if rebin == 0 || rebin > PHYSICAL_SLOTS {
            return Err(Error::Config(format!("invalid rebin factor {rebin}")));
        }
        let n = PHYSICAL_SLOTS.div_ceil(rebin);
        Ok(Self {
            arm,
            nx: n,
            ny: n,
            rebin,
            bin_mm: pitch_mm * rebin as f64,
            exposure_hours,
            counts: vec![0; n * n],
        })
    }

    /// Bin holding a physical point; points on the far edge fall in the last bin.
    pub fn bin_of(&self, x_mm: f64, y_mm: f64) -> (usize, usize) {
        let idx = |v: f64, n: usize| -> usize {
            let k = (v / self.bin_mm + 1e-9).floor();
            (k.max(0.0) as usize).min(n - 1)
        };
        (idx(x_mm, self.nx), idx(y_mm, self.ny))
    }

    pub fn add(&mut self, x_mm: f64, y_mm: f64) {
        let (ix, iy) = self.bin_of(x_mm, y_mm);
        self.counts[iy * self.nx + ix] += 1;
    }

    pub fn get(&self, ix: usize, iy: usize) -> u64 {
        self.counts[iy * self.nx + ix]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            (ix as f64 + 0.5) * self.bin_mm,
            (iy as f64 + 0.5) * self.bin_mm,
        )
    }

    /// Bins made only of the empty halves of the double-width pixels.
    pub fn is_gap_bin(&self, ix: usize, iy: usize) -> bool {
        let all_gap = |i: usize| {
            (i * self.rebin..((i + 1) * self.rebin).min(PHYSICAL_SLOTS))
                .all(DetectorLayout::is_gap_slot)
        };
        all_gap(ix) || all_gap(iy)
    }

    fn merge(mut self, other: &Self) -> Self {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self
    }

    /// Display orientation: optional 180 degree rotation followed by a
    /// left-right mirror.
    pub fn transformed(&self, rotate_180: bool, mirror: bool) -> Self {
        let mut out = self.clone();
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let (mut sx, mut sy) = (ix, iy);
                if rotate_180 {
                    sx = self.nx - 1 - sx;
                    sy = self.ny - 1 - sy;
                }
                if mirror {
                    sx = self.nx - 1 - sx;
                }
                out.counts[iy * self.nx + ix] = self.get(sx, sy);
            }
        }
        out
    }

    /// 16-bit binary PGM scaled so the fullest bin is white.
    pub fn write_pgm<W: Write>(&self, out: W, meta: Option<&OutputMeta>) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(out);
        writeln!(out, "P5")?;
        if let Some(meta) = meta {
            writeln!(out, "{}", meta.header_line())?;
        }
        writeln!(
            out,
            "# arm={} bin_mm={} exposure_h={}",
            self.arm.as_str(),
            self.bin_mm,
            self.exposure_hours
        )?;
        writeln!(out, "{} {}", self.nx, self.ny)?;
        writeln!(out, "65535")?;
        let max = self.counts.iter().copied().max().unwrap_or(0);
        for &c in &self.counts {
            let v = if max == 0 {
                0u16
            } else {
                ((c as f64 / max as f64) * 65535.0).round() as u16
            };
            out.write_all(&v.to_be_bytes())?;
        }
        out.flush()
    }

    /// Sparse CSV of all nonzero bins and all gap bins.
    pub fn write_csv<W: Write>(&self, out: W, meta: Option<&OutputMeta>) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(out);
        if let Some(meta) = meta {
            writeln!(out, "{}", meta.header_line())?;
        }
        writeln!(
            out,
            "# arm={} nx={} ny={} bin_mm={} exposure_h={}",
            self.arm.as_str(),
            self.nx,
            self.ny,
            self.bin_mm,
            self.exposure_hours
        )?;
        writeln!(out, "ix,iy,count,gap")?;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let c = self.get(ix, iy);
                let gap = self.is_gap_bin(ix, iy);
                if c > 0 || gap {
                    writeln!(out, "{ix},{iy},{c},{}", u8::from(gap))?;
                }
            }
        }
        out.flush()
    }
}

/// Signal and idler images of passed pairs. Both totals equal the number of
/// passed pairs.
pub fn accumulate(
    pairs: &[PairRecord],
    pitch_mm: f64,
    rebin: usize,
    exposure_hours: f64,
) -> Result<(CorrelationImage, CorrelationImage)> {
    let blank = (
        CorrelationImage::new(Arm::Signal, pitch_mm, rebin, exposure_hours)?,
        CorrelationImage::new(Arm::Idler, pitch_mm, rebin, exposure_hours)?,
    );
    Ok(pairs
        .par_chunks(4096)
        .map(|chunk| {
            let mut imgs = blank.clone();
            for p in chunk.iter().filter(|p| p.passed) {
                imgs.0.add(p.xs_mm, p.ys_mm);
                imgs.1.add(p.xi_mm, p.yi_mm);
            }
            imgs
        })
        .reduce(|| blank.clone(), |a, b| (a.0.merge(&b.0), a.1.merge(&b.1))))
}

/// Idler position rescaled to the nominal detuning: the emission angle is
/// multiplied by `nominal / calculated`, the azimuth kept.
pub fn correct_idler(
    idler_mm: (f64, f64),
    detuning_calc: f64,
    geom: &ExperimentGeometry,
    center_mm: (f64, f64),
) -> Result<(f64, f64)> {
    if !(detuning_calc > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "calculated detuning {detuning_calc} rad is not positive"
        )));
    }
    let (dx, dy) = (idler_mm.0 - center_mm.0, idler_mm.1 - center_mm.1);
    let r = dx.hypot(dy);
    if r == 0.0 {
        return Ok(idler_mm);
    }
    let l = geom.crystal_to_detector_mm;
    let alpha = (r / l).atan() * geom.detuning_nominal / detuning_calc;
    let scale = l * alpha.tan() / r;
    Ok((center_mm.0 + dx * scale, center_mm.1 + dy * scale))
}

/// Passed pairs get corrected idler positions; everything else is copied.
pub fn correct_pairs(
    pairs: &[PairRecord],
    geom: &ExperimentGeometry,
    center_mm: (f64, f64),
) -> Result<Vec<PairRecord>> {
    pairs
        .iter()
        .map(|p| {
            if !p.passed {
                return Ok(*p);
            }
            let (xi, yi) = correct_idler((p.xi_mm, p.yi_mm), p.detuning_rad, geom, center_mm)?;
            Ok(PairRecord {
                xi_mm: xi,
                yi_mm: yi,
                ..*p
            })
        })
        .collect()
}

/// Ring radius (mm) at which photons of each energy land.
pub fn energy_contours(geom: &ExperimentGeometry, energies_kev: &[f64]) -> Result<Vec<f64>> {
    let ep = geom.pump_energy_kev;
    energies_kev
        .iter()
        .map(|&e| {
            if !(e > 0.0 && e < ep) {
                return Err(Error::Domain(format!(
                    "contour energy {e} keV outside (0, {ep}) keV"
                )));
            }
            let alpha = (geom.coupling() * (ep - e) / e).sqrt();
            Ok(geom.crystal_to_detector_mm * alpha.tan())
        })
        .collect()
}

/// Straight lines of a square grid, sampled densely.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_range_mm: (f64, f64),
    pub y_range_mm: (f64, f64),
    pub spacing_mm: f64,
    pub samples_per_line: usize,
}

impl GridSpec {
    /// Horizontal then vertical lines, each a list of points.
    pub fn lines(&self) -> Result<Vec<Vec<(f64, f64)>>> {
        if !(self.spacing_mm > 0.0) || self.samples_per_line < 2 {
            return Err(Error::Config(
                "grid needs positive spacing and two samples per line".into(),
            ));
        }
        let steps = |(a, b): (f64, f64)| -> Vec<f64> {
            let n = ((b - a) / self.spacing_mm + 1e-9).floor() as usize;
            (0..=n).map(|k| a + k as f64 * self.spacing_mm).collect()
        };
        let sample = |(a, b): (f64, f64)| -> Vec<f64> {
            (0..self.samples_per_line)
                .map(|k| a + (b - a) * k as f64 / (self.samples_per_line - 1) as f64)
                .collect()
        };
        let mut lines = Vec::new();
        for y in steps(self.y_range_mm) {
            lines.push(
                sample(self.x_range_mm)
                    .into_iter()
                    .map(|x| (x, y))
                    .collect(),
            );
        }
        for x in steps(self.x_range_mm) {
            lines.push(
                sample(self.y_range_mm)
                    .into_iter()
                    .map(|y| (x, y))
                    .collect(),
            );
        }
        Ok(lines)
    }
}

/// Map signal-arm points to where their partners land: radius through
/// [`conjugate_radius`], azimuth rotated by pi.
pub fn grid_mapping(
    geom: &ExperimentGeometry,
    center_mm: (f64, f64),
    points: &[(f64, f64)],
) -> Result<Vec<(f64, f64)>> {
    points
        .iter()
        .map(|&(x, y)| {
            let (dx, dy) = (x - center_mm.0, y - center_mm.1);
            let r = dx.hypot(dy);
            let rc = conjugate_radius(r, geom)?;
            Ok((center_mm.0 - dx / r * rc, center_mm.1 - dy / r * rc))
        })
        .collect()
}

/// Residuals of the best line and best circle through a point set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureTest {
    pub line_rms: f64,
    pub circle: CircleFit,
}

impl CurvatureTest {
    pub fn ratio(&self) -> f64 {
        self.line_rms / self.circle.rms.max(1e-300)
    }
}

pub fn curvature_test(points: &[(f64, f64)]) -> Result<CurvatureTest> {
    Ok(CurvatureTest {
        line_rms: line_fit_rms(points)?,
        circle: circle_fit(points)?,
    })
}

/// Where to measure an edge in an image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EdgeSpec {
    /// Circular edge about `center_mm`, profiled over radius within an
    /// azimuth sector.
    Radial {
        center_mm: (f64, f64),
        r_range_mm: (f64, f64),
        azimuth_range_rad: (f64, f64),
        step_mm: f64,
    },
    /// Straight edge across x, profiled over the band `y_range_mm`.
    Linear {
        x_range_mm: (f64, f64),
        y_range_mm: (f64, f64),
        step_mm: f64,
    },
}

/// Edge-spread sigma (mm): an error-function edge fitted to the mean count
/// per bin along the profile coordinate.
pub fn sharpness_metric(image: &CorrelationImage, edge: &EdgeSpec) -> Result<f64> {
    let (lo, hi, step) = match *edge {
        EdgeSpec::Radial {
            r_range_mm,
            step_mm,
            ..
        } => (r_range_mm.0, r_range_mm.1, step_mm),
        EdgeSpec::Linear {
            x_range_mm,
            step_mm,
            ..
        } => (x_range_mm.0, x_range_mm.1, step_mm),
    };
    if !(step > 0.0 && hi > lo) {
        return Err(Error::Config(
            "edge profile needs a positive step and range".into(),
        ));
    }
    let n = ((hi - lo) / step).ceil() as usize;
    let mut sum = vec![0.0; n];
    let mut bins = vec![0.0; n];
    for iy in 0..image.ny {
        for ix in 0..image.nx {
            if image.is_gap_bin(ix, iy) {
                continue;
            }
            let (x, y) = image.bin_center(ix, iy);
            let coord = match *edge {
                EdgeSpec::Radial {
                    center_mm,
                    azimuth_range_rad: (a0, a1),
                    ..
                } => {
                    let phi = (y - center_mm.1)
                        .atan2(x - center_mm.0)
                        .rem_euclid(std::f64::consts::TAU);
                    if phi < a0 || phi > a1 {
                        continue;
                    }
                    (x - center_mm.0).hypot(y - center_mm.1)
                }
                EdgeSpec::Linear { y_range_mm, .. } => {
                    if y < y_range_mm.0 || y > y_range_mm.1 {
                        continue;
                    }
                    x
                }
            };
            let k = ((coord - lo) / step).floor();
            if k >= 0.0 && (k as usize) < n {
                sum[k as usize] += image.get(ix, iy) as f64;
                bins[k as usize] += 1.0;
            }
        }
    }
    let (mut xs, mut ys, mut ws) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..n {
        if bins[k] > 0.0 {
            let mean = sum[k] / bins[k];
            xs.push(lo + (k as f64 + 0.5) * step);
            ys.push(mean);
            // Poisson variance of a mean over bins[k] bins.
            ws.push(bins[k] / mean.max(1.0 / bins[k]));
        }
    }
    if xs.len() < 8 {
        return Err(Error::Fit(
            "edge profile has too few populated points".into(),
        ));
    }
    let (guess, width) = edge_start(&xs, &ys, step);
    Ok(fit_edge(&xs, &ys, &ws, guess, width)?.width)
}

/// Starting edge position and width from a box-smoothed profile: the
/// midpoint crossing and half the 16%-84% rise distance.
fn edge_start(xs: &[f64], ys: &[f64], step: f64) -> (f64, f64) {
    let n = ys.len();
    let half = (n / 20).max(2);
    let smooth: Vec<f64> = (0..n)
        .map(|k| {
            let window = &ys[k.saturating_sub(half)..(k + half + 1).min(n)];
            window.iter().sum::<f64>() / window.len() as f64
        })
        .collect();
    let q = (n / 4).max(1);
    let lo = smooth[..q].iter().sum::<f64>() / q as f64;
    let hi = smooth[n - q..].iter().sum::<f64>() / q as f64;
    // Where the smoothed profile crosses a fraction of the rise.
    let crossing = |f: f64| -> Option<f64> {
        let level = lo + f * (hi - lo);
        (1..n)
            .filter(|&k| {
                (smooth[k - 1] - level) * (smooth[k] - level) <= 0.0 && smooth[k] != smooth[k - 1]
            })
            .map(|k| {
                let t = (level - smooth[k - 1]) / (smooth[k] - smooth[k - 1]);
                xs[k - 1] + t * (xs[k] - xs[k - 1])
            })
            .min_by(|a, b| {
                let mid = 0.5 * (xs[0] + xs[n - 1]);
                (a - mid).abs().total_cmp(&(b - mid).abs())
            })
    };
    let edge = crossing(0.5).unwrap_or(0.5 * (xs[0] + xs[n - 1]));
    let width = match (crossing(0.16), crossing(0.84)) {
        (Some(a), Some(b)) => 0.5 * (b - a).abs(),
        _ => 2.0 * step,
    };
    (edge, width.max(step))
}
