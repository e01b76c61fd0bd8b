use rand::Rng;
use serde::{Deserialize, Serialize};

use super::BiphotonTruth;
use crate::detector::Arm;
use crate::error::{Error, Result};

/// Rasterized transmission map placed in front of one detector arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MaskSpec", into = "MaskSpec")]
pub struct TransmissionMask {
    pub nx: usize,
    pub ny: usize,
    /// Physical position (mm) of the grid's lower corner.
    pub origin_mm: (f64, f64),
    /// Side length of one grid cell (mm).
    pub cell_mm: f64,
    pub target_arm: Arm,
    values: Vec<f64>,
}

impl TransmissionMask {
    pub fn from_values(
        nx: usize,
        ny: usize,
        origin_mm: (f64, f64),
        cell_mm: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != nx * ny {
            return Err(Error::Config(format!(
                "mask grid has {} values, expected {nx}x{ny}",
                values.len()
            )));
        }
        if !(cell_mm > 0.0) {
            return Err(Error::Config("mask cell size must be positive".into()));
        }
        if values.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Config(
                "transmission values must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            nx,
            ny,
            origin_mm,
            cell_mm,
            target_arm: Arm::Signal,
            values,
        })
    }

    /// Sample `t(x, y)` at cell centers.
    pub fn from_fn(
        nx: usize,
        ny: usize,
        origin_mm: (f64, f64),
        cell_mm: f64,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let x = origin_mm.0 + (i as f64 + 0.5) * cell_mm;
                let y = origin_mm.1 + (j as f64 + 0.5) * cell_mm;
                values.push(f(x, y));
            }
        }
        Self::from_values(nx, ny, origin_mm, cell_mm, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Transmission at a physical point; one outside the grid.
    pub fn transmission(&self, x: f64, y: f64) -> f64 {
        let i = ((x - self.origin_mm.0) / self.cell_mm).floor();
        let j = ((y - self.origin_mm.1) / self.cell_mm).floor();
        if i < 0.0 || j < 0.0 || i >= self.nx as f64 || j >= self.ny as f64 {
            return 1.0;
        }
        self.values[j as usize * self.nx + i as usize]
    }
}

/// Serialized form of a [`TransmissionMask`]: either an explicit grid or a
/// simple shape rasterized onto one.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskSpec {
    Grid {
        nx: usize,
        ny: usize,
        origin_mm: (f64, f64),
        cell_mm: f64,
        values: Vec<f64>,
        #[serde(default = "signal_arm")]
        target_arm: Arm,
    },
    /// Disk of transmission `t` (default opaque).
    Disk {
        center_mm: (f64, f64),
        radius_mm: f64,
        #[serde(default)]
        t: f64,
        #[serde(default = "default_cell")]
        cell_mm: f64,
    },
    /// Straight bar between two points with the given half width.
    Bar {
        from_mm: (f64, f64),
        to_mm: (f64, f64),
        half_width_mm: f64,
        #[serde(default)]
        t: f64,
        #[serde(default = "default_cell")]
        cell_mm: f64,
    },
    /// Annular knife edge around `center_mm`: transmission `inside` for
    /// radii below `radius_mm` and `outside` beyond, limited to `extent_mm`.
    RadialEdge {
        center_mm: (f64, f64),
        radius_mm: f64,
        inside: f64,
        outside: f64,
        extent_mm: f64,
        #[serde(default = "default_cell")]
        cell_mm: f64,
    },
}

fn signal_arm() -> Arm {
    Arm::Signal
}

fn default_cell() -> f64 {
    0.005
}

impl TryFrom<MaskSpec> for TransmissionMask {
    type Error = Error;

    fn try_from(spec: MaskSpec) -> Result<Self> {
        match spec {
            MaskSpec::Grid {
                nx,
                ny,
                origin_mm,
                cell_mm,
                values,
                target_arm,
            } => {
                let mut m = TransmissionMask::from_values(nx, ny, origin_mm, cell_mm, values)?;
                m.target_arm = target_arm;
                Ok(m)
            }
            MaskSpec::Disk {
                center_mm: (cx, cy),
                radius_mm,
                t,
                cell_mm,
            } => {
                let n = (2.0 * radius_mm / cell_mm).ceil() as usize + 2;
                let origin = (cx - n as f64 * cell_mm / 2.0, cy - n as f64 * cell_mm / 2.0);
                TransmissionMask::from_fn(n, n, origin, cell_mm, |x, y| {
                    if (x - cx).hypot(y - cy) <= radius_mm {
                        t
                    } else {
                        1.0
                    }
                })
            }
            MaskSpec::Bar {
                from_mm: (x0, y0),
                to_mm: (x1, y1),
                half_width_mm,
                t,
                cell_mm,
            } => {
                let pad = half_width_mm + 2.0 * cell_mm;
                let origin = (x0.min(x1) - pad, y0.min(y1) - pad);
                let nx = (((x0 - x1).abs() + 2.0 * pad) / cell_mm).ceil() as usize;
                let ny = (((y0 - y1).abs() + 2.0 * pad) / cell_mm).ceil() as usize;
                TransmissionMask::from_fn(nx, ny, origin, cell_mm, |x, y| {
                    if segment_distance((x, y), (x0, y0), (x1, y1)) <= half_width_mm {
                        t
                    } else {
                        1.0
                    }
                })
            }
            MaskSpec::RadialEdge {
                center_mm: (cx, cy),
                radius_mm,
                inside,
                outside,
                extent_mm,
                cell_mm,
            } => {
                let n = (2.0 * extent_mm / cell_mm).ceil() as usize;
                let origin = (cx - extent_mm, cy - extent_mm);
                TransmissionMask::from_fn(n, n, origin, cell_mm, |x, y| {
                    if (x - cx).hypot(y - cy) < radius_mm {
                        inside
                    } else {
                        outside
                    }
                })
            }
        }
    }
}

impl From<TransmissionMask> for MaskSpec {
    fn from(m: TransmissionMask) -> Self {
        MaskSpec::Grid {
            nx: m.nx,
            ny: m.ny,
            origin_mm: m.origin_mm,
            cell_mm: m.cell_mm,
            values: m.values,
            target_arm: m.target_arm,
        }
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

/// Absorb photons of the masked arm with probability `1 - t(x, y)`.
///
/// Only photons on the mask's target arm are affected; their partners are
/// left alone and later show up as unpaired singles.
pub fn apply_masks<R: Rng + ?Sized>(
    truth: &mut BiphotonTruth,
    masks: &[TransmissionMask],
    rng: &mut R,
) {
    for photon in truth.photons.iter_mut() {
        if photon.absorbed {
            continue;
        }
        let t: f64 = masks
            .iter()
            .filter(|m| m.target_arm == photon.arm)
            .map(|m| m.transmission(photon.x_mm, photon.y_mm))
            .product();
        if t < 1.0 && rng.random::<f64>() >= t {
            photon.absorbed = true;
        }
    }
}
