//! Phase-matching kinematics of Bragg-detuned X-ray down-conversion.
//!
//! Everything here is a pure scalar relation between the energy fraction
//! `b = E / E_pump` of one photon, its emission angle `alpha` measured from
//! the diffracted pump, the radius `r = L tan(alpha)` at which it lands on a
//! detector a distance `L` downstream, and the crystal detuning `dtheta`.
//!
//! Angles are radians throughout. Degrees only appear in [`GeometrySpec`],
//! the serialized form of [`ExperimentGeometry`].

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metadata::OutputMeta;

/// Energy-fraction interval inside which the emission-angle formulas are used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityWindow {
    pub b_min: f64,
    pub b_max: f64,
}

impl Default for ValidityWindow {
    fn default() -> Self {
        Self {
            b_min: 0.05,
            b_max: 0.95,
        }
    }
}

impl ValidityWindow {
    pub fn contains(&self, b: f64) -> bool {
        b >= self.b_min && b <= self.b_max
    }
}

/// Circular beamstop shadow on the detector, in physical millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beamstop {
    pub center_mm: (f64, f64),
    pub radius_mm: f64,
}

impl Beamstop {
    pub fn blocks(&self, x_mm: f64, y_mm: f64) -> bool {
        let dx = x_mm - self.center_mm.0;
        let dy = y_mm - self.center_mm.1;
        dx * dx + dy * dy <= self.radius_mm * self.radius_mm
    }
}

/// Beamline and crystal geometry. Angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeometrySpec", into = "GeometrySpec")]
pub struct ExperimentGeometry {
    pub pump_energy_kev: f64,
    pub bragg_angle: f64,
    pub detuning_nominal: f64,
    pub detuning_sigma: f64,
    pub crystal_to_detector_mm: f64,
    /// Impact point of the diffracted pump, in logical pixel coordinates (col, row).
    pub ring_center_px: (f64, f64),
    pub beamstop: Beamstop,
    pub validity: ValidityWindow,
}

/// Degree-valued mirror of [`ExperimentGeometry`] used in configuration files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySpec {
    pub pump_energy_kev: f64,
    pub bragg_angle_deg: f64,
    pub detuning_deg: f64,
    pub detuning_sigma_deg: f64,
    pub crystal_to_detector_mm: f64,
    pub ring_center_px: (f64, f64),
    pub beamstop_center_mm: (f64, f64),
    pub beamstop_radius_mm: f64,
    pub b_min: f64,
    pub b_max: f64,
}

impl Default for GeometrySpec {
    fn default() -> Self {
        let g = ExperimentGeometry::default();
        g.into()
    }
}

impl TryFrom<GeometrySpec> for ExperimentGeometry {
    type Error = Error;

    fn try_from(s: GeometrySpec) -> Result<Self> {
        let g = ExperimentGeometry {
            pump_energy_kev: s.pump_energy_kev,
            bragg_angle: s.bragg_angle_deg.to_radians(),
            detuning_nominal: s.detuning_deg.to_radians(),
            detuning_sigma: s.detuning_sigma_deg.to_radians(),
            crystal_to_detector_mm: s.crystal_to_detector_mm,
            ring_center_px: s.ring_center_px,
            beamstop: Beamstop {
                center_mm: s.beamstop_center_mm,
                radius_mm: s.beamstop_radius_mm,
            },
            validity: ValidityWindow {
                b_min: s.b_min,
                b_max: s.b_max,
            },
        };
        g.validate()?;
        Ok(g)
    }
}

impl From<ExperimentGeometry> for GeometrySpec {
    fn from(g: ExperimentGeometry) -> Self {
        GeometrySpec {
            pump_energy_kev: g.pump_energy_kev,
            bragg_angle_deg: g.bragg_angle.to_degrees(),
            detuning_deg: g.detuning_nominal.to_degrees(),
            detuning_sigma_deg: g.detuning_sigma.to_degrees(),
            crystal_to_detector_mm: g.crystal_to_detector_mm,
            ring_center_px: g.ring_center_px,
            beamstop_center_mm: g.beamstop.center_mm,
            beamstop_radius_mm: g.beamstop.radius_mm,
            b_min: g.validity.b_min,
            b_max: g.validity.b_max,
        }
    }
}

impl Default for ExperimentGeometry {
    /// 15 keV pump on diamond (111), 11.576 deg Bragg angle detuned by
    /// 0.021 deg with a 0.0014 deg spread, detector 683 mm downstream and
    /// the diffracted pump at logical pixel (260, 256).
    fn default() -> Self {
        // (260, 256) in physical millimetres for the default 55 um layout:
        // column 260 sits two pitches past the gap, row 256 is a 110 um strip.
        let center_mm = (262.5 * 0.055, 258.0 * 0.055);
        ExperimentGeometry {
            pump_energy_kev: 15.0,
            bragg_angle: 11.576_f64.to_radians(),
            detuning_nominal: 0.021_f64.to_radians(),
            detuning_sigma: 0.0014_f64.to_radians(),
            crystal_to_detector_mm: 683.0,
            ring_center_px: (260.0, 256.0),
            beamstop: Beamstop {
                center_mm,
                radius_mm: 2.5,
            },
            validity: ValidityWindow::default(),
        }
    }
}

impl ExperimentGeometry {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.pump_energy_kev > 0.0) {
            return fail("pump energy must be positive");
        }
        if !(self.crystal_to_detector_mm > 0.0) {
            return fail("crystal-to-detector distance must be positive");
        }
        if !(self.bragg_angle > 0.0 && self.bragg_angle < std::f64::consts::FRAC_PI_2) {
            return fail("Bragg angle must lie in (0, 90) degrees");
        }
        if !(self.detuning_nominal > 0.0) {
            return fail("nominal detuning must be positive");
        }
        if !(self.detuning_sigma >= 0.0) {
            return fail("detuning spread must be non-negative");
        }
        let c = self.phase_constant();
        if !(c > 0.0 && c < 1.0) {
            return fail("phase-matching constant 1 - dtheta sin(2 theta) must lie in (0, 1)");
        }
        let w = self.validity;
        if !(w.b_min > 0.0 && w.b_max < 1.0 && w.b_min < w.b_max) {
            return fail("validity window must satisfy 0 < b_min < b_max < 1");
        }
        if !(self.beamstop.radius_mm >= 0.0) {
            return fail("beamstop radius must be non-negative");
        }
        Ok(())
    }

    /// Same geometry with a different detuning, used for per-pair sampling.
    pub fn with_detuning(&self, detuning: f64) -> Self {
        Self {
            detuning_nominal: detuning,
            ..*self
        }
    }

    /// `c = 1 - dtheta sin(2 theta)`, the relative length of `k_in + G`.
    pub fn phase_constant(&self) -> f64 {
        1.0 - self.detuning_nominal * (2.0 * self.bragg_angle).sin()
    }

    /// `2 dtheta sin(2 theta)`: the product of conjugate emission angles.
    pub fn coupling(&self) -> f64 {
        2.0 * self.detuning_nominal * (2.0 * self.bragg_angle).sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleMode {
    /// Closed form without small-angle or binomial approximations.
    #[default]
    Exact,
    /// Small-angle form; consistent with the radius/energy relations.
    Approximate,
}

/// One point on the kinematic curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicPoint {
    pub b: f64,
    pub alpha: f64,
    pub r_mm: f64,
    pub energy_kev: f64,
}

/// Emission angle (radians) of a photon carrying energy fraction `b`.
pub fn emission_angle(b: f64, geom: &ExperimentGeometry, mode: AngleMode) -> Result<f64> {
    if !geom.validity.contains(b) {
        return Err(Error::Domain(format!(
            "energy fraction {b} outside validity window [{}, {}]",
            geom.validity.b_min, geom.validity.b_max
        )));
    }
    match mode {
        AngleMode::Approximate => Ok((geom.coupling() * (1.0 - b) / b).sqrt()),
        AngleMode::Exact => {
            let c = geom.phase_constant();
            let arg = (c * c + 2.0 * b - 1.0) / (2.0 * c * b);
            if !(-1.0..=1.0).contains(&arg) {
                return Err(Error::Domain(format!(
                    "arccos argument {arg} out of range at b = {b}"
                )));
            }
            Ok(arg.acos())
        }
    }
}

/// Photon energy (keV) reconstructed from its radial distance to the ring center.
pub fn energy_from_radius(r_mm: f64, geom: &ExperimentGeometry) -> f64 {
    let a = (r_mm / geom.crystal_to_detector_mm).atan();
    geom.pump_energy_kev / (a * a / geom.coupling() + 1.0)
}

pub fn radius_from_b(b: f64, geom: &ExperimentGeometry, mode: AngleMode) -> Result<f64> {
    let alpha = emission_angle(b, geom, mode)?;
    Ok(geom.crystal_to_detector_mm * alpha.tan())
}

/// Radius at which the partner of a photon detected at `r_mm` lands.
pub fn conjugate_radius(r_mm: f64, geom: &ExperimentGeometry) -> Result<f64> {
    if !(r_mm > 0.0) {
        return Err(Error::Domain(format!(
            "conjugate radius undefined for r = {r_mm} mm"
        )));
    }
    let l = geom.crystal_to_detector_mm;
    let alpha = (r_mm / l).atan();
    Ok(l * (geom.coupling() / alpha).tan())
}

/// Crystal detuning implied by a pair's two emission angles under energy conservation.
pub fn detuning_from_angles(alpha_s: f64, alpha_i: f64, bragg_angle: f64) -> Result<f64> {
    if !(alpha_s > 0.0 && alpha_i > 0.0) {
        return Err(Error::Domain(format!(
            "emission angles must be positive (got {alpha_s}, {alpha_i})"
        )));
    }
    Ok(alpha_s * alpha_i / (2.0 * (2.0 * bragg_angle).sin()))
}

/// Unnormalized probability of a pair with energy split `b : 1-b`.
pub fn pair_probability(b: f64) -> f64 {
    if !(0.0..=1.0).contains(&b) {
        return 0.0;
    }
    b * (1.0 - b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingProfileRow {
    pub point: KinematicPoint,
    pub weight: f64,
}

pub fn ring_profile(
    geom: &ExperimentGeometry,
    b_grid: &[f64],
    mode: AngleMode,
) -> Result<Vec<RingProfileRow>> {
    b_grid
        .iter()
        .map(|&b| {
            let alpha = emission_angle(b, geom, mode)?;
            Ok(RingProfileRow {
                point: KinematicPoint {
                    b,
                    alpha,
                    r_mm: geom.crystal_to_detector_mm * alpha.tan(),
                    energy_kev: b * geom.pump_energy_kev,
                },
                weight: pair_probability(b),
            })
        })
        .collect()
}

pub fn write_ring_profile<W: Write>(
    out: W,
    rows: &[RingProfileRow],
    meta: Option<&OutputMeta>,
) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(out);
    if let Some(meta) = meta {
        writeln!(out, "{}", meta.header_line())?;
    }
    writeln!(out, "b,energy_keV,alpha_rad,r_mm,weight")?;
    for row in rows {
        let p = row.point;
        writeln!(
            out,
            "{},{},{},{},{}",
            p.b, p.energy_kev, p.alpha, p.r_mm, row.weight
        )?;
    }
    out.flush()
}
