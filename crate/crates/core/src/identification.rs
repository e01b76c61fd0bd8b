//! Telling down-converted photons from scattered pump photons by their ToT,
//! and the heralded transmission experiment.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::FWHM_PER_SIGMA;
use crate::error::{Error, Result};
use crate::kinematics::{pair_probability, ExperimentGeometry};
use crate::metadata::OutputMeta;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean_ns: f64,
    pub sigma_ns: f64,
}

/// Shape of a ToT spectrum before the resolution factor is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumShape {
    /// Weighted Gaussian mixture; weights are normalized on construction.
    Gaussian { components: Vec<GaussianComponent> },
    /// Histogram density, linearly interpolated between bin centers.
    Empirical {
        low_ns: f64,
        bin_ns: f64,
        density: Vec<f64>,
    },
}

/// Normalized ToT density. The resolution factor narrows the spectrum:
/// Gaussian widths are divided by it, histograms are compressed about their
/// mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumModel {
    pub shape: SpectrumShape,
    pub resolution_factor: f64,
    #[serde(skip)]
    mean_ns: f64,
}

/// Energy range of the down-converted spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpdcBand {
    /// All splits in the validity window, weighted by pair probability.
    #[default]
    Full,
    /// Only the degenerate half-pump energy.
    Degenerate,
}

/// Standard normal density cut at 12 sigma, where it is below 1e-31.
const GAUSS_CUT: f64 = 12.0;

impl SpectrumModel {
    pub fn new(shape: SpectrumShape) -> Result<Self> {
        let shape = match shape {
            SpectrumShape::Gaussian { components } => {
                if components.is_empty() {
                    return Err(Error::Config("gaussian spectrum needs a component".into()));
                }
                if components
                    .iter()
                    .any(|c| !(c.weight >= 0.0) || !(c.sigma_ns > 0.0) || !c.mean_ns.is_finite())
                {
                    return Err(Error::Config(
                        "gaussian components need weight >= 0 and sigma > 0".into(),
                    ));
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if !(total > 0.0) {
                    return Err(Error::Config(
                        "gaussian spectrum has zero total weight".into(),
                    ));
                }
                let mut components: Vec<GaussianComponent> = components
                    .into_iter()
                    .map(|c| GaussianComponent {
                        weight: c.weight / total,
                        ..c
                    })
                    .collect();
                // Sorted so density() can skip distant components.
                components.sort_by(|a, b| a.mean_ns.total_cmp(&b.mean_ns));
                SpectrumShape::Gaussian { components }
            }
            SpectrumShape::Empirical {
                low_ns,
                bin_ns,
                density,
            } => {
                if !(bin_ns > 0.0) || density.len() < 2 {
                    return Err(Error::Config(
                        "empirical spectrum needs two bins and a positive width".into(),
                    ));
                }
                if density.iter().any(|d| !(*d >= 0.0)) {
                    return Err(Error::Config(
                        "empirical density must be non-negative".into(),
                    ));
                }
                // Integral of the interpolant: trapezoid over centers plus the
                // half bins at both ends.
                let n = density.len();
                let integral = bin_ns
                    * (density.iter().sum::<f64>() - 0.5 * (density[0] + density[n - 1]))
                    + 0.5 * bin_ns * (density[0] + density[n - 1]);
                if !(integral > 0.0) {
                    return Err(Error::Config("empirical spectrum is empty".into()));
                }
                SpectrumShape::Empirical {
                    low_ns,
                    bin_ns,
                    density: density.into_iter().map(|d| d / integral).collect(),
                }
            }
        };
        let mut model = Self {
            shape,
            resolution_factor: 1.0,
            mean_ns: 0.0,
        };
        model.mean_ns = model.raw_mean();
        Ok(model)
    }

    pub fn gaussian(mean_ns: f64, sigma_ns: f64) -> Result<Self> {
        Self::new(SpectrumShape::Gaussian {
            components: vec![GaussianComponent {
                weight: 1.0,
                mean_ns,
                sigma_ns,
            }],
        })
    }

    /// Down-converted photon spectrum in ToT units for a linear calibration.
    pub fn spdc(
        geom: &ExperimentGeometry,
        band: SpdcBand,
        gain_ns_per_kev: f64,
        offset_ns: f64,
        fwhm_kev: f64,
    ) -> Result<Self> {
        let sigma = gain_ns_per_kev * fwhm_kev / FWHM_PER_SIGMA;
        let tot = |e: f64| offset_ns + gain_ns_per_kev * e;
        let components = match band {
            SpdcBand::Degenerate => vec![GaussianComponent {
                weight: 1.0,
                mean_ns: tot(0.5 * geom.pump_energy_kev),
                sigma_ns: sigma,
            }],
            SpdcBand::Full => {
                // Midpoint rule over the split fraction, 0.005 per component.
                let (lo, hi) = (geom.validity.b_min, geom.validity.b_max);
                let n = (((hi - lo) / 0.005).round() as usize).max(1);
                (0..n)
                    .map(|k| {
                        let b = lo + (k as f64 + 0.5) * (hi - lo) / n as f64;
                        GaussianComponent {
                            weight: pair_probability(b),
                            mean_ns: tot(b * geom.pump_energy_kev),
                            sigma_ns: sigma,
                        }
                    })
                    .collect()
            }
        };
        Self::new(SpectrumShape::Gaussian { components })
    }

    /// Scattered pump spectrum in ToT units.
    pub fn pump(
        geom: &ExperimentGeometry,
        gain_ns_per_kev: f64,
        offset_ns: f64,
        fwhm_kev: f64,
    ) -> Result<Self> {
        Self::gaussian(
            offset_ns + gain_ns_per_kev * geom.pump_energy_kev,
            gain_ns_per_kev * fwhm_kev / FWHM_PER_SIGMA,
        )
    }

    pub fn with_resolution(&self, zeta: f64) -> Result<Self> {
        if !(zeta > 0.0) || !zeta.is_finite() {
            return Err(Error::Config(format!(
                "resolution factor must be positive, got {zeta}"
            )));
        }
        Ok(Self {
            resolution_factor: zeta,
            ..self.clone()
        })
    }

    fn raw_mean(&self) -> f64 {
        match &self.shape {
            SpectrumShape::Gaussian { components } => {
                components.iter().map(|c| c.weight * c.mean_ns).sum()
            }
            SpectrumShape::Empirical {
                low_ns,
                bin_ns,
                density,
            } => {
                let mass: f64 = density.iter().sum();
                density
                    .iter()
                    .enumerate()
                    .map(|(k, d)| d * (low_ns + (k as f64 + 0.5) * bin_ns))
                    .sum::<f64>()
                    / mass
            }
        }
    }

    pub fn density(&self, tot_ns: f64) -> f64 {
        let z = self.resolution_factor;
        match &self.shape {
            SpectrumShape::Gaussian { components } => {
                let reach =
                    GAUSS_CUT * components.iter().fold(0.0f64, |m, c| m.max(c.sigma_ns)) / z;
                let first = components.partition_point(|c| c.mean_ns < tot_ns - reach);
                let last = components.partition_point(|c| c.mean_ns <= tot_ns + reach);
                components[first..last]
                    .iter()
                    .map(|c| {
                        let s = c.sigma_ns / z;
                        let u = (tot_ns - c.mean_ns) / s;
                        if u.abs() > GAUSS_CUT {
                            0.0
                        } else {
                            c.weight * (-0.5 * u * u).exp()
                                / (s * (2.0 * std::f64::consts::PI).sqrt())
                        }
                    })
                    .sum()
            }
            SpectrumShape::Empirical {
                low_ns,
                bin_ns,
                density,
            } => {
                let t = self.mean_ns + z * (tot_ns - self.mean_ns);
                let pos = (t - low_ns) / bin_ns - 0.5;
                let n = density.len();
                let value = if pos < -0.5 || pos > n as f64 - 0.5 {
                    0.0
                } else if pos <= 0.0 {
                    density[0]
                } else if pos >= (n - 1) as f64 {
                    density[n - 1]
                } else {
                    let k = pos.floor() as usize;
                    let f = pos - k as f64;
                    density[k] * (1.0 - f) + density[k + 1] * f
                };
                z * value
            }
        }
    }

    /// Interval outside which the density vanishes.
    pub fn support(&self) -> (f64, f64) {
        let z = self.resolution_factor;
        match &self.shape {
            SpectrumShape::Gaussian { components } => {
                components.iter().fold((f64::MAX, f64::MIN), |(lo, hi), c| {
                    let w = GAUSS_CUT * c.sigma_ns / z;
                    (lo.min(c.mean_ns - w), hi.max(c.mean_ns + w))
                })
            }
            SpectrumShape::Empirical {
                low_ns,
                bin_ns,
                density,
            } => {
                let high = low_ns + bin_ns * density.len() as f64;
                let map = |t: f64| self.mean_ns + (t - self.mean_ns) / z;
                (map(*low_ns), map(high))
            }
        }
    }
}

/// Probability that an event with this ToT is down-converted, given
/// `beta` background events per down-converted one. Zero where neither
/// spectrum has support.
pub fn posterior(tot_ns: f64, h: &SpectrumModel, g: &SpectrumModel, beta: f64) -> f64 {
    let hv = h.density(tot_ns);
    let denom = hv + beta * g.density(tot_ns);
    if denom > 0.0 {
        hv / denom
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integration {
    /// Uniform panels laid over the support before refinement.
    pub initial_panels: usize,
    /// Absolute tolerance on the integral, shared across the support.
    pub tolerance: f64,
    pub max_depth: u32,
}

impl Default for Integration {
    fn default() -> Self {
        Self {
            initial_panels: 256,
            tolerance: 1e-7,
            max_depth: 24,
        }
    }
}

/// The grid must reproduce the down-converted density's unit mass to 1e-6.
const MASS_CAPTURE: f64 = 1.0 - 1e-6;

/// Chance that a down-converted event is identified as such: the
/// ToT-averaged posterior under the down-converted spectrum, both spectra
/// narrowed by `zeta`.
pub fn aggregate_probability(
    h: &SpectrumModel,
    g: &SpectrumModel,
    beta: f64,
    zeta: f64,
) -> Result<f64> {
    aggregate_probability_with(h, g, beta, zeta, &Integration::default())
}

pub fn aggregate_probability_with(
    h: &SpectrumModel,
    g: &SpectrumModel,
    beta: f64,
    zeta: f64,
    opts: &Integration,
) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(Error::Domain(format!(
            "background ratio must be non-negative, got {beta}"
        )));
    }
    if opts.initial_panels == 0 {
        return Err(Error::Config("integration needs at least one panel".into()));
    }
    let h = h.with_resolution(h.resolution_factor * zeta)?;
    let g = g.with_resolution(g.resolution_factor * zeta)?;
    let (lo, hi) = h.support();
    let f = |t: f64| {
        let hv = h.density(t);
        let denom = hv + beta * g.density(t);
        [hv, if denom > 0.0 { hv * hv / denom } else { 0.0 }]
    };
    let width = (hi - lo) / opts.initial_panels as f64;
    let mut total = [0.0; 2];
    let mut a = lo;
    let mut fa = f(a);
    for k in 1..=opts.initial_panels {
        let b = lo + k as f64 * width;
        let fb = f(b);
        let part = refine(
            &f,
            a,
            b,
            fa,
            fb,
            opts.tolerance * width / (hi - lo),
            opts.max_depth,
        );
        total[0] += part[0];
        total[1] += part[1];
        a = b;
        fa = fb;
    }
    if (total[0] - 1.0).abs() > 1.0 - MASS_CAPTURE {
        return Err(Error::Integration(format!(
            "integration grid captured {:.9} of the down-converted spectrum",
            total[0]
        )));
    }
    Ok((total[1] / total[0]).clamp(0.0, 1.0))
}

/// Trapezoid on `[a, b]`, halved until both integrands agree with the
/// two-panel estimate within `tol`.
fn refine(
    f: &impl Fn(f64) -> [f64; 2],
    a: f64,
    b: f64,
    fa: [f64; 2],
    fb: [f64; 2],
    tol: f64,
    depth: u32,
) -> [f64; 2] {
    let m = 0.5 * (a + b);
    let fm = f(m);
    let coarse = [
        0.5 * (b - a) * (fa[0] + fb[0]),
        0.5 * (b - a) * (fa[1] + fb[1]),
    ];
    let fine = [
        0.25 * (b - a) * (fa[0] + 2.0 * fm[0] + fb[0]),
        0.25 * (b - a) * (fa[1] + 2.0 * fm[1] + fb[1]),
    ];
    if depth == 0 || ((fine[0] - coarse[0]).abs() <= tol && (fine[1] - coarse[1]).abs() <= tol) {
        return fine;
    }
    let l = refine(f, a, m, fa, fm, 0.5 * tol, depth - 1);
    let r = refine(f, m, b, fm, fb, 0.5 * tol, depth - 1);
    [l[0] + r[0], l[1] + r[1]]
}

/// Grid along one surface axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub log: bool,
}

impl AxisGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.points < 2 || !(self.max > self.min) || (self.log && !(self.min > 0.0)) {
            return Err(Error::Config(format!("invalid axis grid {self:?}")));
        }
        let n = (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|k| {
                let f = k as f64 / n;
                if self.log {
                    (self.min.ln() + f * (self.max / self.min).ln()).exp()
                } else {
                    self.min + f * (self.max - self.min)
                }
            })
            .collect())
    }
}

/// Aggregate probability over a (zeta, beta) grid; row `i` holds
/// `zetas[i]` across all betas.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilitySurface {
    pub betas: Vec<f64>,
    pub zetas: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

pub fn probability_surface(
    h: &SpectrumModel,
    g: &SpectrumModel,
    betas: &[f64],
    zetas: &[f64],
) -> Result<ProbabilitySurface> {
    let values = zetas
        .par_iter()
        .map(|&z| {
            betas
                .iter()
                .map(|&b| aggregate_probability(h, g, b, z))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbabilitySurface {
        betas: betas.to_vec(),
        zetas: zetas.to_vec(),
        values,
    })
}

impl ProbabilitySurface {
    /// Beta is interpolated in log space when every beta is positive.
    fn beta_coord(&self, beta: f64) -> f64 {
        if self.betas.iter().all(|b| *b > 0.0) {
            beta.ln()
        } else {
            beta
        }
    }

    /// Bilinear interpolation; `None` outside the grid.
    pub fn interpolate(&self, beta: f64, zeta: f64) -> Option<f64> {
        let bx: Vec<f64> = self.betas.iter().map(|b| self.beta_coord(*b)).collect();
        let x = self.beta_coord(beta);
        let cell = |axis: &[f64], v: f64| -> Option<(usize, f64)> {
            let k = axis.windows(2).position(|w| v >= w[0] && v <= w[1])?;
            Some((k, (v - axis[k]) / (axis[k + 1] - axis[k])))
        };
        let (i, fx) = cell(&bx, x)?;
        let (j, fy) = cell(&self.zetas, zeta)?;
        let v = &self.values;
        Some(
            v[j][i] * (1.0 - fx) * (1.0 - fy)
                + v[j][i + 1] * fx * (1.0 - fy)
                + v[j + 1][i] * (1.0 - fx) * fy
                + v[j + 1][i + 1] * fx * fy,
        )
    }

    /// Points `(beta, zeta)` where the interpolated surface crosses `level`
    /// along grid edges, sorted by zeta then beta.
    pub fn iso_contour(&self, level: f64) -> Vec<(f64, f64)> {
        let bx: Vec<f64> = self.betas.iter().map(|b| self.beta_coord(*b)).collect();
        let from_coord = |x: f64| {
            if bx.len() == self.betas.len() && self.betas.iter().all(|b| *b > 0.0) {
                x.exp()
            } else {
                x
            }
        };
        let crossing = |a: f64, b: f64| -> Option<f64> {
            if (a - level) * (b - level) < 0.0 || (a == level && b != level) {
                Some((level - a) / (b - a))
            } else {
                None
            }
        };
        let mut pts = Vec::new();
        for (j, row) in self.values.iter().enumerate() {
            for i in 0..row.len() - 1 {
                if let Some(f) = crossing(row[i], row[i + 1]) {
                    pts.push((from_coord(bx[i] + f * (bx[i + 1] - bx[i])), self.zetas[j]));
                }
            }
        }
        for j in 0..self.values.len().saturating_sub(1) {
            for i in 0..self.betas.len() {
                if let Some(f) = crossing(self.values[j][i], self.values[j + 1][i]) {
                    pts.push((
                        self.betas[i],
                        self.zetas[j] + f * (self.zetas[j + 1] - self.zetas[j]),
                    ));
                }
            }
        }
        pts.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)));
        pts.dedup();
        pts
    }

    /// Matrix CSV: the header row lists betas, each row starts with zeta.
    pub fn write_csv<W: Write>(&self, out: W, meta: Option<&OutputMeta>) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(out);
        if let Some(meta) = meta {
            writeln!(out, "{}", meta.header_line())?;
        }
        write!(out, "zeta\\beta")?;
        for b in &self.betas {
            write!(out, ",{b}")?;
        }
        writeln!(out)?;
        for (z, row) in self.zetas.iter().zip(&self.values) {
            write!(out, "{z}")?;
            for v in row {
                write!(out, ",{v:.9}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    }
}

pub fn write_contour<W: Write>(
    out: W,
    points: &[(f64, f64)],
    meta: Option<&OutputMeta>,
) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(out);
    if let Some(meta) = meta {
        writeln!(out, "{}", meta.header_line())?;
    }
    writeln!(out, "beta,zeta")?;
    for (b, z) in points {
        writeln!(out, "{b},{z}")?;
    }
    out.flush()
}

/// Heralded transmission measurement of one pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsnConfig {
    /// Mean incident photons per frame.
    pub mean_flux: f64,
    pub transmission: f64,
    pub n_frames: u64,
    /// Fraction of incident photons whose partner is detected.
    pub heralding_efficiency: f64,
}

impl Default for SsnConfig {
    fn default() -> Self {
        Self {
            mean_flux: 100.0,
            transmission: 0.5,
            n_frames: 100_000,
            heralding_efficiency: 1.0,
        }
    }
}

impl SsnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mean_flux > 0.0) || !self.mean_flux.is_finite() {
            return Err(Error::Config("mean flux must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.transmission) {
            return Err(Error::Config("transmission must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.heralding_efficiency) {
            return Err(Error::Config(
                "heralding efficiency must lie in [0, 1]".into(),
            ));
        }
        if self.n_frames < 2 {
            return Err(Error::Config("need at least two frames".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsnReport {
    pub var_classical: f64,
    pub var_heralded: f64,
    /// Heralded over classical variance; null when both vanish.
    pub ratio: f64,
    /// Standard error of `ratio` from the sampling spread of both variances.
    pub stderr: f64,
}

/// Running sums for a sample variance and the spread of that variance.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    s1: f64,
    s2: f64,
    s3: f64,
    s4: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        self.s1 += x;
        self.s2 += x * x;
        self.s3 += x * x * x;
        self.s4 += x * x * x * x;
    }

    fn merge(self, o: Self) -> Self {
        Self {
            n: self.n + o.n,
            s1: self.s1 + o.s1,
            s2: self.s2 + o.s2,
            s3: self.s3 + o.s3,
            s4: self.s4 + o.s4,
        }
    }

    /// Unbiased variance and the standard error of that estimate.
    fn variance(&self) -> (f64, f64) {
        let n = self.n;
        if n < 2.0 {
            return (f64::NAN, f64::NAN);
        }
        let m = self.s1 / n;
        let m2 = (self.s2 / n - m * m).max(0.0);
        let m4 = (self.s4 - 4.0 * m * self.s3 + 6.0 * m * m * self.s2 - 3.0 * n * m.powi(4)) / n;
        let var = m2 * n / (n - 1.0);
        (var, ((m4 - m2 * m2).max(0.0) / n).sqrt())
    }
}

const FRAMES_PER_STREAM: u64 = 10_000;

/// Transmission estimated frame by frame, once against the mean flux and
/// once against the heralded photon count. Frames without heralds and
/// without an unheralded share are skipped for the heralded estimate.
pub fn ssn_experiment(cfg: &SsnConfig, seed: u64) -> Result<SsnReport> {
    cfg.validate()?;
    let (lam, t, eta) = (cfg.mean_flux, cfg.transmission, cfg.heralding_efficiency);
    let poisson = |mean: f64| -> Result<Option<Poisson<f64>>> {
        if mean > 0.0 {
            Poisson::new(mean)
                .map(Some)
                .map_err(|e| Error::Config(e.to_string()))
        } else {
            Ok(None)
        }
    };
    let classical_dist = poisson(t * lam)?;
    let heralded_dist = poisson(eta * lam)?;
    let unheralded_dist = poisson((1.0 - eta) * lam)?;
    let streams = cfg.n_frames.div_ceil(FRAMES_PER_STREAM);
    let draw = |d: &Option<Poisson<f64>>, rng: &mut ChaCha8Rng| {
        d.as_ref().map_or(0, |d| d.sample(rng) as u64)
    };
    let thin = |n: u64, rng: &mut ChaCha8Rng| -> u64 {
        if n == 0 {
            0
        } else {
            Binomial::new(n, t)
                .expect("transmission validated")
                .sample(rng)
        }
    };
    let (classical, heralded) = (0..streams)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s + 1);
            let frames = FRAMES_PER_STREAM.min(cfg.n_frames - s * FRAMES_PER_STREAM);
            let mut c = Moments::default();
            let mut h = Moments::default();
            for _ in 0..frames {
                c.push(draw(&classical_dist, &mut rng) as f64 / lam);
                let heralds = draw(&heralded_dist, &mut rng);
                let unheralded = draw(&unheralded_dist, &mut rng);
                let measured = thin(heralds, &mut rng) + thin(unheralded, &mut rng);
                let reference = heralds as f64 + (1.0 - eta) * lam;
                if reference > 0.0 {
                    h.push(measured as f64 / reference);
                }
            }
            (c, h)
        })
        .reduce(
            || (Moments::default(), Moments::default()),
            |a, b| (a.0.merge(b.0), a.1.merge(b.1)),
        );
    let (vc, sc) = classical.variance();
    let (vh, sh) = heralded.variance();
    let ratio = vh / vc;
    let stderr = if vh > 0.0 {
        ratio * ((sh / vh).powi(2) + (sc / vc).powi(2)).sqrt()
    } else {
        sh / vc
    };
    Ok(SsnReport {
        var_classical: vc,
        var_heralded: vh,
        ratio,
        stderr,
    })
}
