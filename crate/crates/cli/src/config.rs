use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spdcforge_core::coincidence::PairFilterConfig;
use spdcforge_core::identification::{AxisGrid, SpdcBand, SpectrumShape, SsnConfig};
use spdcforge_core::imaging::{EdgeSpec, GridSpec};
use spdcforge_core::pipeline::PipelineConfig;
use spdcforge_core::simulator::SimulationConfig;
use spdcforge_core::{Error, OutputMeta, Result};

/// Everything one invocation needs. Each command reads the sections it uses;
/// the geometry and detector of `simulation` are shared by all of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub simulation: SimulationConfig,
    pub pipeline: PipelineConfig,
    pub pairs: PairFilterConfig,
    pub histograms: HistogramConfig,
    pub imaging: ImagingConfig,
    pub identification: IdentificationConfig,
    pub inputs: Inputs,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            simulation: SimulationConfig::default(),
            pipeline: PipelineConfig::default(),
            pairs: PairFilterConfig::default(),
            histograms: HistogramConfig::default(),
            imaging: ImagingConfig::default(),
            identification: IdentificationConfig::default(),
            inputs: Inputs::default(),
        }
    }
}

/// Input files; when unset, commands read the previous stage's output in `out`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub events: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramConfig {
    pub dt_bin_ns: f64,
    pub tot_bin_ns: f64,
    pub tot_max_ns: f64,
    pub emission_curve_points: usize,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self {
            dt_bin_ns: 6.25,
            tot_bin_ns: 25.0,
            tot_max_ns: 2000.0,
            emission_curve_points: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagingConfig {
    pub rebin: usize,
    /// Rotate idler images by 180 degrees and mirror them for display.
    pub display_transform: bool,
    pub contour_energies_kev: Vec<f64>,
    /// Grid whose lines are mapped to the idler arm; coordinates are
    /// relative to the ring center.
    pub grid: Option<GridSpec>,
    pub edge: Option<EdgeSpec>,
}

impl Default for ImagingConfig {
    fn default() -> Self {
        Self {
            rebin: 1,
            display_transform: false,
            contour_energies_kev: vec![6.0, 7.5, 9.0],
            grid: Some(GridSpec {
                x_range_mm: (-8.0, 8.0),
                y_range_mm: (3.0, 12.0),
                spacing_mm: 1.0,
                samples_per_line: 64,
            }),
            edge: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentificationConfig {
    pub band: SpdcBand,
    /// Replace the Gaussian spectra built from the detector calibration.
    pub spdc_spectrum: Option<SpectrumShape>,
    pub background_spectrum: Option<SpectrumShape>,
    pub beta_grid: AxisGrid,
    pub zeta_grid: AxisGrid,
    /// `(beta, zeta)` points reported individually.
    pub reference_points: Vec<(f64, f64)>,
    pub ssn: SsnConfig,
}

impl Default for IdentificationConfig {
    fn default() -> Self {
        Self {
            band: SpdcBand::Full,
            spdc_spectrum: None,
            background_spectrum: None,
            beta_grid: AxisGrid {
                min: 1.0,
                max: 1e6,
                points: 20,
                log: true,
            },
            zeta_grid: AxisGrid {
                min: 1.0,
                max: 5.0,
                points: 20,
                log: false,
            },
            reference_points: vec![(0.0, 1.0), (1e5, 1.0), (1e3, 2.0)],
            ssn: SsnConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Header metadata. The output directory is left out of the digest so
    /// the same run written elsewhere is byte-identical.
    pub fn meta(&self) -> Result<OutputMeta> {
        let mut c = self.clone();
        c.out = PathBuf::new();
        Ok(OutputMeta::for_config(&c, self.seed)?)
    }

    pub fn events_path(&self) -> PathBuf {
        self.inputs
            .events
            .clone()
            .unwrap_or_else(|| self.out.join("events.csv"))
    }

    pub fn pairs_path(&self) -> PathBuf {
        self.inputs
            .pairs
            .clone()
            .unwrap_or_else(|| self.out.join("pairs.csv"))
    }
}
