use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{HitSource, SimulationOutput};
use crate::error::{Error, Result};
use crate::hit::write_events;
use crate::metadata::OutputMeta;

/// Paths of the files written for one simulation run.
#[derive(Debug, Clone)]
pub struct SimulationFiles {
    pub events: PathBuf,
    pub truth: PathBuf,
    pub linkage: PathBuf,
}

impl SimulationFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            events: dir.join("events.csv"),
            truth: dir.join("truth.csv"),
            linkage: dir.join("linkage.csv"),
        }
    }
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

/// Write events, truth and hit linkage into `dir`.
pub fn write_outputs(
    dir: &Path,
    output: &SimulationOutput,
    meta: &OutputMeta,
) -> Result<SimulationFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = SimulationFiles::in_dir(dir);

    write_events(create(&files.events)?, &output.hits, Some(meta))
        .map_err(|e| Error::io(&files.events, e))?;
    write_truth(create(&files.truth)?, output, meta).map_err(|e| Error::io(&files.truth, e))?;
    write_linkage(create(&files.linkage)?, output, meta)
        .map_err(|e| Error::io(&files.linkage, e))?;
    Ok(files)
}

pub(super) fn write_truth<W: Write>(
    out: W,
    output: &SimulationOutput,
    meta: &OutputMeta,
) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "{}", meta.header_line())?;
    writeln!(
        out,
        "pair_id,arm,b,detuning_rad,azimuth_rad,x_mm,y_mm,energy_keV,emission_ns,absorbed"
    )?;
    for t in &output.truths {
        for p in &t.photons {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                t.pair_id,
                p.arm.as_str(),
                p.energy_kev / (t.photons[0].energy_kev + t.photons[1].energy_kev),
                t.detuning,
                p.azimuth,
                p.x_mm,
                p.y_mm,
                p.energy_kev,
                t.emission_time_ns,
                u8::from(p.absorbed)
            )?;
        }
    }
    out.flush()
}

pub(super) fn write_linkage<W: Write>(
    out: W,
    output: &SimulationOutput,
    meta: &OutputMeta,
) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "{}", meta.header_line())?;
    writeln!(out, "hit_index,source,pair_id,photon")?;
    for (i, s) in output.sources.iter().enumerate() {
        match *s {
            HitSource::Pair { pair_id, photon } => writeln!(out, "{i},pair,{pair_id},{photon}")?,
            HitSource::Background { index } => writeln!(out, "{i},background,{index},")?,
            HitSource::HotPixel => writeln!(out, "{i},hot_pixel,,")?,
        }
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{SimulationConfig, Simulator};

    #[test]
    fn identical_seeds_give_identical_files() {
        let cfg = SimulationConfig {
            duration_hours: 0.02,
            seed: 5,
            ..SimulationConfig::default()
        };
        let meta = OutputMeta::for_config(&cfg, cfg.seed).unwrap();
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for d in &dirs {
            let out = Simulator::new(cfg.clone()).unwrap().run().unwrap();
            write_outputs(d.path(), &out, &meta).unwrap();
        }
        for name in ["events.csv", "truth.csv", "linkage.csv"] {
            let a = std::fs::read(dirs[0].path().join(name)).unwrap();
            let b = std::fs::read(dirs[1].path().join(name)).unwrap();
            assert_eq!(a, b, "{name}");
        }
        let events = std::fs::read_to_string(dirs[0].path().join("events.csv")).unwrap();
        assert!(events.starts_with("# spdcforge config_sha256="));
        assert_eq!(events.lines().nth(1), Some("chip,col,row,toa_ns,tot_ns"));
    }
}
