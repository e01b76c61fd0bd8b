use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use spdcforge_core::coincidence::{
    analyze_events, detuning_histogram, dt_histogram, emission_curve, emission_scatter, load_pairs,
    write_pairs, write_rows, PairRecord, TotMap,
};
use spdcforge_core::detector::Arm;
use spdcforge_core::identification::{
    aggregate_probability, probability_surface, ssn_experiment, write_contour, SpectrumModel,
};
use spdcforge_core::imaging::{
    accumulate, correct_pairs, energy_contours, grid_mapping, sharpness_metric, CorrelationImage,
};
use spdcforge_core::pipeline::{read_events, reconstruct, write_clusters};
use spdcforge_core::simulator::{write_outputs, Simulator};
use spdcforge_core::{Error, OutputMeta, Result};

use crate::config::RunConfig;

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Write one output file, mapping failures to the file's path.
fn emit(
    dir: &Path,
    name: &str,
    write: impl FnOnce(File) -> std::io::Result<()>,
) -> Result<PathBuf> {
    let path = dir.join(name);
    write(create(&path)?).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    Ok(path)
}

fn prepare(cfg: &RunConfig) -> Result<OutputMeta> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::Io {
        path: cfg.out.clone(),
        source: e,
    })?;
    cfg.meta()
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let mut sim_cfg = cfg.simulation.clone();
    sim_cfg.seed = cfg.seed;
    let sim = Simulator::new(sim_cfg)?;
    let meta = prepare(cfg)?;
    let output = sim.run()?;
    let files = write_outputs(&cfg.out, &output, &meta)?;
    let s = output.summary(sim.config.duration_hours);
    println!("pairs              {}", s.pairs);
    println!("pairs per hour     {:.1}", s.pairs_per_hour);
    println!("detected pairs     {}", s.detected_pairs);
    println!("absorbed photons   {}", s.absorbed_photons);
    println!("background photons {}", s.background_photons);
    println!("hits               {}", s.hits);
    println!("events             {}", files.events.display());
    Ok(())
}

pub fn process(cfg: &RunConfig) -> Result<()> {
    let geom = &cfg.simulation.geometry;
    geom.validate()?;
    cfg.pipeline.validate()?;
    cfg.pairs.validate()?;
    let (layout, calib) = cfg.simulation.detector.build(cfg.seed)?;
    let hits = read_events(&cfg.events_path(), cfg.pipeline.reorder_buffer)?;
    let meta = prepare(cfg)?;
    let dir = &cfg.out;
    let h = &cfg.histograms;

    let clusters = reconstruct(&hits, &layout, &calib, &cfg.pipeline)?;
    let center = layout.ring_center_mm(geom);
    let analysis = analyze_events(&clusters, geom, center, &cfg.pipeline.selection, &cfg.pairs)?;
    let records: Vec<PairRecord> = analysis.candidates.iter().map(|c| c.record()).collect();

    emit(dir, "clusters.csv", |f| {
        write_clusters(f, &clusters, Some(&meta))
    })?;
    emit(dir, "pairs.csv", |f| write_pairs(f, &records, Some(&meta)))?;
    let tot = TotMap::from_pairs(&analysis.unselected.pairs, h.tot_bin_ns, h.tot_max_ns)?;
    emit(dir, "tot2d.csv", |f| tot.write(f, Some(&meta)))?;
    let (dt, dt_summary) =
        dt_histogram(&analysis.candidates, h.dt_bin_ns, cfg.pairs.time_window_ns)?;
    emit(dir, "dt_hist.csv", |f| dt.write(f, Some(&meta)))?;
    let scatter = emission_scatter(&analysis.candidates);
    emit(dir, "scatter.csv", |f| {
        write_rows(
            f,
            &scatter,
            &["alpha_s_rad", "alpha_i_rad", "es_keV", "ei_keV"],
            Some(&meta),
        )
    })?;
    let curve = emission_curve(geom, h.emission_curve_points)?;
    emit(dir, "emission_curve.csv", |f| {
        write_rows(f, &curve, &["alpha_s_rad", "alpha_i_rad"], Some(&meta))
    })?;

    let passed = records.iter().filter(|r| r.passed).count();
    println!("hits               {}", hits.len());
    println!("clusters           {}", clusters.len());
    println!("matched pairs      {}", analysis.matching.pairs.len());
    println!("passed pairs       {passed}");
    println!(
        "singles            signal {} idler {}",
        analysis.matching.signal_singles.len(),
        analysis.matching.idler_singles.len()
    );
    println!(
        "dt center / rms    {:.2} / {:.2} ns",
        dt_summary.center_ns, dt_summary.rms_ns
    );

    // The detuning fit needs enough pairs; small runs still get the file.
    match detuning_histogram(&analysis.candidates) {
        Ok(d) => {
            emit(dir, "detuning_hist.csv", |f| {
                d.histogram.write(f, Some(&meta))
            })?;
            println!(
                "detuning mean      {:.6} deg (fit {:.6} +- {:.6})",
                d.fit.mean.to_degrees(),
                d.fit.mean.to_degrees(),
                d.fit.mean_err.to_degrees()
            );
            println!(
                "detuning sigma     {:.6} deg",
                d.fit.sigma.abs().to_degrees()
            );
        }
        Err(Error::Fit(msg)) => {
            emit(dir, "detuning_hist.csv", |mut f| {
                writeln!(f, "{}", meta.header_line())?;
                writeln!(f, "bin_low,count")
            })?;
            println!("detuning fit       skipped: {msg}");
        }
        Err(e) => return Err(e),
    }
    Ok(())
}

fn write_image(dir: &Path, stem: &str, img: &CorrelationImage, meta: &OutputMeta) -> Result<()> {
    emit(dir, &format!("{stem}.pgm"), |f| {
        img.write_pgm(f, Some(meta))
    })?;
    emit(dir, &format!("{stem}.csv"), |f| {
        img.write_csv(f, Some(meta))
    })?;
    Ok(())
}

pub fn image(cfg: &RunConfig) -> Result<()> {
    let geom = &cfg.simulation.geometry;
    geom.validate()?;
    let (layout, _) = cfg.simulation.detector.build(cfg.seed)?;
    let pairs = load_pairs(&cfg.pairs_path())?;
    let meta = prepare(cfg)?;
    let dir = &cfg.out;
    let ic = &cfg.imaging;
    let center = layout.ring_center_mm(geom);
    let exposure = cfg.simulation.duration_hours;
    let pitch = layout.pixel_pitch_mm;

    let (signal, idler) = accumulate(&pairs, pitch, ic.rebin, exposure)?;
    let corrected = correct_pairs(&pairs, geom, center)?;
    let (_, idler_corrected) = accumulate(&corrected, pitch, ic.rebin, exposure)?;
    let display = |img: &CorrelationImage| {
        if ic.display_transform && img.arm == Arm::Idler {
            img.transformed(true, true)
        } else {
            img.clone()
        }
    };
    write_image(dir, "signal", &signal, &meta)?;
    write_image(dir, "idler", &display(&idler), &meta)?;
    write_image(dir, "idler_corrected", &display(&idler_corrected), &meta)?;

    let radii = energy_contours(geom, &ic.contour_energies_kev)?;
    let rows: Vec<(f64, f64)> = ic.contour_energies_kev.iter().copied().zip(radii).collect();
    emit(dir, "contours.csv", |f| {
        write_rows(f, &rows, &["energy_keV", "radius_mm"], Some(&meta))
    })?;

    if let Some(grid) = &ic.grid {
        let mut rows = Vec::new();
        for (k, line) in grid.lines()?.iter().enumerate() {
            let absolute: Vec<(f64, f64)> = line
                .iter()
                .map(|&(x, y)| (center.0 + x, center.1 + y))
                .collect();
            for (p, q) in absolute.iter().zip(grid_mapping(geom, center, &absolute)?) {
                rows.push((k, p.0, p.1, q.0, q.1));
            }
        }
        emit(dir, "gridmap.csv", |f| {
            write_rows(
                f,
                &rows,
                &["line", "x_mm", "y_mm", "x_mapped_mm", "y_mapped_mm"],
                Some(&meta),
            )
        })?;
    }

    let passed = pairs.iter().filter(|p| p.passed).count();
    println!("passed pairs       {passed}");
    println!(
        "image bins         {} x {} at {} mm",
        signal.nx, signal.ny, signal.bin_mm
    );
    for (e, r) in &rows {
        println!("contour {e:>5.2} keV  r = {r:.4} mm");
    }
    if let Some(edge) = &ic.edge {
        let pre = sharpness_metric(&idler, edge)?;
        let post = sharpness_metric(&idler_corrected, edge)?;
        println!("edge sigma         {pre:.4} mm -> {post:.4} mm corrected");
    }
    Ok(())
}

pub fn identify(cfg: &RunConfig) -> Result<()> {
    let ic = &cfg.identification;
    let geom = &cfg.simulation.geometry;
    let det = &cfg.simulation.detector;
    let h = match &ic.spdc_spectrum {
        Some(shape) => SpectrumModel::new(shape.clone())?,
        None => SpectrumModel::spdc(
            geom,
            ic.band,
            det.tot_gain_ns_per_kev,
            det.tot_offset_ns,
            det.energy_resolution_fwhm_kev,
        )?,
    };
    let g = match &ic.background_spectrum {
        Some(shape) => SpectrumModel::new(shape.clone())?,
        None => SpectrumModel::pump(
            geom,
            det.tot_gain_ns_per_kev,
            det.tot_offset_ns,
            det.energy_resolution_fwhm_kev,
        )?,
    };
    let betas = ic.beta_grid.values()?;
    let zetas = ic.zeta_grid.values()?;
    ic.ssn.validate()?;
    let meta = prepare(cfg)?;
    let dir = &cfg.out;

    let surface = probability_surface(&h, &g, &betas, &zetas)?;
    let contour = surface.iso_contour(0.95);
    emit(dir, "surface.csv", |f| surface.write_csv(f, Some(&meta)))?;
    emit(dir, "contour95.csv", |f| {
        write_contour(f, &contour, Some(&meta))
    })?;

    let mut refs = Vec::new();
    for &(beta, zeta) in &ic.reference_points {
        let p = aggregate_probability(&h, &g, beta, zeta)?;
        println!("P(beta={beta:e}, zeta={zeta}) = {p:.6}");
        refs.push((beta, zeta, p));
    }
    emit(dir, "reference.csv", |f| {
        write_rows(f, &refs, &["beta", "zeta", "probability"], Some(&meta))
    })?;

    let report = ssn_experiment(&ic.ssn, cfg.seed)?;
    let mut json = serde_json::to_value(report)?;
    json["meta"] = serde_json::json!({ "config_sha256": meta.config_digest, "seed": meta.seed });
    emit(dir, "ssn_report.json", |mut f| {
        serde_json::to_writer_pretty(&mut f, &json)?;
        writeln!(f)
    })?;
    println!(
        "ssn variance ratio {:.4} +- {:.4} (classical {:.3e}, heralded {:.3e})",
        report.ratio, report.stderr, report.var_classical, report.var_heralded
    );
    Ok(())
}
