use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn spdcforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spdcforge"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path
}

fn data_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(str::to_owned)
        .collect()
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = spdcforge(&[
            "simulate",
            "--seed",
            "7",
            "--duration",
            "0.05",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["events.csv", "truth.csv", "linkage.csv"] {
        let x = std::fs::read(a.join(name)).unwrap();
        assert_eq!(x, std::fs::read(b.join(name)).unwrap(), "{name} differs");
        assert!(x.starts_with(b"# spdcforge config_sha256="));
    }
    let other = dir.path().join("c");
    spdcforge(&[
        "simulate",
        "--seed",
        "8",
        "--duration",
        "0.05",
        "--out",
        other.to_str().unwrap(),
    ]);
    assert_ne!(
        std::fs::read(a.join("events.csv")).unwrap(),
        std::fs::read(other.join("events.csv")).unwrap()
    );
}

#[test]
fn zero_duration_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = spdcforge(&[
        "simulate",
        "--duration",
        "0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("duration"));

    let cfg = write_config(dir.path(), r#"{"simulation": {"pair_rate": 3}}"#);
    let o = spdcforge(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = spdcforge(&[
        "simulate",
        "--config",
        dir.path().join("missing.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn empty_event_file_gives_empty_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("events.csv");
    std::fs::write(&events, "chip,col,row,toa_ns,tot_ns\n").unwrap();
    let out = dir.path().join("out");
    let o = spdcforge(&[
        "process",
        "--events",
        events.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in [
        "clusters.csv",
        "pairs.csv",
        "dt_hist.csv",
        "detuning_hist.csv",
        "scatter.csv",
        "tot2d.csv",
    ] {
        let text = std::fs::read_to_string(out.join(name)).unwrap();
        assert!(text.starts_with("# spdcforge"), "{name}");
    }
    assert!(data_lines(&out.join("pairs.csv")).is_empty());
    assert!(data_lines(&out.join("clusters.csv")).is_empty());

    // Zero pairs image to blank frames.
    let o = spdcforge(&["image", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let gaps_only = data_lines(&out.join("signal.csv"))
        .iter()
        .all(|l| l.ends_with(",0,1"));
    assert!(gaps_only);
}

#[test]
fn malformed_line_exits_with_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("events.csv");
    std::fs::write(
        &events,
        "chip,col,row,toa_ns,tot_ns\n1,3,4,1.5625,100\n1,3,x,3.125,100\n",
    )
    .unwrap();
    let o = spdcforge(&[
        "process",
        "--events",
        events.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(
        String::from_utf8_lossy(&o.stderr).contains(":3:"),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn simulate_process_round_trip_recovers_pairs() {
    let dir = tempfile::tempdir().unwrap();
    // Every energy accepted so only matching is under test.
    let cfg = write_config(
        dir.path(),
        r#"{"seed": 3,
            "simulation": {"duration_hours": 0.5, "background_ratio": 0.0},
            "pipeline": {"selection": {"mode": "energy_band", "min_kev": 0.0, "max_kev": 100.0}}}"#,
    );
    let out = dir.path().join("run");
    let args = |cmd: &'static str| {
        vec![
            cmd,
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]
    };
    for cmd in ["simulate", "process", "image"] {
        let o = spdcforge(&args(cmd));
        assert!(
            o.status.success(),
            "{cmd}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }

    let mut arms: HashMap<u64, HashSet<String>> = HashMap::new();
    for l in data_lines(&out.join("truth.csv")) {
        let f: Vec<&str> = l.split(',').collect();
        arms.entry(f[0].parse().unwrap())
            .or_default()
            .insert(f[1].to_owned());
    }
    let mut seen: HashMap<u64, HashSet<String>> = HashMap::new();
    for l in data_lines(&out.join("linkage.csv")) {
        let f: Vec<&str> = l.split(',').collect();
        if f[1] == "pair" {
            seen.entry(f[2].parse().unwrap())
                .or_default()
                .insert(f[3].to_owned());
        }
    }
    let expected = seen
        .iter()
        .filter(|(id, ph)| ph.len() == 2 && arms[id].len() == 2)
        .count();
    let pairs = data_lines(&out.join("pairs.csv")).len();
    assert!(expected > 1000, "{expected}");
    assert!(
        pairs as f64 >= 0.99 * expected as f64 && pairs <= expected,
        "{pairs} pairs for {expected} detected"
    );

    for name in [
        "signal.pgm",
        "idler.pgm",
        "idler_corrected.pgm",
        "contours.csv",
        "gridmap.csv",
    ] {
        assert!(out.join(name).exists(), "{name}");
    }
    let contours = data_lines(&out.join("contours.csv"));
    let r75: f64 = contours[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!((r75 - 11.597).abs() < 0.06, "{r75}");
}

#[test]
fn identify_reports_reference_points() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"identification": {
              "beta_grid": {"min": 1.0, "max": 1e6, "points": 6, "log": true},
              "zeta_grid": {"min": 1.0, "max": 4.0, "points": 4, "log": false},
              "ssn": {"n_frames": 20000}}}"#,
    );
    let out = dir.path().join("id");
    let o = spdcforge(&[
        "identify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--threads",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(
        stdout.contains("P(beta=0e0, zeta=1) = 1.000000"),
        "{stdout}"
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("ssn_report.json")).unwrap())
            .unwrap();
    let ratio = report["ratio"].as_f64().unwrap();
    assert!((ratio - 0.5).abs() < 0.04, "{ratio}");
    assert!(report["meta"]["config_sha256"].is_string());
    assert_eq!(data_lines(&out.join("surface.csv")).len(), 4);
    assert!(out.join("contour95.csv").exists());
}
