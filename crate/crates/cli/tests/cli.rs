use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use orbital_lattice_cli::commands;
use orbital_lattice_cli::config::{self, RunConfig};

fn orblat(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orblat"))
        .args(args)
        .current_dir(dir)
        .env_remove("ORBLAT_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn body(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

const SWEEP: &str =
    r#"{"geometry": {"kappa": 8, "g": 1}, "sweep": {"from": 10, "to": 40, "step": 10}}"#;

#[test]
fn params_sweep_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), SWEEP).unwrap();
    let out = orblat(
        &["params", "--config", "c.json", "--out", "res"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(dir.path().join("res/params.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# orblat "));
    assert!(lines.next().unwrap().starts_with("# config: "));
    assert_eq!(
        lines.next().unwrap(),
        "q,E_s,E_px,E_py,U_ss,U_xx,U_yy,U_sx,U_sy,U_xy,J0,J1"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("10,"));
    // 12 significant digits at most
    for field in rows[0].split(',') {
        let digits = field.trim_start_matches('-').replace('.', "");
        let digits = digits.split('e').next().unwrap().trim_start_matches('0');
        assert!(digits.len() <= 12, "{field}");
    }
}

#[test]
fn identical_configs_give_identical_bodies() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), SWEEP).unwrap();
    for out in ["a", "b"] {
        let o = orblat(&["params", "--config", "c.json", "--out", out], dir.path());
        assert!(o.status.success());
    }
    assert_eq!(
        body(&dir.path().join("a/params.csv")),
        body(&dir.path().join("b/params.csv"))
    );
}

#[test]
fn malformed_config_fails_without_files() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.json"),
        r#"{"geometry": {"kappa": -1}}"#,
    )
    .unwrap();
    let out = orblat(
        &["params", "--config", "bad.json", "--out", "res"],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("kappa"));
    assert!(!dir.path().join("res").exists());

    fs::write(dir.path().join("typo.json"), r#"{"sweep": {"form": 3}}"#).unwrap();
    let out = orblat(&["params", "--config", "typo.json"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sweep"));
}

#[test]
fn environment_overrides_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), SWEEP).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_orblat"))
        .args(["params", "--config", "c.json", "--out", "ignored"])
        .current_dir(dir.path())
        .env("ORBLAT_OUT_DIR", dir.path().join("env"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("env/params.csv").exists());
    assert!(!dir.path().join("ignored").exists());
}

#[test]
fn evolve_requires_a_frequency() {
    let err = commands::run(config::Command::Evolve, &RunConfig::default()).unwrap_err();
    assert!(format!("{err:#}").contains("drive.omega"));
}

#[test]
fn evolve_trajectory_schema() {
    let cfg = RunConfig::from_json(
        r#"{"drive": {"omega": "281.2 kHz"}, "duration": "0.5 ms", "sample_interval": "0.25 ms"}"#,
    )
    .unwrap();
    let out = commands::run(config::Command::Evolve, &cfg).unwrap();
    let text = String::from_utf8(out.artifacts.get("trajectory.csv").unwrap().to_vec()).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "t_ms,|200>,|020>,|002>,norm_error");
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("0,1,0,0,"));
}

#[test]
fn unit_suffixes_match_recoil_values() {
    let units = RunConfig::default().units();
    let w = units.hz_to_omega(281_200.0);
    let a =
        RunConfig::from_json(r#"{"drive": {"omega": "281.2 kHz"}, "duration": "0.3 ms"}"#).unwrap();
    let b = RunConfig::from_json(&format!(
        r#"{{"drive": {{"omega": {w}}}, "duration": {}}}"#,
        units.ms_to_time(0.3)
    ))
    .unwrap();
    let ra = commands::run(config::Command::Evolve, &a).unwrap();
    let rb = commands::run(config::Command::Evolve, &b).unwrap();
    let last = |o: &commands::Outcome| {
        let t = String::from_utf8(o.artifacts.get("trajectory.csv").unwrap().to_vec()).unwrap();
        t.lines()
            .last()
            .unwrap()
            .split(',')
            .skip(1)
            .map(String::from)
            .collect::<Vec<_>>()
    };
    let (la, lb) = (last(&ra), last(&rb));
    for (x, y) in la.iter().zip(&lb).take(3) {
        let (x, y): (f64, f64) = (x.parse().unwrap(), y.parse().unwrap());
        assert!((x - y).abs() < 1e-9);
    }
}

mod round_trip {
    use orbital_lattice::units::Quantity;
    use orbital_lattice_cli::config::{DriveAxis, RunConfig};
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn parse_serialize_parse(
            qx in 1.0f64..60.0,
            qy in 1.0f64..60.0,
            kappa in 0.5f64..20.0,
            amp in -8.0f64..8.0,
            axis in prop::sample::select(vec![DriveAxis::X, DriveAxis::Y, DriveAxis::Plus, DriveAxis::Minus]),
            ms in 0.1f64..50.0,
            recoil in any::<bool>(),
        ) {
            let mut c = RunConfig::default();
            c.geometry.qx = qx;
            c.geometry.qy = qy;
            c.geometry.kappa = kappa;
            c.drive.amplitude = amp;
            c.drive.axis = axis;
            c.duration = if recoil { Quantity::Recoil(ms * 88.0) } else { Quantity::Physical(format!("{ms} ms")) };
            let once = RunConfig::from_json(&c.to_json()).unwrap();
            prop_assert_eq!(&once, &c);
            prop_assert_eq!(RunConfig::from_json(&once.to_json()).unwrap(), once);
        }
    }
}
