use std::path::Path;
use std::process::{Command, Output};

use qkd_cli::report::ResultsTable;

fn qkdsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qkdsim")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = qkdsim(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn table(path: &Path) -> ResultsTable {
    ResultsTable::read_csv(std::fs::File::open(path).unwrap()).unwrap()
}

fn stdout_table(out: &Output) -> ResultsTable {
    ResultsTable::read_csv(out.stdout.as_slice()).unwrap()
}

const TARGETS: &str = r#"
[[target]]
scenario = "optical_sync_50km"
observable = "min_mu"
value = 2.19e-2

[[target]]
scenario = "electrical_sync_50km"
observable = "min_mu"
value = 1.68e-3
"#;

#[test]
fn montecarlo_run_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let path = dir.path().join(name);
        ok(&[
            "run", "--preset", "electrical_sync_50km", "--mode", "both", "--n-slots", "300000",
            "--seed", seed, "--out", path.to_str().unwrap(),
        ]);
        std::fs::read(path).unwrap()
    };
    let a = run("a.csv", "7");
    assert_eq!(a, run("b.csv", "7"));
    assert_ne!(a, run("c.csv", "8"));
}

#[test]
fn sidecars_record_digest_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    ok(&[
        "sweep", "--var", "distance", "--from", "10", "--to", "150", "--points", "8", "--seed", "5",
        "--out", path.to_str().unwrap(), "--dat",
    ]);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sweep.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 5);
    assert_eq!(meta["command"], "sweep");
    assert_eq!(meta["config_digest"].as_str().unwrap().len(), 64);
    let dat = std::fs::read_to_string(dir.path().join("sweep.dat")).unwrap();
    assert!(dat.starts_with("# distance_km signal_rate_hz"));
    assert_eq!(dat.lines().count(), 9);
    assert_eq!(table(&path).n_rows(), 8);
}

#[test]
fn qber_falls_as_mu_rises() {
    for preset in ["optical_sync_50km", "electrical_sync_50km", "improved_filter"] {
        let t = stdout_table(&ok(&["sweep", "--preset", preset, "--var", "mu", "--from", "1e-4", "--to", "1", "--points", "25"]));
        let q = t.column("qber").unwrap();
        assert!(q.windows(2).all(|w| w[1] < w[0]), "{preset}: {q:?}");
    }
}

#[test]
fn removing_the_filter_doubles_the_sifted_rate() {
    let dir = tempfile::tempdir().unwrap();
    let quiet = |preset: &str| {
        let path = dir.path().join(format!("{preset}.toml"));
        std::fs::write(
            &path,
            format!("preset = \"{preset}\"\n[detector]\nblackbody_rate_hz = 0\nraman_rate_in_window_hz = 0\n"),
        )
        .unwrap();
        let out = ok(&["sweep", "--config", path.to_str().unwrap(), "--var", "mu", "--from", "0.01", "--to", "0.1", "--points", "3"]);
        stdout_table(&out).column("sifted_rate_hz").unwrap().to_vec()
    };
    let e = quiet("electrical_sync_50km");
    let o = quiet("optical_sync_50km");
    for (a, b) in e.iter().zip(&o) {
        assert!((a / b / 2.1 - 1.0).abs() < 0.01, "{}", a / b);
    }
}

#[test]
fn calibration_round_trips_through_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let targets = dir.path().join("targets.toml");
    std::fs::write(&targets, TARGETS).unwrap();
    let cal = dir.path().join("optical.toml");
    let out = ok(&[
        "calibrate", "--targets", targets.to_str().unwrap(), "--preset", "optical_sync_50km",
        "--out", cal.to_str().unwrap(),
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("receiver_loss_db"), "{text}");
    let out = ok(&["thresholds", "--config", cal.to_str().unwrap()]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mu: f64 = text.lines().next().unwrap().split('=').nth(1).unwrap().trim().parse().unwrap();
    assert!((mu / 2.19e-2 - 1.0).abs() < 0.05, "{text}");
}

#[test]
fn calibration_failures_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.toml");
    std::fs::write(&one, TARGETS.split("\n\n").next().unwrap()).unwrap();
    let out = qkdsim(&["calibrate", "--targets", one.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("underdetermined"));

    let swapped = dir.path().join("swapped.toml");
    std::fs::write(&swapped, TARGETS.replace("2.19e-2", "X").replace("1.68e-3", "2.19e-2").replace("X", "1.68e-3")).unwrap();
    let out = qkdsim(&["calibrate", "--targets", swapped.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("calibration failed"));
}

#[test]
fn invalid_input_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[link]\nfiber_length_km = -3\n").unwrap();
    let out = qkdsim(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("link.fiber_length_km"));

    std::fs::write(&bad, "[detector]\ndark_rate = 3\n").unwrap();
    let out = qkdsim(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dark_rate"));

    let out = qkdsim(&["run", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let out = qkdsim(&["run", "--preset", "nowhere"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_slots_gives_an_empty_key() {
    let t = stdout_table(&ok(&["run", "--mode", "montecarlo", "--n-slots", "0"]));
    assert_eq!(t.column("final_key_bits").unwrap(), &[0.0]);
    assert_eq!(t.column("sifted_bits").unwrap(), &[0.0]);
}

#[test]
fn histogram_synthesis_and_fit() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.csv");
    ok(&["synth-histogram", "--seed", "3", "--out", path.to_str().unwrap()]);
    let out = ok(&["fit-histogram", "--in", path.to_str().unwrap()]);
    let text = String::from_utf8(out.stdout).unwrap();
    let value = |key: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("{key} in {text}"));
        line.split('=').nth(1).unwrap().trim().parse().unwrap()
    };
    assert!((value("raman_delay_ns") - 319.5).abs() < 1.0);
    assert!((value("fwhm_ns") - 72.0).abs() < 2.0);

    std::fs::write(&path, "time_ns,counts\n0,5\n4,5\n8,5\n12,5\n").unwrap();
    let out = qkdsim(&["fit-histogram", "--in", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn window_tradeoff_table() {
    let t = stdout_table(&ok(&["window", "--preset", "electrical_sync_50km", "--points", "20"]));
    assert_eq!(t.names(), ["window_ns", "sifted_rate_hz", "qber"]);
    let r = t.column("sifted_rate_hz").unwrap();
    assert!(r.windows(2).all(|w| w[1] > w[0]));
}
