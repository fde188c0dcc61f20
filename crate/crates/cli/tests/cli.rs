use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn vacflip(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vacflip"))
        .args(args)
        .current_dir(dir)
        .env_remove("VACFLIP_OUTPUT_DIR")
        .env_remove("VACFLIP_DIMENSION_CAP")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Parse one numeric column of a sweep table.
fn column(table: &str, name: &str) -> Vec<f64> {
    let mut lines = table.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(i).unwrap().parse().unwrap()).collect()
}

#[test]
fn run_writes_every_manifest_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.cfg", "alpha = 1\nomega = 1\nn_samples = 21\noutput_dir = out\n");
    let o = vacflip(&["run", &cfg], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("out/summary.json")).unwrap();
    let summary: serde_json::Value = serde_json::from_str(&text).unwrap();
    let manifest = summary["manifest"].as_array().unwrap();
    assert!(!manifest.is_empty());
    for f in manifest {
        assert!(dir.path().join("out").join(f.as_str().unwrap()).exists(), "{f}");
    }
}

#[test]
fn invalid_config_lists_every_issue() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.cfg",
        "charge = 1 e\nmass = 1 me\nb_field = 1 T\nalpha = 1\nomega = 1\ntolerance = 0\nwhat = 1\n",
    );
    let o = vacflip(&["run", &cfg], dir.path());
    assert!(!o.status.success());
    let err = stderr(&o);
    for needle in ["line 4: alpha", "charge", "line 6: tolerance", "line 7: what"] {
        assert!(err.contains(needle), "{needle} missing from {err}");
    }
}

#[test]
fn verify_geometry_passes_with_eight_pi_thirds() {
    let dir = tempfile::tempdir().unwrap();
    let o = vacflip(&["verify", "geometry", "--output", "g.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let json = stdout(&o);
    assert!(json.contains("\"angular_integral_zz\""));
    assert_eq!(fs::read_to_string(dir.path().join("g.json")).unwrap(), json);
}

#[test]
fn verify_rr_emits_the_ladder_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = vacflip(&["verify", "rr"], dir.path());
    let json = stdout(&o);
    assert!(json.contains("\"rr_ladder\"") && json.contains("\"rungs\""));
    assert!(stderr(&o).contains("epsilon ladder"));
    let report: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(o.status.success(), report["passed"].as_bool().unwrap());
}

#[test]
fn sweep_omega_gives_cubic_rates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.cfg", "alpha = 1\nomega = 1\nn_samples = 5\noutput_dir = sw\n");
    let o = vacflip(&["sweep", &cfg, "--axis", "omega", "--values", "0.5,1,2"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap();
    let b = column(&table, "beta_analytic");
    assert!((b[1] / b[0] / 8.0 - 1.0).abs() < 1e-9);
    assert!((b[2] / b[0] / 64.0 - 1.0).abs() < 1e-9);
    assert_eq!(column(&table, "omega"), vec![0.5, 1.0, 2.0]);
    assert!(dir.path().join("sw/run_002/summary.json").exists());
}

#[test]
fn sweep_alpha_and_cutoff() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.cfg", "alpha = 1\nomega = 1\nn_samples = 5\noutput_dir = sw\n");
    let o = vacflip(&["sweep", &cfg, "--axis", "alpha", "--values", "0.5,1"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let b = column(&fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap(), "beta_analytic");
    assert!((b[1] / b[0] / 4.0 - 1.0).abs() < 1e-12);

    let o = vacflip(&["sweep", &cfg, "--axis", "cutoff", "--values", "3,10,30"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap();
    let (d1, d2) = (column(&table, "delta1"), column(&table, "delta2"));
    let net: Vec<f64> = d1.iter().zip(&d2).map(|(a, b)| b - a).collect();
    assert!(net[0] < net[1] && net[1] < net[2], "{net:?}");
}

#[test]
fn sweep_failures_stay_in_their_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.cfg", "alpha = 1\nomega = 1\nn_samples = 5\noutput_dir = sw\n");
    let o = vacflip(&["sweep", &cfg, "--axis", "cutoff", "--values", "1,10"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert!(rows[0].contains(",error,") && rows[1].contains(",ok,"), "{table}");
}

#[test]
fn report_flags_the_electron_discrepancy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "e.cfg",
        "charge = 1 e\nmass = 1 me\nb_field = 1e4 gauss\nn_samples = 11\noutput_dir = e\n",
    );
    assert!(vacflip(&["run", &cfg], dir.path()).status.success());
    let o = vacflip(&["report", "e/summary.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("claimed 1/beta         5.000000e6 s"), "{text}");
    assert!(text.contains("computed 1/beta        7.15"), "{text}");
    assert!(text.contains("DISCREPANCY") && text.contains("unit-convention"));
}

#[test]
fn env_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "x.cfg", "engine = exact\nalpha = 0.1\nomega = 1\nn_modes = 4\nn_samples = 5\n");
    let o = Command::new(env!("CARGO_BIN_EXE_vacflip"))
        .args(["run", &cfg])
        .current_dir(dir.path())
        .env("VACFLIP_OUTPUT_DIR", "capped")
        .env("VACFLIP_DIMENSION_CAP", "16")
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("exceeds the cap of 16"), "{}", stderr(&o));
    assert!(!dir.path().join("capped").exists());

    let o = Command::new(env!("CARGO_BIN_EXE_vacflip"))
        .args(["run", &cfg])
        .current_dir(dir.path())
        .env("VACFLIP_OUTPUT_DIR", "moved")
        .env_remove("VACFLIP_DIMENSION_CAP")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("moved/trajectory_exact.csv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let text = "engine = both\nalpha = 0.3\nomega = 1\nn_modes = 5\nn_samples = 40\ntheta = 1\n";
    let a = write(dir.path(), "a.cfg", &format!("{text}output_dir = a\n"));
    let b = write(dir.path(), "b.cfg", &format!("output_dir = b\n{text}"));
    assert!(vacflip(&["run", &a], dir.path()).status.success());
    assert!(vacflip(&["run", &b], dir.path()).status.success());
    for f in ["summary.json", "trajectory_exact.csv", "trajectory_analytic.csv", "plot_analytic.dat"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}
