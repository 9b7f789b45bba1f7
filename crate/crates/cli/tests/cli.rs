use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn relay_csi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relay-csi"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_spec(dir: &Path, text: &str) -> String {
    let path = dir.join("spec.json");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn design_prints_levels() {
    let out = relay_csi(&[
        "design",
        "--dist",
        "rayleigh",
        "--snr-db",
        "10",
        "--levels",
        "3",
        "--method",
        "max-entropy",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let levels: Vec<f64> = v["levels"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert!((levels[1] - 2f64.ln()).abs() < 1e-12);
    assert_eq!(v["support_max"], "inf");
    assert_eq!(v["gamma"], 10.0);
}

#[test]
fn design_rejects_single_level_general() {
    let out = relay_csi(&[
        "design", "--dist", "rayleigh", "--snr-db", "10", "--levels", "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn design_accepts_negative_snr() {
    let out = relay_csi(&[
        "design", "--dist", "uniform", "--snr-db", "-3", "--levels", "2", "--method", "uniform",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn validate_reports_warnings_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        r#"{"scenario": "loss_ratio_vs_snr", "n_trials": 100}"#,
    );
    let out = relay_csi(&["validate", "--spec", &spec]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("UnderpoweredMC"));

    let spec = write_spec(
        dir.path(),
        r#"{"scenario": "adaptive_vs_fixed", "snr_grid_db": []}"#,
    );
    let out = relay_csi(&["validate", "--spec", &spec]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("snr_grid_db"));

    let spec = write_spec(
        dir.path(),
        r#"{"scenario": "adaptive_vs_fixed", "typo": 1}"#,
    );
    assert_eq!(
        relay_csi(&["validate", "--spec", &spec]).status.code(),
        Some(2)
    );
}

#[test]
fn run_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        r#"{"scenario": "bit_allocation_sweep", "k_max_grid": [3, 4, 6], "n_trials": 3000, "master_seed": 7}"#,
    );
    let mut csvs = Vec::new();
    for threads in ["1", "8"] {
        let out_dir = dir.path().join(format!("out{threads}"));
        let out = relay_csi(&[
            "run",
            "--spec",
            &spec,
            "--out",
            out_dir.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        csvs.push(fs::read(out_dir.join("bit_allocation_sweep.csv")).unwrap());
        assert!(out_dir.join("manifest.json").exists());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs.remove(0)).unwrap();
    assert!(text.starts_with(
        "scenario,seed,k_max,allocator,quantizer,allocation,percent_achieved,stderr\n"
    ));
}

#[test]
fn tabulated_law_resolves_relative_to_spec() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("h,pdf\n");
    for i in 0..=400 {
        let h = i as f64 * 0.05;
        csv.push_str(&format!("{h},{}\n", (-h).exp()));
    }
    fs::write(dir.path().join("law.csv"), csv).unwrap();
    let spec = write_spec(
        dir.path(),
        r#"{"scenario": "decay_vs_n", "distributions": [{"tabulated": {"csv": "law.csv"}}], "n_grid": [4, 8], "snr_grid_db": [10]}"#,
    );
    let out_dir = dir.path().join("out");
    let out = relay_csi(&["run", "--spec", &spec, "--out", out_dir.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
