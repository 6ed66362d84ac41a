use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_frag");

fn frag(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, format!("output = {:?}\n{body}", dir.join("out").display().to_string())).unwrap();
    path.display().to_string()
}

const BASE: &str = r#"
[kernel]
alpha = 1.0
k = 1.0
[solver]
xi_min = -6.0
xi_max = 2.0
n = 128
t = 1.0
# A cell centre, so the grid delta and the walkers start at the same point.
initial = { kind = "delta", xi0 = 0.03125 }
[mc]
replicas = 100000
seed = 11
[spectral]
n = 256
n_modes = 4
"#;

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn compare_file_with_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BASE);
    assert!(frag(&["--config", &cfg, "solve", "log-master"]).status.success());
    let f = dir.path().join("out/log_master_density.csv").display().to_string();
    let m = stdout_json(&frag(&["compare", &f, &f]));
    assert_eq!(m["l1"], 0.0);
    assert_eq!(m["sup"], 0.0);
}

#[test]
fn validate_uniform_binary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BASE);
    let v = stdout_json(&frag(&["--config", &cfg, "validate"]));
    assert_eq!(v["report"]["pass"], true);
    assert!((v["report"]["mass_integral"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    assert_eq!(v["meta"]["seed"], 11);
}

#[test]
fn bad_config_gives_json_error_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[kernel]\nalpha = 1.0\nk = 1.0\nspeed = 2\n");
    let out = frag(&["--config", &cfg, "validate"]);
    assert!(!out.status.success());
    let e: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(e["error"], "config");
    assert_eq!(e["field"], "speed");
    assert_eq!(e["line"], 5);
}

#[test]
fn missing_config_is_reported() {
    let out = frag(&["spectrum"]);
    assert_eq!(out.status.code(), Some(2));
    let e: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(e["field"], "--config");
}

#[test]
fn tagged_output_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &BASE.replace("replicas = 100000", "replicas = 5000\ncorrelator_bins = 6\ntags = 10"));
    let mut files = Vec::new();
    for threads in ["1", "4"] {
        let out_dir = dir.path().join(format!("t{threads}")).display().to_string();
        let o = frag(&["--config", &cfg, "--threads", threads, "--out", &out_dir, "simulate", "tagged"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        files.push((
            fs::read(Path::new(&out_dir).join("tagged_density.csv")).unwrap(),
            fs::read(Path::new(&out_dir).join("tagged_correlator.csv")).unwrap(),
        ));
    }
    assert_eq!(files[0], files[1]);
    let other = dir.path().join("seed").display().to_string();
    assert!(frag(&["--config", &cfg, "--seed", "12", "--out", &other, "simulate", "tagged"]).status.success());
    assert_ne!(fs::read(Path::new(&other).join("tagged_density.csv")).unwrap(), files[0].0);
}

#[test]
fn every_csv_starts_with_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BASE);
    for cmd in [&["solve", "pbe"][..], &["solve", "fp"], &["spectrum"]] {
        let mut args = vec!["--config", cfg.as_str()];
        args.extend_from_slice(cmd);
        assert!(frag(&args).status.success(), "{cmd:?}");
    }
    let mut seen = 0;
    for entry in fs::read_dir(dir.path().join("out")).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => {
                let first = text.lines().next().unwrap();
                let meta: serde_json::Value = serde_json::from_str(first.strip_prefix("# ").unwrap()).unwrap();
                assert_eq!(meta["tool"], "frag");
                assert_eq!(meta["config_sha256"].as_str().unwrap().len(), 64);
                seen += 1;
            }
            Some("json") => {
                let v: serde_json::Value = serde_json::from_str(&text).unwrap();
                assert_eq!(v["meta"]["seed"], 11);
            }
            _ => {}
        }
    }
    assert!(seen >= 5);
}

#[test]
fn log_master_then_tagged_then_compare() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BASE);
    assert!(frag(&["--config", &cfg, "solve", "log-master"]).status.success());
    assert!(frag(&["--config", &cfg, "simulate", "tagged"]).status.success());
    let a = dir.path().join("out/log_master_density.csv").display().to_string();
    let b = dir.path().join("out/tagged_density.csv").display().to_string();
    let m = stdout_json(&frag(&["compare", &a, &b]));
    assert!(m["l1"].as_f64().unwrap() < 0.02, "{m}");
}

#[test]
fn spectrum_and_correlate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BASE);
    let spec = {
        assert!(frag(&["--config", &cfg, "spectrum"]).status.success());
        let text = fs::read_to_string(dir.path().join("out/spectrum.json")).unwrap();
        serde_json::from_str::<serde_json::Value>(&text).unwrap()
    };
    let eig: Vec<f64> = spec["eigenvalues"].as_array().unwrap().iter().map(|z| z["re"].as_f64().unwrap()).collect();
    assert_eq!(eig.len(), 4);
    assert!(eig.windows(2).all(|w| w[0] > w[1]));
    let cov = dir.path().join("c.csv");
    fs::write(&cov, "1,0,0,0\n0,0.5,0,0\n0,0,0.25,0\n0,0,0,0.125\n").unwrap();
    let o = frag(&["--config", &cfg, "correlate", "--covariance", cov.to_str().unwrap(), "--times", "0,0.5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("out/correlator_1.csv").exists());
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "1,0\n0,1\n").unwrap();
    let o = frag(&["--config", &cfg, "correlate", "--covariance", bad.to_str().unwrap(), "--times", "0"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn check_lindblad_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BASE);
    let r = stdout_json(&frag(&["--config", &cfg, "check-lindblad"]));
    assert_eq!(r["pass"], true);
    assert_eq!(r["grid_size"], 32);
}

#[test]
fn branching_conserves_mass_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &BASE.replace("replicas = 100000", "replicas = 2000\ninitial_particles = 4\ncorrelator_bins = 5"));
    assert!(frag(&["--config", &cfg, "simulate", "branching"]).status.success());
    let text = fs::read_to_string(dir.path().join("out/branching_summary.json")).unwrap();
    let s: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(s["max_relative_mass_defect"].as_f64().unwrap() < 1e-12);
    let corr = fs::read_to_string(dir.path().join("out/branching_correlator.csv")).unwrap();
    assert_eq!(corr.lines().nth(1), Some("x_i,x_j,gc,stderr"));
    assert_eq!(s["correlator_mean_counts"].as_array().unwrap().len(), 5);
}
