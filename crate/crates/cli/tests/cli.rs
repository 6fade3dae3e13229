use std::path::Path;
use std::process::{Command, Output};

fn varsense(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_varsense")).args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn bounds_csv_has_fixed_header_and_sql_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[bounds]\nn_particles = 12\nwidths = { start = 0.5, stop = 1.0, points = 2 }\n").unwrap();
    let o = varsense(&["bounds", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("out/bounds.csv")).unwrap();
    assert!(text.starts_with("prior_width,sql_bmse,hl_bmse,psl_bmse,sql_ratio,hl_ratio,psl_ratio\n"));
    let first = &rows(&dir.path().join("out/bounds.csv"))[0];
    assert_eq!(first[1], "6.25000000000e-2");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[bounds]\nn_particle = 12\n").unwrap();
    let o = varsense(&["bounds", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_particle"));
}

#[test]
fn shots_flag_rejected_where_meaningless() {
    let dir = tempfile::tempdir().unwrap();
    let o = varsense(&["bounds", "--shots", "100"], dir.path());
    assert!(!o.status.success());
}

#[test]
fn zero_evaluation_budget_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[optimize]\nn_particles = 4\nshape = [1, 0]\noptimizer = { max_evaluations = 0 }\n").unwrap();
    let o = varsense(&["optimize", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert!(!o.status.success());
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_varsense"))
        .arg("bounds")
        .env("VARSENSE_OUT", dir.path().join("env"))
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("env/manifest.json").exists());
}

#[test]
fn lab_optimize_replays_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        "[optimize]\nn_particles = 6\nshape = [1, 0]\nevaluator = \"lab\"\noptimizer = { max_evaluations = 40 }\n",
    )
    .unwrap();
    let out = dir.path().join("run");
    let o = varsense(&["optimize", "--config", cfg.to_str().unwrap(), "--seed", "11", "--shots", "100"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["config"]["scan"]["shots_per_node"], 100);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 4);

    let replay = dir.path().join("again");
    let o = varsense(&["replay", out.join("manifest.json").to_str().unwrap()], &replay);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(!stdout.contains("MISMATCH"));
    assert_eq!(stdout.matches("match").count(), 4);
}

#[test]
fn replay_detects_tampered_digest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert!(varsense(&["bounds"], &out).status.success());
    let path = out.join("manifest.json");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut m: serde_json::Value = serde_json::from_str(&text).unwrap();
    m["outputs"][0]["sha256"] = serde_json::Value::String("0".repeat(64));
    std::fs::write(&path, serde_json::to_string(&m).unwrap()).unwrap();
    let o = varsense(&["replay", path.to_str().unwrap()], &dir.path().join("again"));
    assert!(!o.status.success());
}

#[test]
fn oqi_rows_beat_heisenberg_floor() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[oqi]\nn_particles = 12\nwidths = { start = 0.7, stop = 0.9, points = 3 }\n").unwrap();
    let o = varsense(&["oqi", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&dir.path().join("out/oqi.csv"));
    assert_eq!(r.len(), 3);
    for row in r {
        let db: f64 = row[3].parse().unwrap();
        assert!(db < -5.0 && db > -7.0, "{db}");
        assert_eq!(row[6], "true");
    }
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = varsense(&["selftest"], dir.path());
    assert!(o.status.success());
    assert!(!String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}
