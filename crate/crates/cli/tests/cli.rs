use std::path::Path;
use std::process::{Command, Output};

fn potions(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_potions"))
        .args(args)
        .env_remove("POTIONS_JOBS")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const MINI_CONFIG: &str = r#"{
  "family": "M1", "n": 6, "base": [0.75, 0.3, 0.3], "theta": [0, 0.3],
  "networks_per_theta": 5, "sims_per_network": 2
}"#;

#[test]
fn unknown_subcommand_exits_2() {
    let out = potions(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"family": "M1", "networks_per_theta": 0}"#).unwrap();
    let out = potions(&["experiment", "--config", path(&cfg), "--out", path(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let missing = potions(&["experiment", "--config", "/nonexistent.json", "--out", path(dir.path())]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = potions(&[
        "generate", "--family", "m1", "--theta", "0", "--max-tries", "1", "--n", "30",
        "--config", path(&write_spec(dir.path())), "--out", path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

fn write_spec(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("spec.json");
    std::fs::write(&p, r#"{"family": "M1", "base": [0.75, 0.001, 0.001], "theta": [0]}"#).unwrap();
    p
}

#[test]
fn generate_simulate_embed_resample() {
    let dir = tempfile::tempdir().unwrap();
    let graphs = dir.path().join("graphs");
    let out = potions(&["generate", "--family", "m1", "--theta", "0.3", "--count", "2", "--seed", "3", "--out", path(&graphs)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let g = graphs.join("graph_0000.edges");
    assert!(std::fs::read_to_string(&g).unwrap().starts_with("# n=24"));

    let sim = potions(&["simulate", "--graph", path(&g), "--seed", "7", "--max-steps", "0"]);
    assert!(sim.status.success());
    let stdout = String::from_utf8(sim.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);
    let json: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert!(json["discovery_time"].is_u64());
    let again = potions(&["simulate", "--graph", path(&g), "--seed", "7", "--max-steps", "0"]);
    assert_eq!(stdout.as_bytes(), &again.stdout[..]);

    let emb = potions(&["embed", "--graph", path(&g), "--kind", "lse", "--dim", "2"]);
    assert!(emb.status.success());
    let csv = String::from_utf8(emb.stdout).unwrap();
    assert_eq!(csv.lines().next(), Some("node,x1,x2"));
    assert_eq!(csv.lines().count(), 25);

    let rs = dir.path().join("rs");
    let out = potions(&["resample", "--graph", path(&g), "--kind", "ase", "--count", "3", "--max-tries", "100000", "--seed", "1", "--out", path(&rs)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(rs.join("resample_0002.edges").is_file());
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(rs.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["kind"], "ASE");
}

#[test]
fn experiment_is_deterministic_across_jobs_and_summarizes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("m1.json");
    std::fs::write(&cfg, MINI_CONFIG).unwrap();
    let run = |name: &str, jobs: &str| {
        let out_dir = dir.path().join(name);
        let out = potions(&["experiment", "family", "--config", path(&cfg), "--seed", "42", "--jobs", jobs, "--out", path(&out_dir)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(out_dir.join("manifest.json").is_file());
        std::fs::read(out_dir.join("records.csv")).unwrap()
    };
    let a = run("a", "1");
    let b = run("b", "3");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "experiment,family,theta,a,b,c,structure,network_id,sim_id,source,discovery_time,censored,steps_run,seed"
    );
    assert_eq!(text.lines().count(), 1 + 2 * 5 * 2);

    let sum = potions(&["summarize", "--records", path(&dir.path().join("a/records.csv"))]);
    assert!(sum.status.success());
    let table = String::from_utf8(sum.stdout).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.starts_with("family,theta,"));
}
