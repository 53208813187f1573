use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn workdir(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_binlatent")).args(args).current_dir(dir).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = bin(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn error_json(out: &Output) -> serde_json::Value {
    serde_json::from_str(String::from_utf8_lossy(&out.stderr).lines().last().unwrap()).unwrap()
}

#[test]
fn generate_learn_eval_round_trip() {
    let dir = workdir("round_trip");
    ok(&dir, &["generate", "--d", "3", "--m", "8", "--n", "200", "--rigid-block", "true", "--seed", "2", "--out", "g"]);
    let spec: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("g/spec.json")).unwrap()).unwrap();
    assert_eq!(spec["shapes"]["x"], serde_json::json!([8, 200]));
    assert_eq!(spec["config_hash"].as_str().unwrap().len(), 16);
    ok(&dir, &["learn", "--x", "g/X.csv", "--d", "3", "--sigma", "0", "--out", "fit"]);
    let eval: serde_json::Value =
        serde_json::from_str(&ok(&dir, &["eval", "--w-hat", "fit/W_hat.csv", "--w-true", "g/W.csv"])).unwrap();
    assert!(eval["error"].as_f64().unwrap() < 1e-6, "{eval}");
    let est: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("fit/estimate.json")).unwrap()).unwrap();
    assert_eq!(est["spectral"]["selected"].as_array().unwrap().len(), 3);
}

#[test]
fn learn_estimates_d_and_sigma_from_binary_input() {
    let dir = workdir("estimate");
    ok(&dir, &["generate", "--d", "2", "--m", "6", "--n", "20000", "--sigma", "0.3", "--format", "bin", "--out", "g"]);
    ok(&dir, &["learn", "--x", "g/X.bin", "--out", "fit"]);
    let est: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("fit/estimate.json")).unwrap()).unwrap();
    assert_eq!(est["d"], 2);
    assert!((est["sigma"].as_f64().unwrap() - 0.3).abs() < 0.02, "{est}");
}

#[test]
fn oracle_needs_hidden_matrix() {
    let dir = workdir("oracle");
    ok(&dir, &["generate", "--d", "2", "--m", "4", "--n", "300", "--sigma", "0.1", "--out", "g"]);
    let out = bin(&dir, &["learn", "--x", "g/X.csv", "--d", "2", "--sigma", "0.1", "--method", "oracle", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["kind"], "usage");
    ok(&dir, &["learn", "--x", "g/X.csv", "--d", "2", "--method", "oracle", "--h", "g/H.csv", "--out", "o"]);
}

#[test]
fn exit_codes() {
    let dir = workdir("exit_codes");
    assert_eq!(bin(&dir, &["learn"]).status.code(), Some(2));
    assert_eq!(bin(&dir, &["sweep", "--d", "2", "--m", "4", "--n-grid", "100", "--seeds", "1,1"]).status.code(), Some(2));
    let missing = bin(&dir, &["learn", "--x", "missing.csv", "--out", "o"]);
    assert_eq!(missing.status.code(), Some(3));
    assert_eq!(error_json(&missing)["kind"], "data");
    std::fs::write(dir.join("bad.csv"), "1,2\n3\n").unwrap();
    assert_eq!(bin(&dir, &["learn", "--x", "bad.csv", "--out", "o"]).status.code(), Some(3));
    // Two identical rows: the second moment cannot be whitened to rank 2.
    std::fs::write(dir.join("flat.csv"), "1,0,1,0,1,1\n1,0,1,0,1,1\n0.5,0.2,0.1,0.9,0.3,0.7\n").unwrap();
    let flat = bin(&dir, &["learn", "--x", "flat.csv", "--d", "3", "--sigma", "0.1", "--out", "o"]);
    assert_eq!(flat.status.code(), Some(4), "{}", String::from_utf8_lossy(&flat.stderr));
    assert_eq!(error_json(&flat)["kind"], "numerical");
}

#[test]
fn sweep_writes_one_row_per_run() {
    let dir = workdir("sweep");
    ok(
        &dir,
        &["sweep", "--d", "2", "--m", "5", "--n-grid", "1000,2000", "--sigma-grid", "0.2", "--seeds", "0..2", "--methods", "spectral,als", "--out", "s.csv"],
    );
    let text = std::fs::read_to_string(dir.join("s.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,sigma,seed,method,error,wall_time,eigenpair_count,candidate_count,status,config_hash");
    assert_eq!(lines.len(), 1 + 2 * 2 * 2);
    assert!(lines[1..].iter().all(|l| l.split(',').nth(8) == Some("ok")));
    assert!(lines[1].starts_with("1000,0.2,0,spectral,"));
    assert!(lines[2].starts_with("1000,0.2,0,als,"));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = workdir("config");
    std::fs::write(dir.join("run.cfg"), "# sweep\nd = 2\nm = 5\nn_grid = 1000\nsigma = 0.2\nseeds = 3\n").unwrap();
    let a = ok(&dir, &["sweep", "--config", "run.cfg"]);
    assert!(a.lines().nth(1).unwrap().starts_with("1000,0.2,3,spectral,"));
    let b = ok(&dir, &["sweep", "--config", "run.cfg", "--seeds", "4"]);
    assert!(b.lines().nth(1).unwrap().starts_with("1000,0.2,4,spectral,"));
}

#[test]
fn tensor_eig_lists_pairs() {
    let dir = workdir("tensor");
    // Orthogonal tensor e₁⊗e₁⊗e₁ + 2 e₂⊗e₂⊗e₂.
    std::fs::write(dir.join("t.txt"), "2\n1 0\n0 0\n0 0\n0 2\n").unwrap();
    let out = ok(&dir, &["tensor-eig", "--tensor", "t.txt"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "index,lambda,stability,residual,u1,u2");
    assert_eq!(lines.len(), 4);
    let lambdas: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!((lambdas[0] - 2.0).abs() < 1e-10 && (lambdas[1] - 1.0).abs() < 1e-10);
    // Off-axis pair u ∝ (2, 1) with λ = 2/√5.
    assert!((lambdas[2] - 2.0 / 5f64.sqrt()).abs() < 1e-10);
    std::fs::write(dir.join("asym.txt"), "2\n1 2\n0 0\n0 0\n0 2\n").unwrap();
    assert_eq!(bin(&dir, &["tensor-eig", "--tensor", "asym.txt"]).status.code(), Some(3));
}

#[test]
fn conditions_check_on_explicit_atoms() {
    let dir = workdir("conditions");
    std::fs::write(dir.join("atoms.txt"), "100,0.3\n010,0.3\n001,0.4\n").unwrap();
    let out = ok(&dir, &["conditions-check", "--d", "3", "--m", "3", "--atoms", "atoms.txt"]);
    let rep: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(rep["source"], "atoms");
    assert_eq!(rep["power_condition"], true);
    assert_eq!(rep["report"]["sigma_rank"], 3);
}
