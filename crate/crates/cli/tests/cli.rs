use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn cone(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cone"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    cone(&args)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn sample_writes_mass_and_position_columns_with_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("sample", &configs().join("minimal_gamma.toml"), dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("measure_0000.csv")).unwrap();
    let mut lines = text.lines();
    let meta = lines.next().unwrap();
    assert!(meta.starts_with("# config_sha256="));
    assert!(meta.contains(" seed=20261016"));
    assert_eq!(lines.next(), Some("mass,x1,x2"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert!(!rows.is_empty());
    for r in &rows {
        assert_eq!(r.len(), 3);
        assert!(r[0] >= 1e-3);
        assert!((0.0..1.0).contains(&r[1]) && (0.0..1.0).contains(&r[2]));
    }
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("sample.json")).unwrap()).unwrap();
    assert_eq!(json["meta"]["seed"], 20261016);
    assert_eq!(json["measures"][0]["atoms"].as_array().unwrap().len(), rows.len());
}

#[test]
fn sample_is_reproducible_and_seed_sensitive() {
    let cfg = configs().join("minimal_gamma.toml");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    assert_eq!(code(&run("sample", &cfg, a.path(), &[])), 0);
    assert_eq!(code(&run("sample", &cfg, b.path(), &[])), 0);
    assert_eq!(code(&run("sample", &cfg, c.path(), &["--seed", "1"])), 0);
    for f in ["measure_0000.csv", "sample.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
    }
    let first = fs::read_to_string(a.path().join("measure_0000.csv")).unwrap();
    let other = fs::read_to_string(c.path().join("measure_0000.csv")).unwrap();
    assert_ne!(first, other);
    // The hash covers the file as written; the override shows up as the seed.
    let hash = |s: &str| s.lines().next().unwrap().split_whitespace().nth(1).unwrap().to_string();
    assert_eq!(hash(&first), hash(&other));
    assert!(other.lines().next().unwrap().contains(" seed=1 "));
}

#[test]
fn invalid_configs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let zero = write_config(
        dir.path(),
        "zero.toml",
        "seed = 1\n[model]\nname = \"gamma\"\nepsilon = 0.0\n",
    );
    assert_eq!(code(&run("sample", &zero, dir.path(), &[])), 2);
    let unknown = write_config(
        dir.path(),
        "unknown.toml",
        "seed = 1\nextra = 2\n[model]\nname = \"gamma\"\nepsilon = 1e-3\n",
    );
    assert_eq!(code(&run("sample", &unknown, dir.path(), &[])), 2);
    let missing = dir.path().join("absent.toml");
    assert_eq!(code(&run("sample", &missing, dir.path(), &[])), 2);
    assert_eq!(code(&cone(&["sample"])), 2);
    assert_eq!(code(&cone(&["resample", "--config", "x.toml"])), 2);
}

fn evolve_config(dir: &Path, dt: f64, times: &str) -> PathBuf {
    write_config(
        dir,
        "evolve.toml",
        &format!("seed = 4\n[model]\nname = \"gamma\"\nepsilon = 1e-2\n[dynamics]\ndt = {dt:e}\ntimes = {times}\n"),
    )
}

fn rows_at(text: &str, time: &str) -> Vec<String> {
    text.lines()
        .skip(2)
        .filter(|l| l.split(',').next() == Some(time))
        .map(|l| l.split_once(',').unwrap().1.to_string())
        .collect()
}

#[test]
fn evolve_with_zero_time_echoes_the_initial_measure() {
    let dir = tempfile::tempdir().unwrap();
    let out0 = dir.path().join("zero");
    let out1 = dir.path().join("longer");
    let o = run("evolve", &evolve_config(dir.path(), 1e-3, "[0.0]"), &out0, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        code(&run("evolve", &evolve_config(dir.path(), 1e-3, "[0.0, 0.02]"), &out1, &[])),
        0
    );
    let zero = fs::read_to_string(out0.join("trajectory.csv")).unwrap();
    let longer = fs::read_to_string(out1.join("trajectory.csv")).unwrap();
    assert_eq!(zero.lines().nth(1), Some("time,atom,mass,x1,x2"));
    let initial = rows_at(&zero, "0");
    assert!(!initial.is_empty());
    assert_eq!(initial, rows_at(&longer, "0"));
    assert_eq!(rows_at(&longer, "0.02").len(), initial.len());
    assert_ne!(rows_at(&longer, "0.02"), initial);
    let diag: serde_json::Value = serde_json::from_str(&fs::read_to_string(out0.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["atoms"].as_u64().unwrap() as usize, initial.len());
    assert_eq!(diag["meta"]["seed"], 4);
    assert_eq!(diag["diagnostics"]["steps"], 0);
}

#[test]
fn evolve_is_reproducible_and_rejects_large_steps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("evolve_slp.toml");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&run("evolve", &cfg, &a, &[])), 0);
    assert_eq!(code(&run("evolve", &cfg, &b, &[])), 0);
    for f in ["trajectory.csv", "diagnostics.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
    let diag: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["observables"].as_array().unwrap().len(), 2);
    assert_eq!(diag["observables"][0]["values"].as_array().unwrap().len(), 3);
    assert_eq!(
        code(&run("evolve", &evolve_config(dir.path(), 2e-2, "[0.0, 0.1]"), &a, &[])),
        2
    );
    assert_eq!(code(&run("evolve", &configs().join("minimal_gamma.toml"), &a, &[])), 2);
}

#[test]
fn verify_passes_writes_reports_and_report_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("quick_checks.toml");
    let o = run("verify", &cfg, dir.path(), &["--workers", "1"]);
    assert_eq!(
        code(&o),
        0,
        "{}{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    let names: Vec<&str> = json["results"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["laplace_functional", "generator", "mecke"]);
    assert_eq!(json["meta"]["seed"], 3);
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with("# config_sha256="));
    assert!(summary.lines().nth(1).unwrap().starts_with("check,part,lhs,rhs"));

    let o = run("report", &cfg, dir.path(), &[]);
    assert_eq!(code(&o), 0);
    assert!(fs::read_to_string(dir.path().join("report.md"))
        .unwrap()
        .contains("| mecke |"));
    assert_eq!(
        code(&run("report", &configs().join("minimal_gamma.toml"), dir.path(), &[])),
        2
    );
    let empty = tempfile::tempdir().unwrap();
    assert_eq!(code(&cone(&["report", "--out", empty.path().to_str().unwrap()])), 2);
}

#[test]
fn verify_results_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("quick_checks.toml");
    let one = dir.path().join("one");
    let many = dir.path().join("many");
    assert_eq!(code(&run("verify", &cfg, &one, &["--workers", "1", "--check", "mecke"])), 0);
    assert_eq!(code(&run("verify", &cfg, &many, &["--workers", "3", "--check", "mecke"])), 0);
    assert_eq!(
        fs::read(one.join("verify.json")).unwrap(),
        fs::read(many.join("verify.json")).unwrap()
    );
}

#[test]
fn unknown_check_name_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("minimal_gamma.toml");
    assert_eq!(code(&run("verify", &cfg, dir.path(), &["--check", "no_such_check"])), 2);
    let bad = write_config(
        dir.path(),
        "bad.json",
        r#"{"seed":1,"model":{"name":"gamma","epsilon":1e-6},"checks":[{"name":"no_such_check"}]}"#,
    );
    assert_eq!(code(&run("verify", &bad, dir.path(), &[])), 2);
}

#[test]
fn injected_error_fixture_fails_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("verify", &configs().join("injected_error.json"), dir.path(), &[]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stdout));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(json["all_pass"], false);
    assert_eq!(json["results"][0]["injection"], "corrupt_density");
    assert_eq!(
        code(&run("report", &configs().join("injected_error.json"), dir.path(), &[])),
        1
    );
}
