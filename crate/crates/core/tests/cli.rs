use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const STATIONARY: &str = r#"
[scenario]
id = "stationary_real_state"
preset = "harmonic"

[sampling]
n = 2000
seed = 3
"#;

fn bohmian(args: &[&str], env_root: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bohmian"));
    cmd.args(args).env_remove("BOHMIAN_OUTPUT");
    if let Some(root) = env_root {
        cmd.env("BOHMIAN_OUTPUT", root);
    }
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run_into(tmp: &TempDir, config: &str, run: &str) -> (PathBuf, Output) {
    let cfg = write_config(tmp.path(), &format!("{run}.toml"), config);
    let dir = tmp.path().join(run);
    let out = bohmian(&["run", cfg.to_str().unwrap(), "--output", dir.to_str().unwrap()], None);
    (dir, out)
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn run_writes_files_and_keeps_stdout_empty() {
    let tmp = TempDir::new().unwrap();
    let (dir, out) = run_into(&tmp, STATIONARY, "run");
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    assert!(stderr(&out).contains("[stationary_real_state]"));
    assert!(dir.join("report.json").is_file());
    assert!(dir.join("config.toml").is_file());
    let r = report(&dir);
    assert_eq!(r["pass"], true);
    assert_eq!(r["seeds"]["sampling"], 3);
}

#[test]
fn repeated_runs_differ_only_in_timing() {
    let tmp = TempDir::new().unwrap();
    let (a, out_a) = run_into(&tmp, STATIONARY, "a");
    let (b, out_b) = run_into(&tmp, STATIONARY, "b");
    assert_eq!(code(&out_a), 0);
    assert_eq!(code(&out_b), 0);
    let strip = |dir: &Path| {
        let text = fs::read_to_string(dir.join("report.json")).unwrap();
        text.lines().filter(|l| !l.contains("wall_seconds")).collect::<Vec<_>>().join("\n")
    };
    assert_eq!(strip(&a), strip(&b));
    for artifact in report(&a)["artifacts"].as_array().unwrap() {
        let path = artifact["path"].as_str().unwrap();
        assert_eq!(fs::read(a.join(path)).unwrap(), fs::read(b.join(path)).unwrap(), "{path}");
    }
}

#[test]
fn plot_tables_are_small() {
    let tmp = TempDir::new().unwrap();
    let (dir, out) = run_into(&tmp, STATIONARY, "run");
    assert_eq!(code(&out), 0);
    let plots: Vec<_> = fs::read_dir(dir.join("plots")).unwrap().map(|e| e.unwrap().path()).collect();
    assert!(!plots.is_empty());
    for p in plots {
        let rows = fs::read_to_string(&p).unwrap().lines().count() - 1;
        assert!(rows <= 500, "{} has {rows} rows", p.display());
    }
}

#[test]
fn verify_accepts_an_untouched_run() {
    let tmp = TempDir::new().unwrap();
    let (dir, _) = run_into(&tmp, STATIONARY, "run");
    let out = bohmian(&["verify", dir.to_str().unwrap()], None);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(out.stdout.is_empty());
}

#[test]
fn verify_reports_a_truncated_file() {
    let tmp = TempDir::new().unwrap();
    let (dir, _) = run_into(&tmp, STATIONARY, "run");
    let r = report(&dir);
    let victim = dir.join(r["artifacts"][0]["path"].as_str().unwrap());
    let bytes = fs::read(&victim).unwrap();
    fs::write(&victim, &bytes[..bytes.len() / 2]).unwrap();
    let out = bohmian(&["verify", dir.to_str().unwrap()], None);
    assert_ne!(code(&out), 0);
    assert!(stderr(&out).contains("hash mismatch"), "{}", stderr(&out));
}

#[test]
fn verify_lists_a_flipped_pass_flag() {
    let tmp = TempDir::new().unwrap();
    let (dir, _) = run_into(&tmp, STATIONARY, "run");
    let mut r = report(&dir);
    let name = r["checks"][0]["name"].as_str().unwrap().to_string();
    r["checks"][0]["pass"] = serde_json::Value::Bool(false);
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&r).unwrap()).unwrap();
    let out = bohmian(&["verify", dir.to_str().unwrap()], None);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert!(stderr(&out).contains(&name), "{}", stderr(&out));
}

#[test]
fn negative_mass_is_a_named_parameter_error() {
    let tmp = TempDir::new().unwrap();
    let (_, out) = run_into(&tmp, "[scenario]\nid = \"box_release\"\n\n[physics]\nmass = -1.0\n", "neg");
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("physics.mass"), "{}", stderr(&out));
}

#[test]
fn oversized_time_step_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let (_, out) = run_into(&tmp, "[scenario]\nid = \"double_slit\"\ndt = 0.5\n\n[sampling]\nn = 100\n", "dt");
    let c = code(&out);
    assert!(c == 1 || c == 3, "exit {c}: {}", stderr(&out));
}

#[test]
fn unknown_config_field_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let (_, out) = run_into(&tmp, "[scenario]\nid = \"box_release\"\nbogus = 1\n", "bad");
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(code(&bohmian(&["list-scenarios", "--bogus"], None)), 2);
    assert_eq!(code(&bohmian(&["--frobnicate", "run", "x.toml"], None)), 2);
}

#[test]
fn list_scenarios_prints_the_catalog() {
    let out = bohmian(&["list-scenarios"], None);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let ids: Vec<_> = text.lines().filter(|l| !l.starts_with(' ') && !l.is_empty()).collect();
    assert!(ids.len() >= 6, "{ids:?}");

    let out = bohmian(&["list-scenarios", "--json"], None);
    assert_eq!(code(&out), 0);
    let catalog: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let entries = catalog.as_array().unwrap();
    assert!(entries.len() >= 6);
    assert!(entries.iter().all(|e| e["id"].is_string() && e["claim"].is_string()));
}

#[test]
fn seed_override_and_output_root_pick_the_run_directory() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "s.toml", STATIONARY);
    let root = tmp.path().join("root");
    let out = bohmian(&["run", cfg.to_str().unwrap(), "--seed", "11", "--workers", "1"], Some(&root));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let dir = root.join("stationary_real_state-seed11");
    assert_eq!(report(&dir)["seeds"]["sampling"], 11);
}

#[test]
fn verify_of_a_missing_run_is_an_input_error() {
    let tmp = TempDir::new().unwrap();
    let out = bohmian(&["verify", tmp.path().join("nothing").to_str().unwrap()], None);
    assert_eq!(code(&out), 2);
}

#[test]
fn box_release_defaults_pass() {
    let tmp = TempDir::new().unwrap();
    let (dir, out) = run_into(&tmp, "[scenario]\nid = \"box_release\"\n", "box");
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(report(&dir)["pass"], true);
}
