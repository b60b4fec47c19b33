use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sbm-robust"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sbm-robust-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("exp.toml");
    std::fs::write(&path, body).unwrap();
    path
}

const ABOVE: &str = r#"
n = 600
seeds = [0, 1]
[model]
k = 2
M = [[1.6, 0.4], [0.4, 1.6]]
pi = [0.5, 0.5]
d = 4.0
[adversary]
kind = "hub"
delta = 0.01
"#;

#[test]
fn below_threshold_config_exits_with_config_error() {
    let dir = scratch("below");
    let cfg = write_config(
        &dir,
        "n = 100\nseeds = [0]\n[model]\nk = 2\nM = [[1.4, 0.6], [0.6, 1.4]]\npi = [0.5, 0.5]\nd = 5.0\n",
    );
    let out = bin().args(["pipeline", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Kesten-Stigum"));
    let out = bin().args(["spectra", "--allow-below-ks", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn malformed_config_exits_with_config_error() {
    let dir = scratch("bad");
    let cfg = write_config(&dir, "n = 10\nseeds = [0]\nbogus = 1\n");
    let out = bin().args(["pipeline", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pipeline_emits_versioned_csv_and_stable_json() {
    let dir = scratch("pipeline");
    let cfg = write_config(&dir, ABOVE);
    let out = bin().args(["pipeline", "--seeds", "3..5", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# sbm-robust run-records v1 config="));
    assert!(lines.next().unwrap().starts_with("seed,status,rho"));
    assert!(lines.next().unwrap().starts_with("3,ok,"));
    assert!(lines.next().unwrap().starts_with("4,ok,"));

    let run = |path: &Path| {
        let out = bin()
            .args(["pipeline", "--format", "json", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(path)
            .output()
            .unwrap();
        assert!(out.status.success());
        String::from_utf8(out.stderr).unwrap()
    };
    let d1 = run(&dir.join("a.json"));
    let d2 = run(&dir.join("b.json"));
    assert!(d1.starts_with("digest "));
    assert_eq!(d1, d2);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("a.json")).unwrap()).unwrap();
    assert_eq!(v["seeds"].as_array().unwrap().len(), 2);
}

#[test]
fn sample_corrupt_recover_evaluate_chain() {
    let dir = scratch("chain");
    let cfg = write_config(&dir, ABOVE);
    let p = |s: &str| dir.join(s);
    let ok = |c: &mut Command| {
        let out = c.output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out
    };
    ok(bin().args(["sample", "--seed", "5", "--config"]).arg(&cfg).arg("--out").arg(p("g")));
    ok(bin()
        .args(["corrupt", "--seed", "5", "--config"])
        .arg(&cfg)
        .arg("--graph")
        .arg(p("g.edges"))
        .arg("--out")
        .arg(p("h")));
    assert_eq!(std::fs::read_to_string(p("h.edits")).unwrap().lines().count(), 6);
    ok(bin()
        .args(["recover", "--seed", "5", "--config"])
        .arg(&cfg)
        .arg("--graph")
        .arg(p("h.edges"))
        .arg("--out")
        .arg(p("r")));
    assert!(std::fs::read_to_string(p("r.trace.csv")).unwrap().starts_with("# trim-trace v1"));
    let out = ok(bin()
        .args(["evaluate", "--config"])
        .arg(&cfg)
        .arg("--estimate")
        .arg(p("r.labels"))
        .arg("--truth")
        .arg(p("g.labels"))
        .arg("--weights")
        .arg(p("r.weights.csv")));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["rho", "raw_inner", "frob_w", "frob_x", "advantage", "mi_per_vertex"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    let rho = v["rho"].as_f64().unwrap();
    assert!((-1.0..=1.0).contains(&rho));
}

#[test]
fn ihara_bass_subcommand_reports_small_residual() {
    let out = bin().args(["ihara-bass", "--graphs", "20", "--max-n", "15"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["max_residual"].as_f64().unwrap() <= 1e-8);
}
