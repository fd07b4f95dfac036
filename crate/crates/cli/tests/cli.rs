// SPDX-License-Identifier: Apache-2.0

use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn kernel(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../kernels").join(format!("{name}.k"))
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pragmabound")).args(args).output().expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let mut all = vec!["--json"];
    all.extend_from_slice(args);
    let out = run(&all);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json output")
}

const GEMV: &str = "kernel gemv { array A[4][6]: f32 in; array x[6]: f32 in; array y[4]: f32 inout;
  loop i 0 4 { S0: y[i] = 0; loop j 0 6 { S1: y[i] += A[i][j] * x[j]; } } }";

#[test]
fn bound_splits_computation_and_communication() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"loops": {"j0": {"pipeline": true, "unroll": 1, "tile": 1}}}"#).unwrap();
    let atax = kernel("atax");
    let v = json(&["bound", atax.to_str().unwrap(), "--config", cfg.to_str().unwrap()]);
    let b = &v["bound"];
    let (c, m, t) = (b["computation"].as_u64().unwrap(), b["communication"].as_u64().unwrap(), b["total"].as_u64().unwrap());
    assert_eq!(c + m, t);
    assert!(m > 0);
    assert_eq!(v["config"]["loops"]["j0"]["pipeline"], true);
}

#[test]
fn invalid_configs_name_the_broken_rule() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"loops": {"i1": {"pipeline": true, "unroll": 1, "tile": 1}}}"#).unwrap();
    let out = run(&["bound", kernel("atax").to_str().unwrap(), "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[full-unroll-under-pipeline]"));
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["bound"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["parse", "/nonexistent.k"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.k");
    std::fs::write(&bad, "kernel k {\n  loop i 0 4 { S: y[i] = 1; }\n}").unwrap();
    let out = run(&["parse", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2:"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn solve_respects_the_space_flags() {
    let two = kernel("2mm");
    let v = json(&["solve", two.to_str().unwrap(), "--fine-grained-only", "--max-partition", "1024"]);
    assert_eq!(v["status"], "optimal");
    assert_eq!(v["options"]["fine_grained_only"], true);
    assert!(v["lower_bound"].as_u64().unwrap() > 0);
    let free = json(&["solve", two.to_str().unwrap(), "--max-partition", "inf"]);
    assert!(free["lower_bound"].as_u64() <= v["lower_bound"].as_u64());
}

#[test]
fn dse_with_the_model_evaluator_stops_at_the_first_design() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let atax = kernel("atax");
    let args = ["dse", atax.to_str().unwrap(), "--evaluator", "model", "--ladder", "inf,1024,64,1", "--report", report.to_str().unwrap()];
    let v = json(&args);
    assert_eq!(v["best"]["step"], 0);
    let steps = v["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 8);
    assert!(steps[1..].iter().all(|s| s["outcome"] == "pruned"));
    assert_eq!(json(&["report", report.to_str().unwrap()]), v);
    assert!(run(&["report", report.to_str().unwrap()]).status.success());
}

#[test]
fn dse_with_simulated_rules_and_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let rules = dir.path().join("rules.json");
    std::fs::write(&rules, r#"[{"predicate": "coarse_parallel", "effect": "reject_coarse_parallel"}]"#).unwrap();
    let two = kernel("2mm");
    let ev = format!("simulated:{}", rules.display());
    let base = ["dse", two.to_str().unwrap(), "--evaluator", ev.as_str(), "--ladder", "inf,1024,64,1"];
    let seq = json(&base);
    let mut par = base.to_vec();
    par.extend(["--jobs", "4"]);
    assert_eq!(json(&par), seq);
    let best = seq["best"]["step"].as_u64().unwrap() as usize;
    assert_eq!(seq["steps"][best]["parallelism"], "fine");
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"[{"predicate": "often"}]"#).unwrap();
    let out = run(&["dse", two.to_str().unwrap(), "--evaluator", &format!("simulated:{}", bad.display())]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(run(&["dse", two.to_str().unwrap(), "--ladder", "64,128"]).status.code(), Some(1));
}

#[test]
fn json_output_is_byte_identical_across_runs() {
    let bicg = kernel("bicg");
    for args in [vec!["--json", "analyze", bicg.to_str().unwrap()], vec!["--json", "solve", bicg.to_str().unwrap()]] {
        assert_eq!(run(&args).stdout, run(&args).stdout);
    }
}

#[test]
fn exported_models_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gemm.mod");
    let gemm = kernel("gemm");
    let status = run(&["export-model", gemm.to_str().unwrap(), "-o", out.to_str().unwrap()]).status;
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(pragmabound::nlp::export::Model::parse(&text).is_ok());
    let side = dir.path().join("side.mod");
    json(&["solve", gemm.to_str().unwrap(), "--export-model", side.to_str().unwrap()]);
    assert_eq!(std::fs::read_to_string(&side).unwrap(), text);
}

#[test]
fn oracle_agrees_with_the_bound_on_random_configs() {
    let dir = tempfile::tempdir().unwrap();
    let k = dir.path().join("gemv.k");
    std::fs::write(&k, GEMV).unwrap();
    let v = json(&["oracle", k.to_str().unwrap(), "--random", "12", "--seed", "5"]);
    assert_eq!(v["violations"], 0);
    assert!(!v["runs"].as_array().unwrap().is_empty());
}

#[test]
fn calibration_files_change_latencies() {
    let dir = tempfile::tempdir().unwrap();
    let k = dir.path().join("gemv.k");
    std::fs::write(&k, GEMV).unwrap();
    let cal = dir.path().join("cal.toml");
    std::fs::write(&cal, "[ops.mul]\nlatency = 40\n").unwrap();
    let base = json(&["bound", k.to_str().unwrap()]);
    let slow = json(&["--calibration", cal.to_str().unwrap(), "bound", k.to_str().unwrap()]);
    assert!(slow["bound"]["computation"].as_u64() > base["bound"]["computation"].as_u64());
    std::fs::write(&cal, "[ops.sqrt]\nlatency = 4\n").unwrap();
    assert_eq!(run(&["--calibration", cal.to_str().unwrap(), "bound", k.to_str().unwrap()]).status.code(), Some(1));
    let n = json(&["count-space", k.to_str().unwrap()]);
    assert!(n["valid"].as_u64().unwrap() > 0);
}
