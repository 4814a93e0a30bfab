use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use recourse_core::config::DEFAULT_CONFIG_TOML;

fn recourse(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recourse"))
        .args(args)
        .current_dir(dir)
        .env_remove("RECOURSE_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const REPORT_LINE: &str = r#"{"id":"B1","subgroup":"Seniors","context":"ctx-01","prompts":["bus stop"],"evidence":[{"kind":"image","detail":"x"}],"harm_type":"Omission","severity":0.8,"reporters":10,"representativeness":0.9,"evidence_quality":0.7}"#;

#[test]
fn score_prints_full_precision_rows() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("tau5.toml"), DEFAULT_CONFIG_TOML.replace("tau_n = 8.0", "tau_n = 5.0")).unwrap();
    fs::write(tmp.path().join("r.jsonl"), format!("{REPORT_LINE}\n")).unwrap();
    let out = recourse(&["--config", "tau5.toml", "score", "r.jsonl"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# schema: recourse/scores v1");
    assert_eq!(lines[1], "id,mandate_score,mandated,threshold");
    let fields: Vec<&str> = lines[2].split(',').collect();
    assert_eq!(fields[0], "B1");
    let m: f64 = fields[1].parse().unwrap();
    assert!((m - 0.435791).abs() < 1e-6);
    assert_eq!(fields[2], "true");
    assert_eq!(fields[3], "0.12");
}

#[test]
fn score_empty_file_is_silent_success() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("empty.jsonl"), "").unwrap();
    let out = recourse(&["score", "empty.jsonl"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
}

#[test]
fn score_malformed_row_exits_2_with_line() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = REPORT_LINE.replace("\"reporters\":10", "\"reporters\":0");
    fs::write(tmp.path().join("bad.jsonl"), format!("{REPORT_LINE}\n{bad}\n")).unwrap();
    let out = recourse(&["score", "bad.jsonl"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));

    fs::write(tmp.path().join("junk.jsonl"), "not json\n").unwrap();
    let out = recourse(&["score", "junk.jsonl"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 1"));
}

#[test]
fn simulate_writes_run_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = recourse(&["--out", "run", "--seed", "11", "simulate"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("240 reports"));
    let run = tmp.path().join("run");
    for f in ["events.jsonl", "outcomes.csv", "reports.jsonl", "manifest.json"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(fs::read_to_string(run.join("outcomes.csv")).unwrap().starts_with("# schema: recourse/outcomes v1\n"));
    assert!(fs::read_to_string(run.join("events.jsonl"))
        .unwrap()
        .starts_with(r#"{"schema":"recourse/event-log","version":1}"#));
}

#[test]
fn env_var_sets_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_recourse"))
        .arg("simulate")
        .current_dir(tmp.path())
        .env("RECOURSE_OUTPUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(tmp.path().join("from-env/manifest.json").is_file());
}

#[test]
fn mismatched_subgroup_counts_fail_before_output() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), DEFAULT_CONFIG_TOML.replace("Newcomers = 49", "Newcomers = 50")).unwrap();
    let out = recourse(&["--config", "bad.toml", "--out", "run", "simulate"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("subgroup_counts"));
    assert!(!tmp.path().join("run").exists());
}

#[test]
fn sweep_single_zero_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let out = recourse(&["--out", "s", "sweep", "--thresholds", "0"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(tmp.path().join("s/sweep_baseline.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("0.00,240,100.0,"), "{}", rows[0]);
    assert!(rows[0].ends_with(",100.0"), "{}", rows[0]);
    assert!(!tmp.path().join("s/sweep_jury.csv").exists());
}

#[test]
fn sweep_with_jury_writes_both_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = recourse(&["--out", "s", "sweep", "--with-jury-intervention"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let base = fs::read_to_string(tmp.path().join("s/sweep_baseline.csv")).unwrap();
    let jury = fs::read_to_string(tmp.path().join("s/sweep_jury.csv")).unwrap();
    assert_eq!(base.lines().count(), 8);
    assert_eq!(jury.lines().count(), 8);
    assert!(jury.lines().next().unwrap().contains("jury delta_r=0.05"));
    let recall_at = |text: &str| -> f64 {
        let row = text.lines().find(|l| l.starts_with("0.12,")).unwrap();
        row.rsplit(',').next().unwrap().parse().unwrap()
    };
    assert!(recall_at(&jury) > recall_at(&base));
}

#[test]
fn report_emits_tables_and_dashboard() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(recourse(&["--out", "run", "simulate"], tmp.path()).status.success());
    let out = recourse(&["report", "run"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let run = tmp.path().join("run");
    let t1 = fs::read_to_string(run.join("table1_fix_types.csv")).unwrap();
    let t3 = fs::read_to_string(run.join("table3_subgroups.csv")).unwrap();
    assert_eq!(t1.lines().count(), 2 + 4);
    assert_eq!(t3.lines().count(), 2 + 6);
    assert!(run.join("table1_fix_types.txt").is_file());
    assert!(run.join("table3_subgroups.txt").is_file());
    let dash: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("dashboard.json")).unwrap()).unwrap();
    assert_eq!(dash["cases"].as_array().unwrap().len(), 240);
    assert_eq!(dash["schema"], "recourse/dashboard");
    assert!(dash["sweep"]["rows"].is_array());

    let first = fs::read(run.join("dashboard.json")).unwrap();
    assert!(recourse(&["report", "run"], tmp.path()).status.success());
    assert_eq!(first, fs::read(run.join("dashboard.json")).unwrap());
}

#[test]
fn report_with_large_k_min_suppresses_subgroups() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("k50.toml"), DEFAULT_CONFIG_TOML.replace("k_min = 5", "k_min = 50")).unwrap();
    assert!(recourse(&["--config", "k50.toml", "--out", "run", "simulate"], tmp.path()).status.success());
    let out = recourse(&["report", "run"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let t3 = fs::read_to_string(tmp.path().join("run/table3_subgroups.csv")).unwrap();
    let rows: Vec<&str> = t3.lines().skip(2).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.ends_with(",suppressed")), "{t3}");
}

#[test]
fn report_with_no_mandated_cases() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = DEFAULT_CONFIG_TOML.replace("default_tau_m = 0.12", "default_tau_m = 1.0");
    fs::write(tmp.path().join("none.toml"), cfg).unwrap();
    let sim = recourse(&["--config", "none.toml", "--out", "run", "simulate"], tmp.path());
    assert!(sim.status.success(), "{}", stderr(&sim));
    assert!(stdout(&sim).contains("0 mandated"));
    let out = recourse(&["report", "run"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let t1 = fs::read_to_string(tmp.path().join("run/table1_fix_types.csv")).unwrap();
    assert_eq!(t1.lines().count(), 6);
}

#[test]
fn report_on_incomplete_run_is_missing_run() {
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir(tmp.path().join("half")).unwrap();
    fs::write(tmp.path().join("half/manifest.json"), "{}").unwrap();
    let out = recourse(&["report", "half"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("missing"), "{}", stderr(&out));
}

#[test]
fn replay_tolerates_garbage_tail() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(recourse(&["--out", "run", "simulate"], tmp.path()).status.success());
    let log = tmp.path().join("run/events.jsonl");
    let mut text = fs::read_to_string(&log).unwrap();
    text.push_str("{\"case_id\":\"R0");
    fs::write(&log, text).unwrap();
    let out = recourse(&["replay", "run"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).starts_with("replayed 240 cases"));
    assert!(stderr(&out).contains("ignored unparsable final line"), "{}", stderr(&out));
}
