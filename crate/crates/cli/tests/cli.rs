mod common;

use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;

fn gt_corpus(dir: &TempDir, n: usize, seed: u64) -> (std::path::PathBuf, Vec<sgg_core::graph::RawGraph>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graphs: Vec<_> = (0..n).map(|_| random_graph(&mut rng, 6, 6)).collect();
    let lines: Vec<_> = graphs.iter().enumerate().map(|(i, g)| dataset_line(&format!("img{i}"), g)).collect();
    (write_lines(dir.path(), "gt.jsonl", &lines), graphs)
}

fn stdout_json(out: &std::process::Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn s(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn evaluate_gt_against_itself() {
    let dir = TempDir::new().unwrap();
    let (gt, _) = gt_corpus(&dir, 20, 1);
    let csv = dir.path().join("per_predicate.csv");
    let report = stdout_json(&sgg(&["evaluate", "--gt", s(&gt), "--pred", s(&gt), "--csv", s(&csv), "--no-timestamp"]));
    assert_eq!(report["recall"], 100.0);
    assert_eq!(report["mean_recall"], 100.0);
    assert_eq!(report["ap50"], 100.0);
    assert_eq!(report["failure_rate"], 0.0);
    assert!(report.get("timestamp").is_none());
    let csv = std::fs::read_to_string(csv).unwrap();
    assert!(csv.starts_with("predicate,gt_count,recall\n"));
}

#[test]
fn evaluate_responses_and_garbage() {
    let dir = TempDir::new().unwrap();
    let (gt, graphs) = gt_corpus(&dir, 10, 2);
    let good: Vec<_> =
        graphs.iter().enumerate().map(|(i, g)| candidate_line(&format!("img{i}"), &response(g))).collect();
    let pred = write_lines(dir.path(), "pred.jsonl", &good);
    let report = stdout_json(&sgg(&["evaluate", "--gt", s(&gt), "--pred", s(&pred)]));
    assert_eq!(report["recall"], 100.0);
    assert!(report["timestamp"].is_u64());

    let garbage: Vec<_> = (0..10).map(|i| candidate_line(&format!("img{i}"), "I cannot see the image.")).collect();
    let pred = write_lines(dir.path(), "garbage.jsonl", &garbage);
    let report = stdout_json(&sgg(&["evaluate", "--gt", s(&gt), "--pred", s(&pred)]));
    assert_eq!(report["failure_rate"], 100.0);
    assert_eq!(report["recall"], 0.0);
}

#[test]
fn missing_predictions_count_as_failures() {
    let dir = TempDir::new().unwrap();
    let (gt, graphs) = gt_corpus(&dir, 4, 3);
    let lines =
        vec![dataset_line("img0", &graphs[0]), dataset_line("img1", &graphs[1]), dataset_line("stranger", &graphs[2])];
    let pred = write_lines(dir.path(), "pred.jsonl", &lines);
    let report = stdout_json(&sgg(&["evaluate", "--gt", s(&gt), "--pred", s(&pred)]));
    assert_eq!(report["failure_rate"], 50.0);
    assert_eq!(report["predictions_missing"], 2);
    assert_eq!(report["predictions_unknown_image"], 1);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let (gt, _) = gt_corpus(&dir, 3, 4);
    let missing = dir.path().join("nope.jsonl");
    assert_eq!(sgg(&["evaluate", "--gt", s(&missing), "--pred", s(&gt)]).status.code(), Some(1));
    assert_eq!(sgg(&["evaluate", "--gt", s(&gt)]).status.code(), Some(1));

    let empty = write_lines(dir.path(), "empty.jsonl", &[]);
    let out = sgg(&["evaluate", "--gt", s(&empty), "--pred", s(&gt)]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    assert_eq!(sgg(&["evaluate", "--gt", s(&gt), "--pred", s(&gt), "--iou-thresh", "1.5"]).status.code(), Some(3));
    assert_eq!(sgg(&["reward", "--gt", s(&gt), "--candidates", s(&gt), "--lambda2", "-1"]).status.code(), Some(3));
    assert_eq!(sgg(&["advantage", "--groups", s(&gt), "--epsilon", "2"]).status.code(), Some(3));
    assert_eq!(sgg(&["reward", "--gt", s(&gt), "--candidates", s(&gt), "--workers", "0"]).status.code(), Some(3));
    assert_eq!(sgg(&["--help"]).status.code(), Some(0));
}

#[test]
fn reward_lines_in_order_with_errors() {
    let dir = TempDir::new().unwrap();
    let (gt, graphs) = gt_corpus(&dir, 3, 5);
    let lines = vec![
        candidate_line("img0", &response(&graphs[0])),
        "{not json".to_string(),
        candidate_line("img9", "whatever"),
        candidate_line("img2", "<think>x</think><answer>{\"objects\": []}</answer>"),
    ];
    let cands = write_lines(dir.path(), "cands.jsonl", &lines);
    let out = sgg(&["reward", "--gt", s(&gt), "--candidates", s(&cands)]);
    assert!(out.status.success());
    let records: Vec<Value> =
        String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 4);
    assert_eq!(records[0]["total"], 2.0);
    assert_eq!(records[0]["status"], "Ok");
    assert!(records[1]["error"].is_string());
    assert_eq!(records[2]["error"], "unknown image_id");
    assert_eq!(records[3]["status"], "MissingKeywords");
    assert_eq!(records[3]["total"], 0.0);
    let ids: Vec<_> = records.iter().map(|r| r["line"].as_u64().unwrap()).collect();
    assert_eq!(ids, [1, 2, 3, 4]);
}

#[test]
fn soft_reward_on_identical_graph() {
    let dir = TempDir::new().unwrap();
    let (gt, graphs) = gt_corpus(&dir, 1, 6);
    let cands = write_lines(dir.path(), "cands.jsonl", &[candidate_line("img0", &response(&graphs[0]))]);
    let out = sgg(&["reward", "--gt", s(&gt), "--candidates", s(&cands), "--variant", "soft", "--no-format"]);
    let rec: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((rec["node_reward"].as_f64().unwrap() - 3.0).abs() < 1e-9);
    assert!((rec["edge_reward"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!((rec["total"].as_f64().unwrap() - 4.0).abs() < 1e-9);
}

#[test]
fn config_file_and_env_var() {
    let dir = TempDir::new().unwrap();
    let (gt, graphs) = gt_corpus(&dir, 1, 7);
    let cands = write_lines(dir.path(), "cands.jsonl", &[candidate_line("img0", &response(&graphs[0]))]);
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[reward]\nvariant = \"soft\"\ninclude_format = false\nlambda1 = 2.0\n").unwrap();
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_sgg"))
        .args(["reward", "--gt", s(&gt), "--candidates", s(&cands)])
        .env("SGG_CONFIG", &cfg)
        .output()
        .unwrap();
    let rec: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((rec["node_reward"].as_f64().unwrap() - 4.0).abs() < 1e-9);
    assert_eq!(rec["format"], 1.0);
    assert!((rec["total"].as_f64().unwrap() - 5.0).abs() < 1e-9);

    // Flags beat the file.
    let out = sgg(&["reward", "--gt", s(&gt), "--candidates", s(&cands), "--config", s(&cfg), "--variant", "hard"]);
    let rec: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rec["total"], 1.0);
}

#[test]
fn advantage_records() {
    let dir = TempDir::new().unwrap();
    let lines = vec![
        r#"{"group_id": "u", "rewards": [0.5, 0.5, 0.5]}"#.to_string(),
        r#"{"group_id": 2, "rewards": [1, 2, 3]}"#.to_string(),
        r#"{"group_id": "g1", "rewards": [1]}"#.to_string(),
        r#"{"group_id": "r", "rewards": [0, 1], "ratios": [[1, 1], [1]], "ref_ratios": [[1, 1], [1]]}"#.to_string(),
    ];
    let groups = write_lines(dir.path(), "groups.jsonl", &lines);
    let out = sgg(&["advantage", "--groups", s(&groups)]);
    assert!(out.status.success());
    let recs: Vec<Value> =
        String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(recs[0]["advantages"], serde_json::json!([0.0, 0.0, 0.0]));
    let a = recs[1]["advantages"].as_array().unwrap();
    assert!((a[0].as_f64().unwrap() + 1.2247).abs() < 1e-4);
    assert_eq!(a[1], 0.0);
    assert!((a[2].as_f64().unwrap() - 1.2247).abs() < 1e-4);
    assert_eq!(recs[1]["group_id"], 2);
    assert!(recs[2]["error"].as_str().unwrap().contains("at least 2"));
    assert_eq!(recs[3]["objective"], 0.0);
}

#[test]
fn parse_check_counts() {
    let dir = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = random_graph(&mut rng, 4, 3);
    let lines = vec![
        serde_json::json!({ "response_text": response(&g) }).to_string(),
        serde_json::json!({ "response_text": "no tags here" }).to_string(),
        serde_json::json!({ "response_text": "<answer>{\"objects\": [}</answer>" }).to_string(),
        "garbage".to_string(),
    ];
    let path = write_lines(dir.path(), "responses.jsonl", &lines);
    let summary = stdout_json(&sgg(&["parse-check", "--responses", s(&path), "--no-timestamp"]));
    assert_eq!(summary["total"], 3);
    assert_eq!(summary["counts"]["Ok"], 1);
    assert_eq!(summary["counts"]["NoAnswerBlock"], 1);
    assert_eq!(summary["counts"]["MalformedJson"], 1);
    assert_eq!(summary["invalid_lines"], 1);

    let empty = write_lines(dir.path(), "none.jsonl", &[]);
    let summary = stdout_json(&sgg(&["parse-check", "--responses", s(&empty), "--no-timestamp"]));
    assert_eq!(summary["total"], 0);
    assert!(summary["counts"].as_object().unwrap().values().all(|v| v == 0));
}

#[test]
fn prompt_rendering() {
    let dir = TempDir::new().unwrap();
    let out = sgg(&["prompt"]);
    let open = String::from_utf8(out.stdout).unwrap();
    assert!(open.starts_with("Generate a structured scene graph"));
    assert!(!open.contains("predefined"));

    let objs = write_lines(dir.path(), "objs.txt", &["person".into(), "bike".into()]);
    let rels = write_lines(dir.path(), "rels.txt", &["riding".into()]);
    let out = sgg(&["prompt", "--obj-classes", s(&objs), "--rel-classes", s(&rels)]);
    let closed = String::from_utf8(out.stdout).unwrap();
    assert!(closed.contains("predefined object set: `\"person\", \"bike\"`"));
    assert_eq!(sgg(&["prompt", "--obj-classes", s(&objs)]).status.code(), Some(1));
}
