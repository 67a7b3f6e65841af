//! End-to-end tests driving the coldkit binary.

use std::path::Path;
use std::process::{Command, Output};

fn coldkit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coldkit"))
        .args(args)
        .current_dir(cwd)
        .env_remove("COLDKIT_SEED")
        .output()
        .expect("binary runs")
}

fn assert_ok(output: &Output) {
    assert!(
        output.status.success(),
        "command failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn read_dir_sorted(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    paths
}

const S1_JSON: &str = r#"{"scene_id":"s1","feature_dim":null,"objects":[
  {"id":1,"category":"chair","centroid":[1,1,0],"size":[0.5,0.5,1],"feature":null},
  {"id":2,"category":"chair","centroid":[3,1,0],"size":[0.5,0.5,1],"feature":null},
  {"id":3,"category":"table","centroid":[1,2,0],"size":[0.5,0.5,1],"feature":null},
  {"id":4,"category":"door","centroid":[5,3,0],"size":[0.5,0.5,1],"feature":null}]}"#;

#[test]
fn gen_scenes_is_deterministic_and_honors_distractors() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let output = coldkit(
            &[
                "gen-scenes",
                "--seed",
                "7",
                "--count",
                "10",
                "--output-dir",
                out,
                "--distractors",
                "chair:2",
            ],
            dir.path(),
        );
        assert_ok(&output);
    }
    let a_files = read_dir_sorted(&dir.path().join("a"));
    let b_files = read_dir_sorted(&dir.path().join("b"));
    assert_eq!(a_files.len(), 10);
    for (a, b) in a_files.iter().zip(&b_files) {
        let a_bytes = std::fs::read(a).unwrap();
        let b_bytes = std::fs::read(b).unwrap();
        assert_eq!(a_bytes, b_bytes, "reruns must be byte-identical");
        let scene: serde_json::Value = serde_json::from_slice(&a_bytes).unwrap();
        let chairs = scene["objects"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|o| o["category"] == "chair")
            .count();
        // 2 distractors + the target
        assert!(chairs >= 3, "expected at least 3 chairs, got {chairs}");
    }
}

#[test]
fn gen_scenes_reports_placement_exhaustion() {
    let dir = tempfile::tempdir().unwrap();
    let output = coldkit(
        &[
            "gen-scenes",
            "--seed",
            "1",
            "--count",
            "1",
            "--output-dir",
            "out",
            "--objects",
            "50",
            "--room",
            "1,1,1",
            "--min-separation",
            "1",
        ],
        dir.path(),
    );
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("placement exhausted"),
        "stderr was: {stderr}"
    );
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let flag = coldkit(
        &[
            "gen-scenes",
            "--seed",
            "42",
            "--count",
            "2",
            "--output-dir",
            "flag",
        ],
        dir.path(),
    );
    assert_ok(&flag);
    let env_run = Command::new(env!("CARGO_BIN_EXE_coldkit"))
        .args(["gen-scenes", "--count", "2", "--output-dir", "env"])
        .current_dir(dir.path())
        .env("COLDKIT_SEED", "42")
        .output()
        .unwrap();
    assert_ok(&env_run);
    for (a, b) in read_dir_sorted(&dir.path().join("flag"))
        .iter()
        .zip(read_dir_sorted(&dir.path().join("env")))
    {
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(&b).unwrap());
    }
}

#[test]
fn config_file_supplies_defaults_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.json"),
        r#"{"seed": 42, "output_dir": "cfg"}"#,
    )
    .unwrap();
    let cfg = coldkit(
        &["gen-scenes", "--config", "run.json", "--count", "2"],
        dir.path(),
    );
    assert_ok(&cfg);
    let flag = coldkit(
        &[
            "gen-scenes",
            "--seed",
            "42",
            "--count",
            "2",
            "--output-dir",
            "flag",
        ],
        dir.path(),
    );
    assert_ok(&flag);
    for (a, b) in read_dir_sorted(&dir.path().join("cfg"))
        .iter()
        .zip(read_dir_sorted(&dir.path().join("flag")))
    {
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(&b).unwrap());
    }
}

#[test]
fn generate_targets_only_objects_with_distractors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("scenes")).unwrap();
    std::fs::write(dir.path().join("scenes/s1.json"), S1_JSON).unwrap();

    let output = coldkit(
        &[
            "generate",
            "--scenes",
            "scenes",
            "--output-dir",
            "out",
            "--seed",
            "5",
        ],
        dir.path(),
    );
    assert_ok(&output);
    let lines: Vec<serde_json::Value> =
        std::fs::read_to_string(dir.path().join("out/instructions.jsonl"))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
    let targets: Vec<u64> = lines
        .iter()
        .map(|v| v["target_id"].as_u64().unwrap())
        .collect();
    assert_eq!(targets, vec![1, 2], "only the chairs have distractors");
    assert_eq!(lines[0]["text"], "the chair closest to the table");
    assert_eq!(lines[0]["status"], "exclusive");

    // rerun: byte-identical outputs
    let rerun = coldkit(
        &[
            "generate",
            "--scenes",
            "scenes",
            "--output-dir",
            "out2",
            "--seed",
            "5",
        ],
        dir.path(),
    );
    assert_ok(&rerun);
    assert_eq!(
        std::fs::read(dir.path().join("out/instructions.jsonl")).unwrap(),
        std::fs::read(dir.path().join("out2/instructions.jsonl")).unwrap()
    );
    assert_eq!(
        std::fs::read(dir.path().join("out/token_sequences.jsonl")).unwrap(),
        std::fs::read(dir.path().join("out2/token_sequences.jsonl")).unwrap()
    );

    let all = coldkit(
        &[
            "generate",
            "--scenes",
            "scenes",
            "--output-dir",
            "all",
            "--seed",
            "5",
            "--all-targets",
        ],
        dir.path(),
    );
    assert_ok(&all);
    let all_lines = std::fs::read_to_string(dir.path().join("all/instructions.jsonl")).unwrap();
    assert_eq!(all_lines.lines().count(), 4);
}

#[test]
fn evaluate_self_gives_perfect_metrics() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&coldkit(
        &[
            "gen-scenes",
            "--seed",
            "11",
            "--count",
            "5",
            "--output-dir",
            "scenes",
            "--distractors",
            "chair:2",
        ],
        dir.path(),
    ));
    assert_ok(&coldkit(
        &[
            "generate",
            "--scenes",
            "scenes",
            "--output-dir",
            "gen",
            "--seed",
            "11",
        ],
        dir.path(),
    ));
    let output = coldkit(
        &[
            "evaluate",
            "--instructions",
            "gen/instructions.jsonl",
            "--scenes",
            "scenes",
            "--references",
            "gen/instructions.jsonl",
            "--perturb",
            "close",
            "--output",
            "report.json",
        ],
        dir.path(),
    );
    assert_ok(&output);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["metrics"]["bleu"][0], 1.0);
    assert_eq!(report["metrics"]["rouge_l"], 1.0);
    assert_eq!(report["metrics"]["cider"], 10.0);
    let original = report["perturbation"]["grounding_acc_original"]
        .as_f64()
        .unwrap();
    let perturbed = report["perturbation"]["grounding_acc_perturbed"]
        .as_f64()
        .unwrap();
    assert!(
        perturbed < original,
        "perturbation must hurt grounding: {perturbed} vs {original}"
    );
    assert!(report["config"]["thresholds"]["near_max"].as_f64().unwrap() > 0.0);
}

#[test]
fn evaluate_names_missing_scene() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("scenes")).unwrap();
    std::fs::write(dir.path().join("scenes/s1.json"), S1_JSON).unwrap();
    std::fs::write(
        dir.path().join("bad.jsonl"),
        r#"{"scene_id":"ghost-scene","target_id":1,"text":"the chair","relation":null,"status":"failed"}"#,
    )
    .unwrap();
    let output = coldkit(
        &[
            "evaluate",
            "--instructions",
            "bad.jsonl",
            "--scenes",
            "scenes",
        ],
        dir.path(),
    );
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("ghost-scene"), "stderr was: {stderr}");
}

#[test]
fn ground_classifies_against_expected_target() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s1.json"), S1_JSON).unwrap();
    let output = coldkit(
        &[
            "ground",
            "--scene",
            "s1.json",
            "--text",
            "the chair closest to the table",
            "--target",
            "1",
        ],
        dir.path(),
    );
    assert_ok(&output);
    let result: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(result["verdict"], "unique_target");
    assert_eq!(result["matched_ids"][0], 1);

    let wrong = coldkit(
        &[
            "ground",
            "--scene",
            "s1.json",
            "--text",
            "the chair closest to the table",
            "--target",
            "2",
        ],
        dir.path(),
    );
    assert_ok(&wrong);
    let result: serde_json::Value = serde_json::from_slice(&wrong.stdout).unwrap();
    assert_eq!(result["verdict"], "unique_wrong");
    assert_eq!(result["error_mode"], "wrong_description");
}

#[test]
fn perturb_rewrites_instruction_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("in.jsonl"),
        r#"{"scene_id":"s1","target_id":1,"text":"the chair closest to the table","relation":null,"status":"exclusive"}
{"scene_id":"s1","target_id":2,"text":"the book between the lamp and the plant","relation":null,"status":"exclusive"}"#,
    )
    .unwrap();
    let output = coldkit(
        &[
            "perturb",
            "--mode",
            "far",
            "--instructions",
            "in.jsonl",
            "--output",
            "out.jsonl",
        ],
        dir.path(),
    );
    assert_ok(&output);
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(dir.path().join("out.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines[0]["text"], "the chair far from the table");
    assert_eq!(lines[1]["text"], "the book far from the lamp");

    let single = coldkit(
        &[
            "perturb",
            "--mode",
            "close",
            "--text",
            "the chair farthest from the door",
        ],
        dir.path(),
    );
    assert_ok(&single);
    assert_eq!(
        String::from_utf8_lossy(&single.stdout).trim(),
        "the chair close to the door"
    );
}

#[test]
fn feature_classifier_changes_distractor_sets() {
    // chair#2's feature sits on the "table" prototype, so under the
    // feature classifier chair#1 has no distractor and gets a bare
    // reference, while the oracle classifier pairs the two chairs up
    let scene = r#"{"scene_id":"feat","feature_dim":2,"objects":[
      {"id":1,"category":"chair","centroid":[1,1,0],"size":[0.5,0.5,1],"feature":[0.0,1.0]},
      {"id":2,"category":"chair","centroid":[3,1,0],"size":[0.5,0.5,1],"feature":[1.0,0.0]},
      {"id":3,"category":"table","centroid":[1,2,0],"size":[0.5,0.5,1],"feature":[1.0,0.0]},
      {"id":4,"category":"door","centroid":[5,3,0],"size":[0.5,0.5,1],"feature":[0.6,0.8]}]}"#;
    let prototypes =
        r#"{"dim":2,"prototypes":{"chair":[0.0,1.0],"table":[1.0,0.0],"door":[0.6,0.8]}}"#;
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("scenes")).unwrap();
    std::fs::write(dir.path().join("scenes/feat.json"), scene).unwrap();
    std::fs::write(dir.path().join("protos.json"), prototypes).unwrap();

    let output = coldkit(
        &[
            "generate",
            "--scenes",
            "scenes",
            "--output-dir",
            "out",
            "--seed",
            "1",
            "--classifier",
            "features",
            "--prototypes",
            "protos.json",
            "--all-targets",
        ],
        dir.path(),
    );
    assert_ok(&output);
    let lines: Vec<serde_json::Value> =
        std::fs::read_to_string(dir.path().join("out/instructions.jsonl"))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
    let by_target = |id: u64| lines.iter().find(|v| v["target_id"] == id).unwrap();
    // chair#1: no object classifies as "chair", so no distractors
    assert_eq!(by_target(1)["text"], "the chair");
    // chair#2 classifies as "table", so the real table is its distractor
    // and an anchored instruction is required for target table#3
    assert_eq!(by_target(3)["relation"]["kind"], "closest");

    let missing = coldkit(
        &[
            "generate",
            "--scenes",
            "scenes",
            "--output-dir",
            "out2",
            "--seed",
            "1",
            "--classifier",
            "features",
        ],
        dir.path(),
    );
    assert!(!missing.status.success(), "--prototypes must be required");
}

#[test]
fn losses_selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let output = coldkit(&["losses", "selftest", "--checks", "25"], dir.path());
    assert_ok(&output);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(
        stdout.contains("losses selftest ok"),
        "stdout was: {stdout}"
    );
    assert!(stdout.contains("gibbs inequality: 1000/1000"));
}
