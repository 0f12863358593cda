use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use objassoc::io;
use objassoc::LandmarkSummary;

fn objassoc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_objassoc"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = objassoc(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    objassoc(dir, args).status.code().unwrap()
}

#[test]
fn synth_writes_six_landmarks_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let stdout = ok(
        d,
        &[
            "synth",
            "--preset",
            "aisle_slow",
            "--seed",
            "7",
            "-o",
            "a.assoc.jsonl",
        ],
    );
    assert!(stdout.contains("6 gt landmarks"), "{stdout}");
    ok(
        d,
        &[
            "synth",
            "--preset",
            "aisle_slow",
            "--seed",
            "7",
            "-o",
            "b.assoc.jsonl",
        ],
    );
    let a = fs::read(d.join("a.assoc.jsonl")).unwrap();
    assert_eq!(a, fs::read(d.join("b.assoc.jsonl")).unwrap());
    let ds = io::read_dataset(&d.join("a.assoc.jsonl")).unwrap();
    assert_eq!(ds.gt_landmarks.len(), 6);
    assert_eq!(ds.config.seed, 7);
}

#[test]
fn synth_from_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sc = objassoc::preset("office_desk").unwrap();
    fs::write(d.join("scene.toml"), sc.to_toml_string()).unwrap();
    ok(
        d,
        &["synth", "--config", "scene.toml", "-o", "x.assoc.jsonl"],
    );
    assert_eq!(
        io::read_dataset(&d.join("x.assoc.jsonl"))
            .unwrap()
            .gt_landmarks
            .len(),
        5
    );
    fs::write(d.join("bad.toml"), "name = \"x\"\n").unwrap();
    assert_eq!(code(d, &["synth", "--config", "bad.toml", "-o", "y"]), 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = objassoc(d, &["synth", "--preset", "nope", "-o", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown preset"));

    assert_eq!(code(d, &["run", "missing.assoc.jsonl", "-o", "m"]), 3);

    ok(
        d,
        &["synth", "--preset", "office_desk", "-o", "d.assoc.jsonl"],
    );
    fs::write(d.join("bad.toml"), "group_size = 2\ngroup_overlap = 2\n").unwrap();
    assert_eq!(
        code(
            d,
            &["run", "d.assoc.jsonl", "--config", "bad.toml", "-o", "m"]
        ),
        2
    );
    assert_eq!(
        code(
            d,
            &["run", "d.assoc.jsonl", "--config", "absent.toml", "-o", "m"]
        ),
        2
    );

    fs::write(d.join("junk.assoc.jsonl"), "{\"kind\":\"keyframe\"}\n").unwrap();
    let out = objassoc(d, &["run", "junk.assoc.jsonl", "-o", "m"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));

    assert_eq!(code(d, &["eval", "missing", "d.assoc.jsonl", "-o", "r"]), 3);
}

#[test]
fn run_flat_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "synth",
            "--preset",
            "office_desk",
            "--seed",
            "2",
            "-o",
            "d.assoc.jsonl",
        ],
    );
    fs::write(d.join("cfg.toml"), "assoc.seed = 5\ntracker.tau = 0.5\n").unwrap();
    ok(
        d,
        &[
            "run",
            "d.assoc.jsonl",
            "--config",
            "cfg.toml",
            "-o",
            "m.assoc.jsonl",
        ],
    );
    let (manifest, lms) = io::read_map(&d.join("m.assoc.jsonl")).unwrap();
    let manifest = manifest.unwrap();
    assert_eq!(manifest.pipeline.assoc.seed, 5);
    assert_eq!(manifest.pipeline.tracker.tau, 0.5);
    assert_eq!(manifest.dataset_seed, 2);
    assert!(manifest.dataset_digest.is_some());
    assert!(!lms.is_empty());
    let table =
        io::parse_assignments(&fs::read_to_string(d.join("m.assignments.assoc.jsonl")).unwrap())
            .unwrap();
    let total: usize = lms.iter().map(|l| l.measurement_ids.len()).sum();
    assert_eq!(table.len(), total);

    ok(
        d,
        &[
            "run",
            "d.assoc.jsonl",
            "--flat",
            "-o",
            "f.assoc.jsonl",
            "--assignments",
            "fa.assoc.jsonl",
        ],
    );
    let (manifest, _) = io::read_map(&d.join("f.assoc.jsonl")).unwrap();
    let p = manifest.unwrap().pipeline;
    assert_eq!((p.group_size, p.group_overlap), (1, 0));
    assert!(d.join("fa.assoc.jsonl").exists());
}

#[test]
fn eval_perfect_map_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "synth",
            "--preset",
            "aisle_quick",
            "--seed",
            "3",
            "-o",
            "d.assoc.jsonl",
        ],
    );
    let ds = io::read_dataset(&d.join("d.assoc.jsonl")).unwrap();

    // ground truth as a map
    let perfect: Vec<LandmarkSummary> = ds
        .gt_landmarks
        .iter()
        .map(|g| LandmarkSummary {
            landmark_id: g.gt_landmark_id,
            class_label: g.class_label.clone(),
            associated_tracks: vec![],
            measurement_ids: ds
                .measurements()
                .filter(|m| m.gt_landmark_id == Some(g.gt_landmark_id))
                .map(|m| m.measurement_id)
                .collect(),
            refined_pose: Some(g.pose),
        })
        .filter(|l| !l.measurement_ids.is_empty())
        .collect();
    let manifest = io::RunManifest {
        tool_version: "test".into(),
        scenario: ds.config.name.clone(),
        dataset_seed: 3,
        dataset_digest: None,
        pipeline: objassoc::PipelineConfig::default(),
    };
    io::write_map(&manifest, &perfect, &d.join("p.assoc.jsonl")).unwrap();
    ok(
        d,
        &[
            "eval",
            "p.assoc.jsonl",
            "d.assoc.jsonl",
            "-o",
            "r.assoc.jsonl",
            "--csv",
            "out.csv",
        ],
    );
    let report = io::parse_report(&fs::read_to_string(d.join("r.assoc.jsonl")).unwrap()).unwrap();
    assert_eq!(report.association_accuracy, 100.0);
    assert_eq!(report.dataset_seed, 3);
    assert_eq!(report.landmark_pose_rmse_pos, Some(0.0));
    let hash = report.manifest_hash.unwrap();
    assert_eq!(hash.len(), 64);

    ok(d, &["run", "d.assoc.jsonl", "-o", "m.assoc.jsonl"]);
    ok(
        d,
        &[
            "eval",
            "m.assoc.jsonl",
            "d.assoc.jsonl",
            "-o",
            "r2.assoc.jsonl",
            "--csv",
            "out.csv",
        ],
    );
    let report2 = io::parse_report(&fs::read_to_string(d.join("r2.assoc.jsonl")).unwrap()).unwrap();
    assert_ne!(report2.manifest_hash.unwrap(), hash);

    let csv = fs::read_to_string(d.join("out.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("scenario,dataset_seed,group_size"));
    assert_eq!(csv.matches("scenario,").count(), 1);
    assert!(lines[1].starts_with("aisle_quick,3,7,2,0,100,"));
}

#[test]
fn compare_reports_rows_means_and_delta() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ok(
        d,
        &[
            "compare",
            "--preset",
            "aisle_quick",
            "--seeds",
            "3",
            "--csv",
            "c.csv",
        ],
    );
    assert!(out.contains("delta"));
    assert!(out.contains("means over 3 seeds"));
    let rows = out
        .lines()
        .filter(|l| l.trim_start().starts_with(char::is_numeric))
        .count();
    assert_eq!(rows, 3);
    assert_eq!(
        fs::read_to_string(d.join("c.csv")).unwrap().lines().count(),
        4
    );

    let single = ok(d, &["compare", "--preset", "aisle_quick", "--seeds", "1"]);
    assert!(!single.contains("means over"));
    assert!(!single.contains("mean "));

    ok(
        d,
        &["synth", "--preset", "office_desk", "-o", "d.assoc.jsonl"],
    );
    let on_file = ok(d, &["compare", "d.assoc.jsonl", "--seeds", "2"]);
    assert!(on_file.starts_with("office_desk"));
    assert_eq!(
        code(d, &["compare", "--preset", "aisle_quick", "--seeds", "0"]),
        2
    );
}
