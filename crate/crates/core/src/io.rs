//! Line-delimited record files (`.assoc.jsonl`).
//!
//! Every line is one envelope:
//!
//! ```text
//! {"kind":"keyframe","schema_version":1,"payload":{...}}
//! ```
//!
//! Payload keys are written in struct declaration order and floats in their
//! shortest round-trip form, so identical inputs give byte-identical files.
//! Quaternions are written `(w, x, y, z)` with `w >= 0`.
//!
//! A dataset file holds one `config` record (the scenario), then its
//! `gt_landmark` records, then one `keyframe` record per keyframe. A map file
//! holds a `config` record with the run manifest followed by `landmark`
//! records. Assignment files hold `assignment` records; report files a single
//! `report` record.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::geometry::Keyframe;
use crate::metrics::{EvalReport, LandmarkSummary};
use crate::synth::{Dataset, GtLandmark, ScenarioConfig};

pub const SCHEMA_VERSION: u32 = 1;
pub const FILE_EXTENSION: &str = ".assoc.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Keyframe,
    GtLandmark,
    Config,
    Landmark,
    Assignment,
    Report,
}

#[derive(Serialize)]
struct EnvelopeOut<'a, T: Serialize> {
    kind: RecordKind,
    schema_version: u32,
    payload: &'a T,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvelopeIn {
    kind: RecordKind,
    schema_version: u32,
    payload: serde_json::Value,
}

/// Everything needed to re-derive a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub scenario: String,
    pub dataset_seed: u64,
    /// Hex SHA-256 of the dataset file, when known.
    pub dataset_digest: Option<String>,
    pub pipeline: PipelineConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub measurement_id: u64,
    pub landmark_id: u64,
}

fn push_record<T: Serialize>(out: &mut String, kind: RecordKind, payload: &T) {
    let env = EnvelopeOut {
        kind,
        schema_version: SCHEMA_VERSION,
        payload,
    };
    let line = serde_json::to_string(&env).expect("records serialize to JSON");
    let _ = writeln!(out, "{line}");
}

fn parse_lines(text: &str) -> Result<Vec<(usize, RecordKind, serde_json::Value)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let env: EnvelopeIn = serde_json::from_str(raw).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if env.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse {
                line,
                message: format!("unsupported schema_version {}", env.schema_version),
            });
        }
        out.push((line, env.kind, env.payload));
    }
    Ok(out)
}

fn payload<T: DeserializeOwned>(line: usize, value: serde_json::Value) -> Result<T> {
    serde_json::from_value(value).map_err(|e| Error::Parse {
        line,
        message: e.to_string(),
    })
}

fn unexpected(line: usize, kind: RecordKind, file: &str) -> Error {
    Error::Parse {
        line,
        message: format!("unexpected {kind:?} record in a {file} file"),
    }
}

pub fn dataset_to_string(ds: &Dataset) -> String {
    let mut out = String::new();
    push_record(&mut out, RecordKind::Config, &ds.config);
    for g in &ds.gt_landmarks {
        push_record(&mut out, RecordKind::GtLandmark, g);
    }
    for k in &ds.keyframes {
        push_record(&mut out, RecordKind::Keyframe, k);
    }
    out
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, dataset_to_string(ds))?;
    Ok(())
}

/// Parses and validates a dataset; the first violation is reported with its
/// line number.
pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut config: Option<ScenarioConfig> = None;
    let mut gts: Vec<GtLandmark> = Vec::new();
    let mut keyframes: Vec<(usize, Keyframe)> = Vec::new();
    let mut gt_ids = HashSet::new();
    let mut measurement_ids = HashSet::new();

    for (line, kind, value) in parse_lines(text)? {
        let fail = |message: String| Error::Parse { line, message };
        match kind {
            RecordKind::Config => {
                if config.is_some() {
                    return Err(fail("second config record".into()));
                }
                config = Some(payload(line, value)?);
            }
            RecordKind::GtLandmark => {
                let g: GtLandmark = payload(line, value)?;
                if !gt_ids.insert(g.gt_landmark_id) {
                    return Err(fail(format!(
                        "duplicate gt_landmark_id {}",
                        g.gt_landmark_id
                    )));
                }
                gts.push(g);
            }
            RecordKind::Keyframe => {
                let k: Keyframe = payload(line, value)?;
                k.validate().map_err(|e| fail(e.to_string()))?;
                if let Some((_, prev)) = keyframes.last() {
                    if k.keyframe_id <= prev.keyframe_id {
                        return Err(fail(format!(
                            "keyframe id {} is not increasing",
                            k.keyframe_id
                        )));
                    }
                }
                for m in &k.measurements {
                    if !measurement_ids.insert(m.measurement_id) {
                        return Err(fail(format!(
                            "duplicate measurement_id {}",
                            m.measurement_id
                        )));
                    }
                }
                keyframes.push((line, k));
            }
            other => return Err(unexpected(line, other, "dataset")),
        }
    }

    for (line, k) in &keyframes {
        for m in &k.measurements {
            if let Some(g) = m.gt_landmark_id {
                if !gt_ids.contains(&g) {
                    return Err(Error::Parse {
                        line: *line,
                        message: format!(
                            "measurement {} references unknown gt_landmark_id {g}",
                            m.measurement_id
                        ),
                    });
                }
            }
        }
    }

    let config = config.ok_or(Error::Parse {
        line: 0,
        message: "dataset has no config record".into(),
    })?;
    Ok(Dataset {
        config,
        gt_landmarks: gts,
        keyframes: keyframes.into_iter().map(|(_, k)| k).collect(),
    })
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    parse_dataset(&fs::read_to_string(path)?)
}

pub fn map_to_string(manifest: &RunManifest, landmarks: &[LandmarkSummary]) -> String {
    let mut out = String::new();
    push_record(&mut out, RecordKind::Config, manifest);
    for l in landmarks {
        push_record(&mut out, RecordKind::Landmark, l);
    }
    out
}

pub fn write_map(manifest: &RunManifest, landmarks: &[LandmarkSummary], path: &Path) -> Result<()> {
    fs::write(path, map_to_string(manifest, landmarks))?;
    Ok(())
}

pub fn parse_map(text: &str) -> Result<(Option<RunManifest>, Vec<LandmarkSummary>)> {
    let mut manifest = None;
    let mut landmarks = Vec::new();
    let mut ids = HashSet::new();
    for (line, kind, value) in parse_lines(text)? {
        match kind {
            RecordKind::Config => manifest = Some(payload(line, value)?),
            RecordKind::Landmark => {
                let l: LandmarkSummary = payload(line, value)?;
                if !ids.insert(l.landmark_id) {
                    return Err(Error::Parse {
                        line,
                        message: format!("duplicate landmark_id {}", l.landmark_id),
                    });
                }
                landmarks.push(l);
            }
            other => return Err(unexpected(line, other, "map")),
        }
    }
    Ok((manifest, landmarks))
}

pub fn read_map(path: &Path) -> Result<(Option<RunManifest>, Vec<LandmarkSummary>)> {
    parse_map(&fs::read_to_string(path)?)
}

pub fn manifest_to_string(manifest: &RunManifest) -> String {
    let mut out = String::new();
    push_record(&mut out, RecordKind::Config, manifest);
    out
}

pub fn assignments_to_string(table: &BTreeMap<u64, u64>) -> String {
    let mut out = String::new();
    for (&measurement_id, &landmark_id) in table {
        push_record(
            &mut out,
            RecordKind::Assignment,
            &AssignmentRecord {
                measurement_id,
                landmark_id,
            },
        );
    }
    out
}

pub fn write_assignments(table: &BTreeMap<u64, u64>, path: &Path) -> Result<()> {
    fs::write(path, assignments_to_string(table))?;
    Ok(())
}

pub fn parse_assignments(text: &str) -> Result<BTreeMap<u64, u64>> {
    let mut table = BTreeMap::new();
    for (line, kind, value) in parse_lines(text)? {
        if kind != RecordKind::Assignment {
            return Err(unexpected(line, kind, "assignment"));
        }
        let a: AssignmentRecord = payload(line, value)?;
        if table.insert(a.measurement_id, a.landmark_id).is_some() {
            return Err(Error::Parse {
                line,
                message: format!("measurement {} assigned twice", a.measurement_id),
            });
        }
    }
    Ok(table)
}

pub fn report_to_string(report: &EvalReport) -> String {
    let mut out = String::new();
    push_record(&mut out, RecordKind::Report, report);
    out
}

pub fn write_report(report: &EvalReport, path: &Path) -> Result<()> {
    fs::write(path, report_to_string(report))?;
    Ok(())
}

pub fn parse_report(text: &str) -> Result<EvalReport> {
    let mut found = None;
    for (line, kind, value) in parse_lines(text)? {
        if kind != RecordKind::Report || found.is_some() {
            return Err(unexpected(line, kind, "report"));
        }
        found = Some(payload(line, value)?);
    }
    found.ok_or(Error::Parse {
        line: 0,
        message: "report file is empty".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, preset};

    fn small_dataset() -> Dataset {
        let mut cfg = preset("office_desk").unwrap();
        cfg.seed = 5;
        generate(&cfg).unwrap()
    }

    #[test]
    fn dataset_round_trip_and_determinism() {
        let ds = small_dataset();
        let text = dataset_to_string(&ds);
        assert_eq!(text, dataset_to_string(&ds));
        let back = parse_dataset(&text).unwrap();
        assert_eq!(back, ds);
        assert_eq!(dataset_to_string(&back), text);
    }

    #[test]
    fn empty_dataset_is_only_config() {
        let ds = Dataset {
            config: preset("aisle_slow").unwrap(),
            gt_landmarks: vec![],
            keyframes: vec![],
        };
        let text = dataset_to_string(&ds);
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with(r#"{"kind":"config","schema_version":1,"payload":{"#));
        assert_eq!(parse_dataset(&text).unwrap(), ds);
    }

    #[test]
    fn file_round_trip() {
        let ds = small_dataset();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(format!("d{FILE_EXTENSION}"));
        write_dataset(&ds, &path).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), ds);
        assert!(matches!(
            read_dataset(&dir.path().join("missing")),
            Err(Error::Io(_))
        ));
    }

    fn corrupt(text: &str, line_no: usize, from: &str, to: &str) -> String {
        text.lines()
            .enumerate()
            .map(|(i, l)| {
                if i + 1 == line_no {
                    l.replacen(from, to, 1)
                } else {
                    l.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn first_keyframe_line_with_measurement(text: &str) -> usize {
        text.lines()
            .position(|l| l.contains(r#""kind":"keyframe""#) && l.contains("measurement_id"))
            .unwrap()
            + 1
    }

    #[test]
    fn non_unit_quaternion_names_line() {
        let text = dataset_to_string(&small_dataset());
        let n = first_keyframe_line_with_measurement(&text);
        // camera pose of the first keyframe is written with w first
        let bad = corrupt(&text, n, r#""orientation":["#, r#""orientation":[3.0,"#);
        let bad = bad.replacen(r#""orientation":[3.0,"#, r#""orientation":["#, 0);
        let err = parse_dataset(&bad).unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, n);
                assert!(
                    message.contains("norm") || message.contains("invalid length"),
                    "{message}"
                );
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn dangling_gt_reference_rejected() {
        let ds = small_dataset();
        let mut text = String::new();
        push_record(&mut text, RecordKind::Config, &ds.config);
        for k in &ds.keyframes {
            push_record(&mut text, RecordKind::Keyframe, k);
        }
        assert!(matches!(parse_dataset(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn unknown_kind_and_version_rejected() {
        let e = parse_dataset(r#"{"kind":"banana","schema_version":1,"payload":{}}"#).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
        let ds = small_dataset();
        let text =
            dataset_to_string(&ds).replacen(r#""schema_version":1"#, r#""schema_version":2"#, 1);
        assert!(matches!(
            parse_dataset(&text),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_dataset("not json"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn map_and_assignments_round_trip() {
        let manifest = RunManifest {
            tool_version: "0.1.0".into(),
            scenario: "x".into(),
            dataset_seed: 3,
            dataset_digest: None,
            pipeline: PipelineConfig::default(),
        };
        let lms = vec![LandmarkSummary {
            landmark_id: 1,
            class_label: "chair".into(),
            associated_tracks: vec![(1, 1), (2, 1)],
            measurement_ids: vec![1, 2, 3],
            refined_pose: Some(crate::geometry::Pose6D::identity()),
        }];
        let (m, l) = parse_map(&map_to_string(&manifest, &lms)).unwrap();
        assert_eq!(m, Some(manifest));
        assert_eq!(l, lms);

        let table: BTreeMap<u64, u64> = [(1, 1), (2, 1), (3, 2)].into_iter().collect();
        assert_eq!(
            parse_assignments(&assignments_to_string(&table)).unwrap(),
            table
        );
    }
}
