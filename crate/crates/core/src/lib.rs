//! Hierarchical object data association.
//!
//! Object detections arrive per keyframe. Keyframes are cut into overlapping
//! groups, detections inside a group are chained into short tracks with an
//! optimal assignment, and tracks are then attached to global landmarks by a
//! Gibbs sampler over a Gaussian-mixture likelihood. Each landmark's pose is
//! finally refined by picking its most consistent observation.
//!
//! ```
//! use objassoc::{generate, preset, run_association, PipelineConfig};
//!
//! let mut scenario = preset("office_desk").unwrap();
//! scenario.seed = 1;
//! let data = generate(&scenario).unwrap();
//! let run = run_association(&data.keyframes, &PipelineConfig::default()).unwrap();
//! assert!(!run.landmarks.is_empty());
//! ```

pub mod assignment;
pub mod config;
pub mod error;
pub mod geometry;
pub mod gmm;
pub mod grouping;
pub mod hdp;
pub mod io;
pub mod metrics;
pub mod refine;
pub mod synth;
pub mod tracker;

pub use nalgebra;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use geometry::{
    appearance_distance, iou, rotation_angle, translation_distance, BoundingBox2D, Keyframe,
    ObjectMeasurement, Pose6D,
};
pub use gmm::{build_gmm, max_measurement_likelihood, GaussianComponent, GmmParams, LandmarkGMM};
pub use grouping::{form_groups, KeyframeGroup, StreamingGrouper};
pub use hdp::{
    association_weights, check_map_invariants, run_association, AssocParams, AssociationWeights,
    GlobalLandmark, MapState, RunResult, TrackAssignment,
};
pub use io::RunManifest;
pub use metrics::{
    association_accuracy, evaluate, landmark_pose_error, match_landmarks, object_count_report,
    EvalReport, GroundTruth, LandmarkSummary,
};
pub use refine::{pose_score, refine_pose, select_measurement, RefineParams};
pub use synth::{generate, preset, Dataset, GtLandmark, ScenarioConfig, PRESETS};
pub use tracker::{associate_within_group, track_cost, GroupTrack, TrackerParams};
