//! Ground-truth-labelled synthetic sequences.
//!
//! A camera moves along a polyline at constant speed and takes a keyframe
//! every `keyframe_stride` frames. A landmark yields a measurement in a
//! keyframe when it is inside the field of view and range and is not dropped.
//! Measured poses are the true pose plus Gaussian noise (and occasional
//! 180 degree yaw flips); appearance embeddings are built from a per-group
//! prototype, a scaled per-instance offset and noise.
//!
//! The camera frame is x right, y down, z forward. Intrinsics are fixed:
//! 640x480 image, focal length 500 px, principal point at the centre.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox2D, Keyframe, ObjectMeasurement, Pose6D};

pub const IMAGE_WIDTH: f64 = 640.0;
pub const IMAGE_HEIGHT: f64 = 480.0;
pub const FOCAL_PX: f64 = 500.0;
const FRAME_RATE_HZ: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkSpec {
    pub class_label: String,
    pub position: [f64; 3],
    /// Heading about the world z axis, degrees.
    pub yaw_deg: f64,
    /// Landmarks in the same group share an appearance prototype.
    pub similarity_group: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraPath {
    pub waypoints: Vec<[f64; 3]>,
    /// Multiplies the distance travelled per frame.
    pub speed_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub landmarks: Vec<LandmarkSpec>,
    /// Spacing of the look-alike pairs in the layout, meters.
    pub confusable_gap: f64,
    pub camera_path: CameraPath,
    /// Distance per frame at speed factor 1, meters.
    pub frame_step: f64,
    pub keyframe_stride: usize,
    pub fov_half_angle_deg: f64,
    pub max_range: f64,
    pub pose_noise_sigma_m: f64,
    pub pose_noise_sigma_deg: f64,
    /// Probability that a measured orientation is flipped by 180 degrees of yaw.
    pub pose_outlier_rate: f64,
    pub appearance_noise_sigma: f64,
    pub appearance_dim: usize,
    /// 0 gives identical embeddings within a similarity group.
    pub instance_distinctness: f64,
    pub dropout_rate: f64,
    /// Edge length of the cube used for bounding boxes, meters.
    pub object_size: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtLandmark {
    pub gt_landmark_id: u64,
    pub class_label: String,
    pub pose: Pose6D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: ScenarioConfig,
    pub gt_landmarks: Vec<GtLandmark>,
    pub keyframes: Vec<Keyframe>,
}

impl Dataset {
    pub fn measurements(&self) -> impl Iterator<Item = &ObjectMeasurement> {
        self.keyframes.iter().flat_map(|k| k.measurements.iter())
    }

    pub fn measurement_count(&self) -> usize {
        self.keyframes.iter().map(|k| k.measurements.len()).sum()
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64, what: &str| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::config(format!("{what} must lie in [0, 1]")))
            }
        };
        prob(self.dropout_rate, "dropout_rate")?;
        prob(self.pose_outlier_rate, "pose_outlier_rate")?;
        prob(self.instance_distinctness, "instance_distinctness")?;
        if self.confusable_gap.is_nan() || self.confusable_gap <= 0.0 {
            return Err(Error::config("confusable_gap must be positive"));
        }
        if self.keyframe_stride < 1 {
            return Err(Error::config("keyframe_stride must be at least 1"));
        }
        if self.appearance_dim < 1 {
            return Err(Error::config("appearance_dim must be at least 1"));
        }
        let positive = [
            (self.frame_step, "frame_step"),
            (self.camera_path.speed_factor, "speed_factor"),
            (self.fov_half_angle_deg, "fov_half_angle_deg"),
            (self.max_range, "max_range"),
            (self.object_size, "object_size"),
        ];
        for (v, what) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{what} must be positive")));
            }
        }
        let nonneg = [
            self.pose_noise_sigma_m,
            self.pose_noise_sigma_deg,
            self.appearance_noise_sigma,
        ];
        if nonneg.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::config("noise sigmas must be nonnegative"));
        }
        if path_length(&self.camera_path.waypoints) <= 0.0 {
            return Err(Error::config("camera path has zero length"));
        }
        Ok(())
    }

    /// Parses a TOML scenario (same keys as the struct, `[[landmarks]]`
    /// tables for the layout) and validates it.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario is always representable as TOML")
    }
}

fn path_length(waypoints: &[[f64; 3]]) -> f64 {
    waypoints
        .windows(2)
        .map(|w| (Vector3::from(w[1]) - Vector3::from(w[0])).norm())
        .sum()
}

/// Position and unit direction at arc length `s`.
fn point_on_path(waypoints: &[[f64; 3]], mut s: f64) -> (Vector3<f64>, Vector3<f64>) {
    let mut last = (Vector3::from(waypoints[0]), Vector3::x());
    for w in waypoints.windows(2) {
        let a = Vector3::from(w[0]);
        let b = Vector3::from(w[1]);
        let len = (b - a).norm();
        if len <= 0.0 {
            continue;
        }
        let dir = (b - a) / len;
        if s <= len {
            return (a + dir * s, dir);
        }
        s -= len;
        last = (b, dir);
    }
    last
}

/// Camera-to-world rotation looking horizontally along `forward`.
fn camera_orientation(forward: &Vector3<f64>) -> UnitQuaternion<f64> {
    let mut f = Vector3::new(forward.x, forward.y, 0.0);
    if f.norm() < 1e-9 {
        f = Vector3::x();
    }
    let f = f.normalize();
    let up = Vector3::z();
    let right = f.cross(&up);
    let down = -up;
    let m = Matrix3::from_columns(&[right, down, f]);
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m))
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn project_box(cam: &Pose6D, center: &Vector3<f64>, size: f64) -> Option<BoundingBox2D> {
    let h = size / 2.0;
    let inv = cam.orientation.inverse();
    let mut pts = Vec::with_capacity(8);
    for dx in [-h, h] {
        for dy in [-h, h] {
            for dz in [-h, h] {
                let p = inv * (center + Vector3::new(dx, dy, dz) - cam.position);
                if p.z > 0.05 {
                    pts.push((
                        FOCAL_PX * p.x / p.z + IMAGE_WIDTH / 2.0,
                        FOCAL_PX * p.y / p.z + IMAGE_HEIGHT / 2.0,
                    ));
                }
            }
        }
    }
    if pts.is_empty() {
        return None;
    }
    let clip_x = |v: f64| v.clamp(0.0, IMAGE_WIDTH);
    let clip_y = |v: f64| v.clamp(0.0, IMAGE_HEIGHT);
    let mut x0 = clip_x(pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min));
    let mut x1 = clip_x(pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max));
    let mut y0 = clip_y(pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min));
    let mut y1 = clip_y(pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max));
    // keep a minimal 1 px extent after clipping
    if x1 - x0 < 1.0 {
        x0 = (x0 - 1.0).max(0.0);
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1.0 {
        y0 = (y0 - 1.0).max(0.0);
        y1 = y0 + 1.0;
    }
    BoundingBox2D::new(x0, y0, x1, y1).ok()
}

/// True when `target` is inside the camera's cone and range.
pub fn is_visible(
    cam: &Pose6D,
    target: &Vector3<f64>,
    fov_half_angle_deg: f64,
    max_range: f64,
) -> bool {
    let p = cam.orientation.inverse() * (target - cam.position);
    let range = p.norm();
    if p.z <= 0.0 || range > max_range {
        return false;
    }
    let off_axis = (p.x.hypot(p.y)).atan2(p.z).to_degrees();
    off_axis <= fov_half_angle_deg
}

pub fn gt_landmarks(config: &ScenarioConfig) -> Vec<GtLandmark> {
    config
        .landmarks
        .iter()
        .enumerate()
        .map(|(i, l)| GtLandmark {
            gt_landmark_id: i as u64 + 1,
            class_label: l.class_label.clone(),
            pose: Pose6D::from_parts(
                Vector3::from(l.position),
                UnitQuaternion::from_axis_angle(&Vector3::z_axis(), l.yaw_deg.to_radians()),
            ),
        })
        .collect()
}

/// Simulates the configured scenario. Deterministic given `config.seed`.
pub fn generate(config: &ScenarioConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let gts = gt_landmarks(config);

    let mut prototypes: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let mut groups: Vec<u32> = config
        .landmarks
        .iter()
        .map(|l| l.similarity_group)
        .collect();
    groups.sort_unstable();
    groups.dedup();
    for g in groups {
        prototypes.insert(g, random_unit(&mut rng, config.appearance_dim));
    }
    let offsets: Vec<Vec<f64>> = config
        .landmarks
        .iter()
        .map(|_| random_unit(&mut rng, config.appearance_dim))
        .collect();

    let pos_noise =
        Normal::new(0.0, config.pose_noise_sigma_m).map_err(|e| Error::config(e.to_string()))?;
    let rot_noise = Normal::new(0.0, config.pose_noise_sigma_deg.to_radians())
        .map_err(|e| Error::config(e.to_string()))?;
    let app_noise = Normal::new(0.0, config.appearance_noise_sigma)
        .map_err(|e| Error::config(e.to_string()))?;
    let flip = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::PI);

    let total = path_length(&config.camera_path.waypoints);
    let step = config.frame_step * config.camera_path.speed_factor;
    let mut keyframes = Vec::new();
    let mut next_measurement = 1u64;
    let mut frame = 0usize;
    loop {
        let s = frame as f64 * step;
        if s > total + 1e-12 {
            break;
        }
        if frame.is_multiple_of(config.keyframe_stride) {
            let (pos, dir) = point_on_path(&config.camera_path.waypoints, s);
            let camera_pose = Pose6D::from_parts(pos, camera_orientation(&dir));
            let keyframe_id = keyframes.len() as u64 + 1;
            let mut measurements = Vec::new();
            for (i, gt) in gts.iter().enumerate() {
                if !is_visible(
                    &camera_pose,
                    &gt.pose.position,
                    config.fov_half_angle_deg,
                    config.max_range,
                ) {
                    continue;
                }
                if rng.random::<f64>() < config.dropout_rate {
                    continue;
                }
                let noise_p = Vector3::from_fn(|_, _| pos_noise.sample(&mut rng));
                let noise_r = Vector3::from_fn(|_, _| rot_noise.sample(&mut rng));
                let mut orientation =
                    gt.pose.orientation * UnitQuaternion::from_scaled_axis(noise_r);
                if rng.random::<f64>() < config.pose_outlier_rate {
                    orientation = flip * orientation;
                }
                let proto = &prototypes[&config.landmarks[i].similarity_group];
                let raw: Vec<f64> = proto
                    .iter()
                    .zip(&offsets[i])
                    .map(|(p, o)| p + config.instance_distinctness * o + app_noise.sample(&mut rng))
                    .collect();
                let Some(bbox) = project_box(&camera_pose, &gt.pose.position, config.object_size)
                else {
                    continue;
                };
                measurements.push(ObjectMeasurement {
                    measurement_id: next_measurement,
                    object_track_hint: None,
                    keyframe_id,
                    class_label: gt.class_label.clone(),
                    bbox,
                    pose: Pose6D::from_parts(gt.pose.position + noise_p, orientation),
                    appearance: normalize(raw),
                    gt_landmark_id: Some(gt.gt_landmark_id),
                });
                next_measurement += 1;
            }
            keyframes.push(Keyframe {
                keyframe_id,
                timestamp: frame as f64 / FRAME_RATE_HZ,
                camera_pose,
                measurements,
            });
        }
        frame += 1;
    }

    Ok(Dataset {
        config: config.clone(),
        gt_landmarks: gts,
        keyframes,
    })
}

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 3] = ["aisle_slow", "aisle_quick", "office_desk"];

fn chair(x: f64, y: f64, yaw_deg: f64, group: u32) -> LandmarkSpec {
    LandmarkSpec {
        class_label: "chair".into(),
        position: [x, y, 0.45],
        yaw_deg,
        similarity_group: group,
    }
}

fn aisle(name: &str, speed_factor: f64) -> ScenarioConfig {
    let gap = 0.6;
    // three look-alike chair pairs along both walls of a straight aisle
    let landmarks = vec![
        chair(4.0, 1.2, -90.0, 1),
        chair(4.0 + gap, 1.2, -90.0, 1),
        chair(7.5, -1.2, 90.0, 2),
        chair(7.5 + gap, -1.2, 90.0, 2),
        chair(11.0, 1.2, -90.0, 3),
        chair(11.0 + gap, 1.2, -90.0, 3),
    ];
    ScenarioConfig {
        name: name.into(),
        landmarks,
        confusable_gap: gap,
        camera_path: CameraPath {
            waypoints: vec![[0.0, 0.0, 1.0], [14.0, 0.0, 1.0]],
            speed_factor,
        },
        frame_step: 0.02,
        keyframe_stride: 10,
        fov_half_angle_deg: 40.0,
        max_range: 6.0,
        pose_noise_sigma_m: 0.12,
        pose_noise_sigma_deg: 8.0,
        pose_outlier_rate: 0.1,
        appearance_noise_sigma: 0.05,
        appearance_dim: 16,
        instance_distinctness: 0.1,
        dropout_rate: 0.1,
        object_size: 0.5,
        seed: 0,
    }
}

fn office_desk() -> ScenarioConfig {
    let gap = 0.45;
    let landmarks = vec![
        chair(3.0, 1.0, -90.0, 1),
        chair(3.0 + gap, 1.0, -90.0, 1),
        LandmarkSpec {
            class_label: "desk".into(),
            position: [4.5, -1.2, 0.4],
            yaw_deg: 90.0,
            similarity_group: 2,
        },
        chair(6.0, 1.0, -90.0, 1),
        chair(6.0 + gap, 1.0, -90.0, 1),
    ];
    ScenarioConfig {
        name: "office_desk".into(),
        landmarks,
        confusable_gap: gap,
        camera_path: CameraPath {
            waypoints: vec![[0.0, 0.0, 1.0], [9.0, 0.0, 1.0]],
            speed_factor: 1.0,
        },
        frame_step: 0.02,
        keyframe_stride: 10,
        fov_half_angle_deg: 40.0,
        max_range: 6.0,
        pose_noise_sigma_m: 0.1,
        pose_noise_sigma_deg: 8.0,
        pose_outlier_rate: 0.1,
        appearance_noise_sigma: 0.05,
        appearance_dim: 16,
        instance_distinctness: 0.05,
        dropout_rate: 0.1,
        object_size: 0.5,
        seed: 0,
    }
}

pub fn preset(name: &str) -> Result<ScenarioConfig> {
    match name {
        "aisle_slow" => Ok(aisle(name, 1.0)),
        "aisle_quick" => Ok(aisle(name, 2.0)),
        "office_desk" => Ok(office_desk()),
        other => Err(Error::input(format!(
            "unknown preset {other:?}; expected one of {}",
            PRESETS.join(", ")
        ))),
    }
}
