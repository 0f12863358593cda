//! Pose, measurement and keyframe value types plus the pairwise geometric
//! distances used by the tracker, the landmark models and pose refinement.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Allowed deviation of a stored quaternion from unit norm.
pub const QUATERNION_NORM_TOL: f64 = 1e-9;
/// Allowed deviation of an appearance embedding from unit norm.
pub const APPEARANCE_NORM_TOL: f64 = 1e-6;

/// A 6-DoF pose in the world frame.
///
/// Equality treats `q` and `-q` as the same rotation.
#[derive(Debug, Clone, Copy)]
pub struct Pose6D {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose6D {
    /// Builds a pose from a position and a `(w, x, y, z)` quaternion that must
    /// already be unit norm.
    pub fn new(position: [f64; 3], wxyz: [f64; 4]) -> Result<Self> {
        if position.iter().any(|c| !c.is_finite()) {
            return Err(Error::input(format!("non-finite position {position:?}")));
        }
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let norm = q.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > QUATERNION_NORM_TOL {
            return Err(Error::input(format!(
                "quaternion {wxyz:?} has norm {norm}, expected 1"
            )));
        }
        Ok(Self {
            position: Vector3::from(position),
            orientation: UnitQuaternion::new_unchecked(q),
        })
    }

    pub fn from_parts(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn identity() -> Self {
        Self::from_parts(Vector3::zeros(), UnitQuaternion::identity())
    }

    /// Quaternion as `(w, x, y, z)` with `w >= 0`. For `w = 0` the first
    /// nonzero component is made positive so that `q` and `-q` agree.
    pub fn canonical_wxyz(&self) -> [f64; 4] {
        let q = self.orientation.quaternion();
        let c = [q.w, q.i, q.j, q.k];
        let lead = c.iter().copied().find(|v| *v != 0.0).unwrap_or(1.0);
        let s = if lead < 0.0 { -1.0 } else { 1.0 };
        // adding 0.0 turns -0.0 into +0.0
        c.map(|v| s * v + 0.0)
    }

    /// Axis-angle rotation vector with magnitude in `[0, pi]`.
    pub fn rotation_vector(&self) -> Vector3<f64> {
        self.orientation.scaled_axis()
    }
}

impl PartialEq for Pose6D {
    fn eq(&self, other: &Self) -> bool {
        self.position == other.position && self.canonical_wxyz() == other.canonical_wxyz()
    }
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    position: [f64; 3],
    orientation: [f64; 4],
}

impl Serialize for Pose6D {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        PoseRepr {
            position: self.position.into(),
            orientation: self.canonical_wxyz(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Pose6D {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = PoseRepr::deserialize(deserializer)?;
        Pose6D::new(repr.position, repr.orientation).map_err(serde::de::Error::custom)
    }
}

/// Axis-aligned image box in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundingBox2D {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox2D {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let all = [x_min, y_min, x_max, y_max];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::input(format!(
                "box coordinates {all:?} must be finite and >= 0"
            )));
        }
        if x_min >= x_max || y_min >= y_max {
            return Err(Error::input(format!("degenerate box {all:?}")));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }
}

impl<'de> Deserialize<'de> for BoundingBox2D {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            x_min: f64,
            y_min: f64,
            x_max: f64,
            y_max: f64,
        }
        let r = Repr::deserialize(deserializer)?;
        BoundingBox2D::new(r.x_min, r.y_min, r.x_max, r.y_max).map_err(serde::de::Error::custom)
    }
}

/// One detected object instance in one keyframe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectMeasurement {
    pub measurement_id: u64,
    /// Detector-assigned track id, if the detector provides one.
    pub object_track_hint: Option<u64>,
    pub keyframe_id: u64,
    pub class_label: String,
    pub bbox: BoundingBox2D,
    pub pose: Pose6D,
    pub appearance: Vec<f64>,
    /// Ground truth for evaluation. Association never reads this field.
    pub gt_landmark_id: Option<u64>,
}

impl ObjectMeasurement {
    pub fn validate(&self) -> Result<()> {
        if self.appearance.is_empty() {
            return Err(Error::input(format!(
                "measurement {} has an empty appearance vector",
                self.measurement_id
            )));
        }
        let norm = self.appearance.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > APPEARANCE_NORM_TOL {
            return Err(Error::input(format!(
                "measurement {} appearance norm {norm}, expected 1",
                self.measurement_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub keyframe_id: u64,
    pub timestamp: f64,
    pub camera_pose: Pose6D,
    pub measurements: Vec<ObjectMeasurement>,
}

impl Keyframe {
    pub fn validate(&self) -> Result<()> {
        for m in &self.measurements {
            if m.keyframe_id != self.keyframe_id {
                return Err(Error::input(format!(
                    "measurement {} claims keyframe {} inside keyframe {}",
                    m.measurement_id, m.keyframe_id, self.keyframe_id
                )));
            }
            m.validate()?;
        }
        Ok(())
    }
}

/// Euclidean distance between the two positions, in meters.
pub fn translation_distance(a: &Pose6D, b: &Pose6D) -> f64 {
    (a.position - b.position).norm()
}

/// Geodesic angle between the two orientations, in degrees within `[0, 180]`.
pub fn rotation_angle(a: &Pose6D, b: &Pose6D) -> f64 {
    let qa = a.orientation.quaternion();
    let qb = b.orientation.quaternion();
    // relative rotation qa^-1 * qb; atan2 keeps precision near 0 and 180
    let rel = qa.conjugate() * qb;
    let half = rel.imag().norm().atan2(rel.w.abs());
    (2.0 * half).to_degrees().clamp(0.0, 180.0)
}

/// Intersection over union of two boxes.
pub fn iou(b1: &BoundingBox2D, b2: &BoundingBox2D) -> f64 {
    let w = (b1.x_max.min(b2.x_max) - b1.x_min.max(b2.x_min)).max(0.0);
    let h = (b1.y_max.min(b2.y_max) - b1.y_min.max(b2.y_min)).max(0.0);
    let inter = w * h;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = b1.area() + b2.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// `1 - <e1, e2>` for unit embeddings.
pub fn appearance_distance(e1: &[f64], e2: &[f64]) -> Result<f64> {
    if e1.len() != e2.len() {
        return Err(Error::input(format!(
            "appearance dimension mismatch: {} vs {}",
            e1.len(),
            e2.len()
        )));
    }
    let dot: f64 = e1.iter().zip(e2).map(|(a, b)| a * b).sum();
    Ok((1.0 - dot).clamp(0.0, 2.0))
}
