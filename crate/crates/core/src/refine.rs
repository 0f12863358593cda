//! Landmark pose selection.
//!
//! Every associated measurement is scored by its weighted mean of clamped,
//! normalized angle and distance differences to all other measurements; the
//! landmark takes the pose of the lowest-scoring one. No averaging happens.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotation_angle, translation_distance, ObjectMeasurement, Pose6D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineParams {
    /// Maximal angle difference, degrees.
    #[serde(rename = "A_deg")]
    pub max_angle_deg: f64,
    /// Maximal distance difference, meters.
    #[serde(rename = "B_m")]
    pub max_distance_m: f64,
    /// Weight of the angle term.
    pub alpha: f64,
    /// Weight of the distance term.
    pub beta: f64,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            max_angle_deg: 45.0,
            max_distance_m: 1.0,
            alpha: 0.4,
            beta: 0.6,
        }
    }
}

impl RefineParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_angle_deg > 0.0 && self.max_distance_m > 0.0) {
            return Err(Error::config(
                "refine.A_deg and refine.B_m must be positive",
            ));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) || (self.alpha + self.beta - 1.0).abs() > 1e-9 {
            return Err(Error::config(
                "refine.alpha and refine.beta must be nonnegative and sum to 1",
            ));
        }
        Ok(())
    }
}

pub fn normalized_angle(theta_deg: f64, max_angle_deg: f64) -> f64 {
    if theta_deg > max_angle_deg {
        1.0
    } else {
        theta_deg / max_angle_deg
    }
}

pub fn normalized_distance(phi_m: f64, max_distance_m: f64) -> f64 {
    if phi_m > max_distance_m {
        1.0
    } else {
        phi_m / max_distance_m
    }
}

/// Average pose difference of pose `k` to all other poses.
pub fn pose_score(k: usize, poses: &[Pose6D], params: &RefineParams) -> Result<f64> {
    if poses.len() < 2 {
        return Err(Error::input("pose score needs at least two measurements"));
    }
    if k >= poses.len() {
        return Err(Error::input(format!(
            "index {k} out of range for {} poses",
            poses.len()
        )));
    }
    let (mut angle_sum, mut dist_sum) = (0.0, 0.0);
    for (l, other) in poses.iter().enumerate() {
        if l == k {
            continue;
        }
        angle_sum += normalized_angle(rotation_angle(&poses[k], other), params.max_angle_deg);
        dist_sum += normalized_distance(
            translation_distance(&poses[k], other),
            params.max_distance_m,
        );
    }
    let denom = (poses.len() - 1) as f64;
    Ok(params.alpha * angle_sum / denom + params.beta * dist_sum / denom)
}

/// Index of the selected measurement in `measurements`.
///
/// Ties go to the smallest `(keyframe_id, measurement_id)`. Scores are
/// evaluated in that canonical order so the result does not depend on the
/// order of the input slice.
pub fn select_measurement(
    measurements: &[&ObjectMeasurement],
    params: &RefineParams,
) -> Result<usize> {
    match measurements.len() {
        0 => return Err(Error::input("cannot refine an empty landmark")),
        1 => return Ok(0),
        _ => {}
    }
    let mut order: Vec<usize> = (0..measurements.len()).collect();
    order.sort_by_key(|&i| (measurements[i].keyframe_id, measurements[i].measurement_id));
    let poses: Vec<Pose6D> = order.iter().map(|&i| measurements[i].pose).collect();

    let mut best = (f64::INFINITY, 0usize);
    for k in 0..poses.len() {
        let s = pose_score(k, &poses, params)?;
        if s < best.0 {
            best = (s, k);
        }
    }
    Ok(order[best.1])
}

/// Pose of the measurement with the minimal average pose difference.
pub fn refine_pose<'a, I>(measurements: I, params: &RefineParams) -> Result<Pose6D>
where
    I: IntoIterator<Item = &'a ObjectMeasurement>,
{
    let ms: Vec<&ObjectMeasurement> = measurements.into_iter().collect();
    let idx = select_measurement(&ms, params)?;
    Ok(ms[idx].pose)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox2D;
    use nalgebra::{UnitQuaternion, Vector3};

    fn meas(id: u64, kf: u64, pose: Pose6D) -> ObjectMeasurement {
        ObjectMeasurement {
            measurement_id: id,
            object_track_hint: None,
            keyframe_id: kf,
            class_label: "chair".into(),
            bbox: BoundingBox2D::new(0.0, 0.0, 1.0, 1.0).unwrap(),
            pose,
            appearance: vec![1.0],
            gt_landmark_id: None,
        }
    }

    fn at(x: f64) -> Pose6D {
        Pose6D::new([x, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn normalization_examples() {
        let a = 45.0;
        assert_eq!(normalized_angle(0.0, a), 0.0);
        assert_eq!(normalized_angle(2.0 * a, a), 1.0);
        assert_eq!(normalized_angle(a / 2.0, a), 0.5);
        let b = 1.5;
        assert_eq!(normalized_distance(0.0, b), 0.0);
        assert_eq!(normalized_distance(b, b), 1.0);
        assert_eq!(normalized_distance(3.0 * b, b), 1.0);
    }

    #[test]
    fn identical_poses_score_zero() {
        let poses = vec![at(1.0); 4];
        for k in 0..4 {
            assert_eq!(
                pose_score(k, &poses, &RefineParams::default()).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn two_measurement_hand_value() {
        let p = RefineParams {
            max_angle_deg: 30.0,
            max_distance_m: 2.0,
            alpha: 0.4,
            beta: 0.6,
        };
        let rotated = Pose6D::from_parts(
            Vector3::new(1.0, 0.0, 0.0),
            UnitQuaternion::from_axis_angle(&Vector3::y_axis(), 30f64.to_radians()),
        );
        let poses = [at(0.0), rotated];
        for k in 0..2 {
            let s = pose_score(k, &poses, &p).unwrap();
            assert!((s - 0.7).abs() < 1e-12, "{s}");
        }
    }

    #[test]
    fn singleton_score_is_an_error() {
        assert!(pose_score(0, &[at(0.0)], &RefineParams::default()).is_err());
    }

    #[test]
    fn collinear_middle_wins() {
        let p = RefineParams {
            max_distance_m: 5.0,
            ..RefineParams::default()
        };
        let poses = [at(0.0), at(1.0), at(2.0)];
        assert!((pose_score(0, &poses, &p).unwrap() - 0.18).abs() < 1e-12);
        assert!((pose_score(1, &poses, &p).unwrap() - 0.12).abs() < 1e-12);
        let ms: Vec<_> = poses
            .iter()
            .enumerate()
            .map(|(i, &q)| meas(i as u64, i as u64, q))
            .collect();
        assert_eq!(refine_pose(&ms, &p).unwrap(), at(1.0));
        let rev: Vec<_> = ms.iter().rev().cloned().collect();
        assert_eq!(refine_pose(&rev, &p).unwrap(), at(1.0));
    }

    #[test]
    fn singleton_and_empty() {
        let m = meas(1, 1, at(3.0));
        assert_eq!(
            refine_pose([&m], &RefineParams::default()).unwrap(),
            at(3.0)
        );
        assert!(refine_pose(std::iter::empty(), &RefineParams::default()).is_err());
    }

    #[test]
    fn ties_go_to_earliest_keyframe() {
        // two poses: both score the same
        let a = meas(5, 9, at(0.0));
        let b = meas(4, 2, at(1.0));
        assert_eq!(
            refine_pose([&a, &b], &RefineParams::default()).unwrap(),
            at(1.0)
        );
    }

    #[test]
    fn params_validation() {
        assert!(RefineParams::default().validate().is_ok());
        let bad = RefineParams {
            alpha: 0.5,
            ..RefineParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
