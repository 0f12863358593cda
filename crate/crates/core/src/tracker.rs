//! Short-term association inside one keyframe group.
//!
//! Keyframes are processed in order. Every open track is scored against each
//! new measurement by a weighted appearance/position/orientation cost, pairs
//! over the threshold (or of different classes) are forbidden, and the
//! per-keyframe optimal assignment is solved with the Hungarian method.
//! Measurements left over open new tracks. Tracks may skip keyframes.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::assignment;
use crate::error::{Error, Result};
use crate::geometry::{
    appearance_distance, rotation_angle, translation_distance, Keyframe, ObjectMeasurement,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerParams {
    pub w_app: f64,
    pub w_pos: f64,
    pub w_rot: f64,
    /// Costs above this are forbidden matches.
    pub tau: f64,
    /// Meters.
    pub gate_radius: f64,
    /// Degrees.
    pub gate_angle: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            w_app: 0.5,
            w_pos: 0.3,
            w_rot: 0.2,
            tau: 0.6,
            gate_radius: 1.0,
            gate_angle: 90.0,
        }
    }
}

impl TrackerParams {
    pub fn validate(&self) -> Result<()> {
        let w = [self.w_app, self.w_pos, self.w_rot];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::config("tracker weights must be nonnegative"));
        }
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config("tracker weights must sum to 1"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config("tracker.tau must lie in (0, 1]"));
        }
        if !(self.gate_radius > 0.0 && self.gate_angle > 0.0) {
            return Err(Error::config("tracker gates must be positive"));
        }
        Ok(())
    }
}

/// Measurements of one object tracked across a keyframe group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTrack {
    pub group_index: usize,
    /// 1-based, in creation order.
    pub track_index: usize,
    pub class_label: String,
    /// At most one per keyframe, ordered by keyframe id.
    pub measurements: Vec<ObjectMeasurement>,
}

impl GroupTrack {
    pub fn head(&self) -> &ObjectMeasurement {
        self.measurements.last().expect("tracks are never empty")
    }

    pub fn key(&self) -> (usize, usize) {
        (self.group_index, self.track_index)
    }
}

/// Cost of appending `m` to `track`, or `None` when the pair is forbidden.
pub fn track_cost(
    track: &GroupTrack,
    m: &ObjectMeasurement,
    params: &TrackerParams,
) -> Option<f64> {
    measurement_cost(track.head(), m, params)
}

fn measurement_cost(
    head: &ObjectMeasurement,
    m: &ObjectMeasurement,
    params: &TrackerParams,
) -> Option<f64> {
    if head.class_label != m.class_label {
        return None;
    }
    let app = appearance_distance(&head.appearance, &m.appearance).ok()?;
    let pos = (translation_distance(&head.pose, &m.pose) / params.gate_radius).min(1.0);
    let rot = (rotation_angle(&head.pose, &m.pose) / params.gate_angle).min(1.0);
    let cost = params.w_app * app + params.w_pos * pos + params.w_rot * rot;
    (cost <= params.tau).then_some(cost)
}

/// Hints usable as track identities: one class and at most one measurement
/// per keyframe within the group.
fn consistent_hints(keyframes: &[&Keyframe]) -> HashSet<u64> {
    let mut class_of: HashMap<u64, &str> = HashMap::new();
    let mut bad = HashSet::new();
    for kf in keyframes {
        let mut seen = HashSet::new();
        for m in &kf.measurements {
            let Some(h) = m.object_track_hint else {
                continue;
            };
            if !seen.insert(h) {
                bad.insert(h);
            }
            match class_of.get(&h) {
                Some(c) if *c != m.class_label => {
                    bad.insert(h);
                }
                Some(_) => {}
                None => {
                    class_of.insert(h, &m.class_label);
                }
            }
        }
    }
    class_of.into_keys().filter(|h| !bad.contains(h)).collect()
}

/// Groups the measurements of one keyframe group into tracks.
///
/// Every input measurement lands in exactly one track. Keyframes are sorted by
/// id and measurements within a keyframe by `measurement_id`, so the output
/// does not depend on insertion order.
pub fn associate_within_group(
    group_index: usize,
    keyframes: &[&Keyframe],
    params: &TrackerParams,
) -> Vec<GroupTrack> {
    let mut frames: Vec<&Keyframe> = keyframes.to_vec();
    frames.sort_by_key(|k| k.keyframe_id);
    let hints = consistent_hints(&frames);

    let mut tracks: Vec<GroupTrack> = Vec::new();
    let mut hint_track: BTreeMap<u64, usize> = BTreeMap::new();

    for kf in frames {
        let mut ms: Vec<&ObjectMeasurement> = kf.measurements.iter().collect();
        ms.sort_by_key(|m| m.measurement_id);

        let mut extended = vec![false; tracks.len()];
        let mut pending = Vec::with_capacity(ms.len());
        for m in ms {
            let hinted = m.object_track_hint.filter(|h| hints.contains(h));
            match hinted.and_then(|h| hint_track.get(&h).copied()) {
                Some(t) => {
                    tracks[t].measurements.push(m.clone());
                    extended[t] = true;
                }
                None => pending.push(m),
            }
        }

        let open: Vec<usize> = (0..tracks.len()).filter(|&t| !extended[t]).collect();
        let costs: Vec<Vec<Option<f64>>> = open
            .iter()
            .map(|&t| {
                pending
                    .iter()
                    .map(|m| track_cost(&tracks[t], m, params))
                    .collect()
            })
            .collect();
        let solution = assignment::solve(&costs);
        let mut taken = vec![None; pending.len()];
        for (row, col) in solution.iter().enumerate() {
            if let Some(c) = col {
                taken[*c] = Some(open[row]);
            }
        }

        for (m, slot) in pending.into_iter().zip(taken) {
            let t = match slot {
                Some(t) => {
                    tracks[t].measurements.push(m.clone());
                    t
                }
                None => {
                    tracks.push(GroupTrack {
                        group_index,
                        track_index: tracks.len() + 1,
                        class_label: m.class_label.clone(),
                        measurements: vec![m.clone()],
                    });
                    tracks.len() - 1
                }
            };
            if let Some(h) = m.object_track_hint.filter(|h| hints.contains(h)) {
                hint_track.entry(h).or_insert(t);
            }
        }
    }
    tracks
}
