//! Scoring an association result against ground truth.
//!
//! Association accuracy is measurement-level: predicted and ground-truth
//! landmarks are matched one-to-one so that the total number of shared
//! measurements is maximal, and accuracy is the percentage of measurements
//! whose predicted landmark is matched to their true landmark. Measurements
//! observed through overlapping keyframes count once.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::assignment;
use crate::geometry::{rotation_angle, translation_distance, Pose6D};
use crate::hdp::GlobalLandmark;
use crate::synth::{Dataset, GtLandmark};

/// What evaluation needs to know about a predicted landmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSummary {
    pub landmark_id: u64,
    pub class_label: String,
    pub associated_tracks: Vec<(usize, usize)>,
    pub measurement_ids: Vec<u64>,
    pub refined_pose: Option<Pose6D>,
}

impl From<&GlobalLandmark> for LandmarkSummary {
    fn from(lm: &GlobalLandmark) -> Self {
        Self {
            landmark_id: lm.landmark_id,
            class_label: lm.class_label.clone(),
            associated_tracks: lm.associated_tracks.clone(),
            measurement_ids: lm.measurements.iter().map(|m| m.measurement_id).collect(),
            refined_pose: lm.refined_pose,
        }
    }
}

/// Ground-truth side of an evaluation.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub landmarks: Vec<GtLandmark>,
    /// measurement_id -> gt_landmark_id
    pub labels: BTreeMap<u64, u64>,
}

impl From<&Dataset> for GroundTruth {
    fn from(ds: &Dataset) -> Self {
        Self {
            landmarks: ds.gt_landmarks.clone(),
            labels: ds
                .measurements()
                .filter_map(|m| m.gt_landmark_id.map(|g| (m.measurement_id, g)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub landmark_id: u64,
    pub gt_landmark_id: u64,
    pub shared: usize,
}

/// Partial one-to-one matching between predicted and true landmarks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Matching {
    pub pairs: Vec<MatchedPair>,
}

impl Matching {
    pub fn total_shared(&self) -> usize {
        self.pairs.iter().map(|p| p.shared).sum()
    }

    pub fn gt_for(&self, landmark_id: u64) -> Option<u64> {
        self.pairs
            .iter()
            .find(|p| p.landmark_id == landmark_id)
            .map(|p| p.gt_landmark_id)
    }
}

/// `counts[i][j]`: measurements of predicted `i` labelled with gt landmark `j`.
fn contingency(predicted: &[LandmarkSummary], gt: &GroundTruth) -> Vec<Vec<usize>> {
    let col: HashMap<u64, usize> = gt
        .landmarks
        .iter()
        .enumerate()
        .map(|(j, g)| (g.gt_landmark_id, j))
        .collect();
    predicted
        .iter()
        .map(|p| {
            let mut row = vec![0usize; gt.landmarks.len()];
            for id in &p.measurement_ids {
                if let Some(j) = gt.labels.get(id).and_then(|g| col.get(g)) {
                    row[*j] += 1;
                }
            }
            row
        })
        .collect()
}

/// Matching that maximizes the total number of shared measurements.
pub fn match_landmarks(predicted: &[LandmarkSummary], gt: &GroundTruth) -> Matching {
    let counts = contingency(predicted, gt);
    let costs: Vec<Vec<Option<f64>>> = counts
        .iter()
        .map(|row| row.iter().map(|&c| Some(-(c as f64))).collect())
        .collect();
    let solution = assignment::solve(&costs);
    let mut pairs: Vec<MatchedPair> = solution
        .iter()
        .enumerate()
        .filter_map(|(i, j)| {
            let j = (*j)?;
            (counts[i][j] > 0).then(|| MatchedPair {
                landmark_id: predicted[i].landmark_id,
                gt_landmark_id: gt.landmarks[j].gt_landmark_id,
                shared: counts[i][j],
            })
        })
        .collect();
    pairs.sort_by_key(|p| p.landmark_id);
    Matching { pairs }
}

/// Percentage of labelled measurements consistent with the optimal matching.
pub fn association_accuracy(predicted: &[LandmarkSummary], gt: &GroundTruth) -> f64 {
    if gt.labels.is_empty() {
        return 100.0;
    }
    let matched = match_landmarks(predicted, gt).total_shared();
    100.0 * matched as f64 / gt.labels.len() as f64
}

/// `(predicted_count, gt_count)`, counting only nonempty predicted landmarks.
pub fn object_count_report(predicted: &[LandmarkSummary], gt: &GroundTruth) -> (usize, usize) {
    let n = predicted
        .iter()
        .filter(|p| !p.measurement_ids.is_empty())
        .count();
    (n, gt.landmarks.len())
}

/// RMSE of `(position meters, rotation degrees)` over matched pairs with a
/// refined pose. `None` when there is no such pair.
pub fn landmark_pose_error(
    predicted: &[LandmarkSummary],
    gt: &GroundTruth,
    matching: &Matching,
) -> Option<(f64, f64)> {
    let poses: HashMap<u64, Pose6D> = predicted
        .iter()
        .filter_map(|p| p.refined_pose.map(|r| (p.landmark_id, r)))
        .collect();
    let truth: HashMap<u64, Pose6D> = gt
        .landmarks
        .iter()
        .map(|g| (g.gt_landmark_id, g.pose))
        .collect();
    let errs: Vec<(f64, f64)> = matching
        .pairs
        .iter()
        .filter_map(|p| {
            let est = poses.get(&p.landmark_id)?;
            let t = truth.get(&p.gt_landmark_id)?;
            Some((translation_distance(est, t), rotation_angle(est, t)))
        })
        .collect();
    rmse_pair(&errs)
}

pub(crate) fn rmse_pair(errs: &[(f64, f64)]) -> Option<(f64, f64)> {
    if errs.is_empty() {
        return None;
    }
    let n = errs.len() as f64;
    let p = (errs.iter().map(|e| e.0 * e.0).sum::<f64>() / n).sqrt();
    let r = (errs.iter().map(|e| e.1 * e.1).sum::<f64>() / n).sqrt();
    Some((p, r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkBreakdown {
    pub landmark_id: u64,
    pub class_label: String,
    pub measurement_count: usize,
    pub gt_landmark_id: Option<u64>,
    pub shared: usize,
    pub position_error: Option<f64>,
    pub rotation_error_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario: String,
    pub dataset_seed: u64,
    pub group_size: usize,
    pub group_overlap: usize,
    pub assoc_seed: u64,
    pub manifest_hash: Option<String>,
    pub association_accuracy: f64,
    pub predicted_count: usize,
    pub gt_count: usize,
    /// `predicted_count - gt_count`.
    pub count_error: i64,
    pub landmark_pose_rmse_pos: Option<f64>,
    pub landmark_pose_rmse_rot: Option<f64>,
    pub landmarks: Vec<LandmarkBreakdown>,
}

/// Computes every metric. The echo fields (`group_size`, seeds, hash) are
/// left for the caller to fill in except for the dataset's own.
pub fn evaluate(predicted: &[LandmarkSummary], dataset: &Dataset) -> EvalReport {
    let gt = GroundTruth::from(dataset);
    let matching = match_landmarks(predicted, &gt);
    let (predicted_count, gt_count) = object_count_report(predicted, &gt);
    let rmse = landmark_pose_error(predicted, &gt, &matching);
    let truth: HashMap<u64, Pose6D> = gt
        .landmarks
        .iter()
        .map(|g| (g.gt_landmark_id, g.pose))
        .collect();

    let landmarks = predicted
        .iter()
        .map(|p| {
            let pair = matching
                .pairs
                .iter()
                .find(|m| m.landmark_id == p.landmark_id);
            let err = pair.and_then(|m| Some((p.refined_pose?, truth.get(&m.gt_landmark_id)?)));
            LandmarkBreakdown {
                landmark_id: p.landmark_id,
                class_label: p.class_label.clone(),
                measurement_count: p.measurement_ids.len(),
                gt_landmark_id: pair.map(|m| m.gt_landmark_id),
                shared: pair.map_or(0, |m| m.shared),
                position_error: err.map(|(e, t)| translation_distance(&e, t)),
                rotation_error_deg: err.map(|(e, t)| rotation_angle(&e, t)),
            }
        })
        .collect();

    EvalReport {
        scenario: dataset.config.name.clone(),
        dataset_seed: dataset.config.seed,
        group_size: 0,
        group_overlap: 0,
        assoc_seed: 0,
        manifest_hash: None,
        association_accuracy: association_accuracy(predicted, &gt),
        predicted_count,
        gt_count,
        count_error: predicted_count as i64 - gt_count as i64,
        landmark_pose_rmse_pos: rmse.map(|r| r.0),
        landmark_pose_rmse_rot: rmse.map(|r| r.1),
        landmarks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn summary(id: u64, ms: Vec<u64>) -> LandmarkSummary {
        LandmarkSummary {
            landmark_id: id,
            class_label: "chair".into(),
            associated_tracks: vec![],
            measurement_ids: ms,
            refined_pose: None,
        }
    }

    fn truth(partition: &[Vec<u64>]) -> GroundTruth {
        let mut labels = BTreeMap::new();
        let mut landmarks = Vec::new();
        for (j, ms) in partition.iter().enumerate() {
            let g = j as u64 + 1;
            landmarks.push(GtLandmark {
                gt_landmark_id: g,
                class_label: "chair".into(),
                pose: Pose6D::new([j as f64, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]).unwrap(),
            });
            for m in ms {
                labels.insert(*m, g);
            }
        }
        GroundTruth { landmarks, labels }
    }

    /// Exhaustive maximum over injections predicted -> gt (or unmatched).
    fn brute_force_total(predicted: &[LandmarkSummary], gt: &GroundTruth) -> usize {
        let counts = contingency(predicted, gt);
        fn go(i: usize, counts: &[Vec<usize>], used: &mut Vec<bool>) -> usize {
            if i == counts.len() {
                return 0;
            }
            let mut best = go(i + 1, counts, used);
            for j in 0..used.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.max(counts[i][j] + go(i + 1, counts, used));
                    used[j] = false;
                }
            }
            best
        }
        let mut used = vec![false; gt.landmarks.len()];
        go(0, &counts, &mut used)
    }

    #[test]
    fn identity_partition() {
        let gt = truth(&[vec![1, 2, 3], vec![4, 5]]);
        let pred = vec![summary(10, vec![4, 5]), summary(11, vec![1, 2, 3])];
        let m = match_landmarks(&pred, &gt);
        assert_eq!(m.gt_for(10), Some(2));
        assert_eq!(m.gt_for(11), Some(1));
        assert_eq!(association_accuracy(&pred, &gt), 100.0);
        assert_eq!(object_count_report(&pred, &gt), (2, 2));
    }

    #[test]
    fn merged_landmark_matches_larger_side() {
        let gt = truth(&[vec![1, 2, 3], vec![4, 5]]);
        let pred = vec![summary(1, vec![1, 2, 3, 4, 5])];
        let m = match_landmarks(&pred, &gt);
        assert_eq!(
            m.pairs,
            vec![MatchedPair {
                landmark_id: 1,
                gt_landmark_id: 1,
                shared: 3
            }]
        );
        assert_eq!(association_accuracy(&pred, &gt), 60.0);
    }

    #[test]
    fn all_singletons_against_one_object() {
        let gt = truth(&[(1..=10).collect()]);
        let pred: Vec<_> = (1..=10).map(|i| summary(i, vec![i])).collect();
        assert_eq!(association_accuracy(&pred, &gt), 10.0);
        assert_eq!(object_count_report(&pred, &gt), (10, 1));
    }

    #[test]
    fn swapped_halves_of_a_confusable_pair() {
        // each predicted landmark holds half of A and half of B
        let gt = truth(&[(1..=10).collect(), (11..=20).collect()]);
        let pred = vec![
            summary(1, vec![1, 2, 3, 4, 5, 11, 12, 13, 14, 15]),
            summary(2, vec![6, 7, 8, 9, 10, 16, 17, 18, 19, 20]),
        ];
        assert!(association_accuracy(&pred, &gt) <= 50.0);
    }

    #[test]
    fn empty_map() {
        let gt = truth(&[vec![1, 2]]);
        assert_eq!(object_count_report(&[], &gt), (0, 1));
        assert_eq!(association_accuracy(&[], &gt), 0.0);
        assert_eq!(landmark_pose_error(&[], &gt, &Matching::default()), None);
    }

    #[test]
    fn pose_error_examples() {
        let gt = truth(&[vec![1], vec![2]]);
        let mut a = summary(1, vec![1]);
        let mut b = summary(2, vec![2]);
        a.refined_pose = Some(gt.landmarks[0].pose);
        b.refined_pose = Some(gt.landmarks[1].pose);
        let pred = vec![a.clone(), b];
        let m = match_landmarks(&pred, &gt);
        assert_eq!(landmark_pose_error(&pred, &gt, &m), Some((0.0, 0.0)));

        a.refined_pose = Some(Pose6D::new([0.3, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]).unwrap());
        let pred = vec![a];
        let m = match_landmarks(&pred, &gt);
        let (p, r) = landmark_pose_error(&pred, &gt, &m).unwrap();
        assert!((p - 0.3).abs() < 1e-15);
        assert_eq!(r, 0.0);
    }

    fn arb_instance() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        (1usize..=30).prop_flat_map(|n| {
            (
                prop::collection::vec(0usize..6, n),
                prop::collection::vec(0usize..6, n),
            )
        })
    }

    fn build(gt_of: &[usize], pred_of: &[usize]) -> (Vec<LandmarkSummary>, GroundTruth) {
        let mut parts = vec![Vec::new(); 6];
        for (m, g) in gt_of.iter().enumerate() {
            parts[*g].push(m as u64);
        }
        let gt = truth(&parts);
        let mut pred: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
        for (m, p) in pred_of.iter().enumerate() {
            pred.entry(*p).or_default().push(m as u64);
        }
        let pred = pred
            .into_iter()
            .map(|(k, ms)| summary(k as u64 + 100, ms))
            .collect();
        (pred, gt)
    }

    proptest! {
        #[test]
        fn matching_is_maximal((gt_of, pred_of) in arb_instance()) {
            let (pred, gt) = build(&gt_of, &pred_of);
            let m = match_landmarks(&pred, &gt);
            prop_assert_eq!(m.total_shared(), brute_force_total(&pred, &gt));
        }

        #[test]
        fn accuracy_invariant_under_relabeling((gt_of, pred_of) in arb_instance(), shift in 1u64..1000) {
            let (pred, gt) = build(&gt_of, &pred_of);
            let relabeled: Vec<_> = pred.iter().rev().map(|p| summary(p.landmark_id * 7 + shift, p.measurement_ids.clone())).collect();
            let a = association_accuracy(&pred, &gt);
            prop_assert!((0.0..=100.0).contains(&a));
            prop_assert_eq!(a, association_accuracy(&relabeled, &gt));
            // perfect iff the partitions coincide
            let mut pp: Vec<Vec<u64>> = pred.iter().map(|p| p.measurement_ids.clone()).collect();
            let mut gp: Vec<Vec<u64>> = (1..=6u64)
                .map(|g| gt.labels.iter().filter(|(_, v)| **v == g).map(|(k, _)| *k).collect::<Vec<_>>())
                .filter(|v| !v.is_empty())
                .collect();
            pp.sort();
            gp.sort();
            prop_assert_eq!(a == 100.0, pp == gp);
        }
    }
}
