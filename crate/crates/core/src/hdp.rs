//! Global association of group tracks to map landmarks.
//!
//! Each arriving keyframe group is resolved by Gibbs sampling over its tracks.
//! A track's weight for an existing landmark is
//! `N_p * max_m Gamma_p(m) * boost`, where `N_p` is the landmark's measurement
//! count, `Gamma_p` its pose mixture and `boost` the overlap multiplier applied
//! when the track already shares a measurement with the landmark through an
//! overlapping keyframe. The weight for opening a new landmark is
//! `alpha_new * base_density`. Landmarks holding another track of the same
//! group, or a different measurement in one of the track's keyframes, get
//! weight zero. Earlier groups stay frozen.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::f64::consts::PI;

use nalgebra::Matrix6;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::geometry::{Keyframe, ObjectMeasurement, Pose6D};
use crate::gmm::{build_gmm, max_measurement_likelihood, LandmarkGMM};
use crate::grouping::StreamingGrouper;
use crate::refine::{refine_pose, RefineParams};
use crate::tracker::{associate_within_group, GroupTrack};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssocParams {
    /// Concentration mass for opening a new landmark.
    pub alpha_new: f64,
    pub overlap_boost: f64,
    pub gibbs_sweeps: usize,
    pub seed: u64,
    /// Positional workspace volume in cubic meters; the new-landmark
    /// pseudo-likelihood is uniform over it times the rotation volume.
    pub workspace_volume: f64,
}

impl Default for AssocParams {
    fn default() -> Self {
        Self {
            alpha_new: 1.0,
            overlap_boost: 1.5,
            gibbs_sweeps: 5,
            seed: 0,
            workspace_volume: 50.0 * 30.0 * 5.0,
        }
    }
}

impl AssocParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_new > 0.0 && self.alpha_new.is_finite()) {
            return Err(Error::config("assoc.alpha_new must be positive"));
        }
        if !(self.overlap_boost >= 1.0 && self.overlap_boost.is_finite()) {
            return Err(Error::config("assoc.overlap_boost must be at least 1"));
        }
        if self.gibbs_sweeps == 0 {
            return Err(Error::config("assoc.gibbs_sweeps must be positive"));
        }
        if !(self.workspace_volume > 0.0 && self.workspace_volume.is_finite()) {
            return Err(Error::config("assoc.workspace_volume must be positive"));
        }
        Ok(())
    }

    /// `1 / (V * (2 pi)^3)`.
    pub fn base_density(&self) -> f64 {
        1.0 / (self.workspace_volume * (2.0 * PI).powi(3))
    }
}

#[derive(Debug, Clone)]
pub struct GlobalLandmark {
    pub landmark_id: u64,
    pub class_label: String,
    /// `(group_index, track_index)` of every associated track.
    pub associated_tracks: Vec<(usize, usize)>,
    /// Distinct measurements; overlap measurements appear once.
    pub measurements: Vec<ObjectMeasurement>,
    pub gmm: LandmarkGMM,
    pub refined_pose: Option<Pose6D>,
}

impl GlobalLandmark {
    fn view(&self) -> LandmarkView<'_> {
        LandmarkView {
            class_label: &self.class_label,
            tracks: self.associated_tracks.clone(),
            measurements: self.measurements.iter().collect(),
            gmm: std::borrow::Cow::Borrowed(&self.gmm),
        }
    }
}

/// Unnormalized association weights of one track.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationWeights {
    pub existing: Vec<f64>,
    pub new: f64,
}

impl AssociationWeights {
    /// Probabilities for each existing landmark followed by "new".
    pub fn normalized(&self) -> Vec<f64> {
        let total: f64 = self.existing.iter().sum::<f64>() + self.new;
        self.existing
            .iter()
            .chain(std::iter::once(&self.new))
            .map(|w| w / total)
            .collect()
    }
}

struct LandmarkView<'a> {
    class_label: &'a str,
    tracks: Vec<(usize, usize)>,
    measurements: Vec<&'a ObjectMeasurement>,
    gmm: std::borrow::Cow<'a, LandmarkGMM>,
}

fn landmark_weight(track: &GroupTrack, lm: &LandmarkView<'_>, params: &AssocParams) -> f64 {
    if lm.class_label != track.class_label {
        return 0.0;
    }
    if lm
        .tracks
        .iter()
        .any(|&(g, i)| g == track.group_index && i != track.track_index)
    {
        return 0.0;
    }
    let by_keyframe: HashMap<u64, u64> = lm
        .measurements
        .iter()
        .map(|m| (m.keyframe_id, m.measurement_id))
        .collect();
    let mut shares = false;
    for m in &track.measurements {
        match by_keyframe.get(&m.keyframe_id) {
            Some(&id) if id == m.measurement_id => shares = true,
            Some(_) => return 0.0,
            None => {}
        }
    }
    let boost = if shares { params.overlap_boost } else { 1.0 };
    lm.measurements.len() as f64 * max_measurement_likelihood(track, &lm.gmm) * boost
}

/// Prior-weighted likelihood of `track` joining each landmark or a new one.
pub fn association_weights(
    track: &GroupTrack,
    landmarks: &[GlobalLandmark],
    params: &AssocParams,
) -> AssociationWeights {
    AssociationWeights {
        existing: landmarks
            .iter()
            .map(|lm| landmark_weight(track, &lm.view(), params))
            .collect(),
        new: params.alpha_new * params.base_density(),
    }
}

/// Where a group track ended up after its group was frozen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackAssignment {
    pub track: (usize, usize),
    /// `None` when every measurement of the track was already owned by an
    /// earlier landmark and the fresh landmark it opened came out empty.
    pub landmark_id: Option<u64>,
}

/// Tentative landmark during one group's sweeps.
struct Working {
    base: Option<usize>,
    class_label: String,
    members: Vec<usize>,
}

/// Map under construction: frozen landmarks plus the sampler state.
pub struct MapState {
    landmarks: Vec<GlobalLandmark>,
    owner: HashMap<u64, u64>,
    next_id: u64,
    base_cov: Matrix6<f64>,
    rng: ChaCha8Rng,
}

impl MapState {
    pub fn new(base_cov: Matrix6<f64>, seed: u64) -> Self {
        Self {
            landmarks: Vec::new(),
            owner: HashMap::new(),
            next_id: 1,
            base_cov,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn landmarks(&self) -> &[GlobalLandmark] {
        &self.landmarks
    }

    pub fn into_landmarks(self) -> Vec<GlobalLandmark> {
        self.landmarks
    }

    /// Landmark owning each measurement.
    pub fn assignment_table(&self) -> BTreeMap<u64, u64> {
        self.owner.iter().map(|(&m, &l)| (m, l)).collect()
    }

    fn view_of<'a>(
        &'a self,
        w: &'a Working,
        tracks: &'a [GroupTrack],
        skip: usize,
    ) -> Result<Option<LandmarkView<'a>>> {
        let members: Vec<usize> = w.members.iter().copied().filter(|&t| t != skip).collect();
        let base = w.base.map(|i| &self.landmarks[i]);
        if members.is_empty() {
            return Ok(base.map(GlobalLandmark::view));
        }
        let mut tracks_held = base
            .map(|b| b.associated_tracks.clone())
            .unwrap_or_default();
        let mut ms: Vec<&ObjectMeasurement> = base
            .map(|b| b.measurements.iter().collect())
            .unwrap_or_default();
        let mut seen: HashSet<u64> = ms.iter().map(|m| m.measurement_id).collect();
        for &t in &members {
            tracks_held.push(tracks[t].key());
            for m in &tracks[t].measurements {
                if !self.owner.contains_key(&m.measurement_id) && seen.insert(m.measurement_id) {
                    ms.push(m);
                }
            }
        }
        if ms.is_empty() {
            return Ok(None);
        }
        let gmm = build_gmm(ms.iter().copied(), &self.base_cov)?;
        Ok(Some(LandmarkView {
            class_label: &w.class_label,
            tracks: tracks_held,
            measurements: ms,
            gmm: std::borrow::Cow::Owned(gmm),
        }))
    }

    /// Resolves one group's tracks against the map and freezes the result.
    pub fn gibbs_assign_group(
        &mut self,
        group_tracks: &[GroupTrack],
        params: &AssocParams,
    ) -> Result<Vec<TrackAssignment>> {
        let Some(first) = group_tracks.first() else {
            return Ok(Vec::new());
        };
        if group_tracks
            .iter()
            .any(|t| t.group_index != first.group_index)
        {
            return Err(Error::input(
                "gibbs_assign_group received tracks from several groups",
            ));
        }
        if group_tracks.iter().any(|t| t.measurements.is_empty()) {
            return Err(Error::input("empty group track"));
        }
        let mut tracks = group_tracks.to_vec();
        tracks.sort_by_key(|t| t.track_index);

        let mut working: Vec<Working> = self
            .landmarks
            .iter()
            .enumerate()
            .map(|(i, lm)| Working {
                base: Some(i),
                class_label: lm.class_label.clone(),
                members: Vec::new(),
            })
            .collect();
        let mut assigned: Vec<Option<usize>> = vec![None; tracks.len()];
        let new_weight = params.alpha_new * params.base_density();

        for _sweep in 0..params.gibbs_sweeps {
            for t in 0..tracks.len() {
                if let Some(w) = assigned[t].take() {
                    working[w].members.retain(|&x| x != t);
                }
                let mut candidates = Vec::new();
                let mut weights = Vec::new();
                for (wi, w) in working.iter().enumerate() {
                    if let Some(view) = self.view_of(w, &tracks, t)? {
                        candidates.push(wi);
                        weights.push(landmark_weight(&tracks[t], &view, params));
                    }
                }
                let total: f64 = weights.iter().sum::<f64>() + new_weight;
                let mut u = self.rng.random::<f64>() * total;
                let mut choice = None;
                for (c, w) in candidates.iter().zip(&weights) {
                    if *w > 0.0 && u < *w {
                        choice = Some(*c);
                        break;
                    }
                    u -= w;
                }
                let wi = choice.unwrap_or_else(|| {
                    working.push(Working {
                        base: None,
                        class_label: tracks[t].class_label.clone(),
                        members: Vec::new(),
                    });
                    working.len() - 1
                });
                working[wi].members.push(t);
                assigned[t] = Some(wi);
            }
            debug_assert!(
                working.iter().all(|w| w.members.len() <= 1),
                "same-group exclusion violated"
            );
        }

        self.commit(&tracks, &working)
    }

    fn commit(
        &mut self,
        tracks: &[GroupTrack],
        working: &[Working],
    ) -> Result<Vec<TrackAssignment>> {
        let mut out = Vec::with_capacity(tracks.len());
        for w in working.iter().filter(|w| !w.members.is_empty()) {
            let mut fresh: Vec<ObjectMeasurement> = Vec::new();
            for &t in &w.members {
                for m in &tracks[t].measurements {
                    if !self.owner.contains_key(&m.measurement_id)
                        && !fresh.iter().any(|f| f.measurement_id == m.measurement_id)
                    {
                        fresh.push(m.clone());
                    }
                }
            }
            let idx = match w.base {
                Some(i) => i,
                None if fresh.is_empty() => {
                    out.extend(w.members.iter().map(|&t| TrackAssignment {
                        track: tracks[t].key(),
                        landmark_id: None,
                    }));
                    continue;
                }
                None => {
                    let gmm = build_gmm(&fresh, &self.base_cov)?;
                    self.landmarks.push(GlobalLandmark {
                        landmark_id: self.next_id,
                        class_label: w.class_label.clone(),
                        associated_tracks: Vec::new(),
                        measurements: Vec::new(),
                        gmm,
                        refined_pose: None,
                    });
                    self.next_id += 1;
                    self.landmarks.len() - 1
                }
            };
            let lm = &mut self.landmarks[idx];
            for &t in &w.members {
                lm.associated_tracks.push(tracks[t].key());
                out.push(TrackAssignment {
                    track: tracks[t].key(),
                    landmark_id: Some(lm.landmark_id),
                });
            }
            for m in fresh {
                self.owner.insert(m.measurement_id, lm.landmark_id);
                lm.measurements.push(m);
            }
            lm.gmm = build_gmm(&lm.measurements, &self.base_cov)?;
        }
        out.sort_by_key(|a| a.track);
        Ok(out)
    }

    /// Re-selects the pose of every landmark.
    pub fn refine_all(&mut self, params: &RefineParams) -> Result<()> {
        for lm in &mut self.landmarks {
            lm.refined_pose = Some(refine_pose(&lm.measurements, params)?);
        }
        Ok(())
    }

    /// Same-group exclusion, class purity, conservation and one measurement
    /// per keyframe per landmark.
    pub fn check_invariants(&self) -> Result<()> {
        check_map_invariants(&self.landmarks)
    }
}

pub fn check_map_invariants(landmarks: &[GlobalLandmark]) -> Result<()> {
    let mut seen_measurements = HashSet::new();
    for lm in landmarks {
        if lm.measurements.is_empty() {
            return Err(Error::input(format!(
                "landmark {} is empty",
                lm.landmark_id
            )));
        }
        let mut groups = HashSet::new();
        for &(g, _) in &lm.associated_tracks {
            if !groups.insert(g) {
                return Err(Error::input(format!(
                    "landmark {} holds two tracks of group {g}",
                    lm.landmark_id
                )));
            }
        }
        let mut keyframes = HashSet::new();
        for m in &lm.measurements {
            if m.class_label != lm.class_label {
                return Err(Error::input(format!(
                    "landmark {} mixes classes",
                    lm.landmark_id
                )));
            }
            if !keyframes.insert(m.keyframe_id) {
                return Err(Error::input(format!(
                    "landmark {} holds two measurements of keyframe {}",
                    lm.landmark_id, m.keyframe_id
                )));
            }
            if !seen_measurements.insert(m.measurement_id) {
                return Err(Error::input(format!(
                    "measurement {} belongs to two landmarks",
                    m.measurement_id
                )));
            }
        }
        if lm.gmm.len() != lm.measurements.len() {
            return Err(Error::input(format!(
                "landmark {} mixture out of date",
                lm.landmark_id
            )));
        }
    }
    Ok(())
}

/// Output of a full pipeline run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub landmarks: Vec<GlobalLandmark>,
    /// measurement_id -> landmark_id.
    pub assignments: BTreeMap<u64, u64>,
    pub group_count: usize,
    pub track_count: usize,
}

fn check_keyframes(keyframes: &[Keyframe]) -> Result<()> {
    let mut ids = HashSet::new();
    for w in keyframes.windows(2) {
        if w[0].keyframe_id >= w[1].keyframe_id {
            return Err(Error::input("keyframes must have strictly increasing ids"));
        }
    }
    for kf in keyframes {
        kf.validate()?;
        for m in &kf.measurements {
            if !ids.insert(m.measurement_id) {
                return Err(Error::input(format!(
                    "duplicate measurement id {}",
                    m.measurement_id
                )));
            }
        }
    }
    Ok(())
}

/// Grouping, intra-group tracking, Gibbs association and pose refinement over
/// a keyframe sequence. With `group_size = 1, group_overlap = 0` every track is
/// a single measurement and this is the per-keyframe baseline.
pub fn run_association(keyframes: &[Keyframe], config: &PipelineConfig) -> Result<RunResult> {
    config.validate()?;
    check_keyframes(keyframes)?;
    let by_id: HashMap<u64, &Keyframe> = keyframes.iter().map(|k| (k.keyframe_id, k)).collect();
    let mut grouper = StreamingGrouper::new(config.group_size, config.group_overlap)?;
    let mut state = MapState::new(config.gmm.base_covariance()?, config.assoc.seed);
    let mut group_count = 0;
    let mut track_count = 0;

    let mut process = |group: crate::grouping::KeyframeGroup, state: &mut MapState| -> Result<()> {
        let frames: Vec<&Keyframe> = group.keyframe_ids.iter().map(|id| by_id[id]).collect();
        let tracks = associate_within_group(group.group_index, &frames, &config.tracker);
        group_count += 1;
        track_count += tracks.len();
        state.gibbs_assign_group(&tracks, &config.assoc)?;
        state.refine_all(&config.refine)
    };

    for kf in keyframes {
        if let Some(group) = grouper.push_keyframe(kf)? {
            process(group, &mut state)?;
        }
    }
    if let Some(group) = grouper.flush() {
        process(group, &mut state)?;
    }

    let assignments = state.assignment_table();
    Ok(RunResult {
        landmarks: state.into_landmarks(),
        assignments,
        group_count,
        track_count,
    })
}
