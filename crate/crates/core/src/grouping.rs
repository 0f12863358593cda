//! Sliding-window partition of the keyframe stream into overlapping groups.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Keyframe;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyframeGroup {
    /// 1-based position of the group in the stream.
    pub group_index: usize,
    pub keyframe_ids: Vec<u64>,
    /// Keyframes shared with the previous group (0 for the first group).
    pub overlap_with_prev: usize,
}

fn check_params(group_size: usize, overlap: usize) -> Result<()> {
    if group_size < 1 {
        return Err(Error::config("group_size must be at least 1"));
    }
    if overlap >= group_size {
        return Err(Error::config(format!(
            "group_overlap {overlap} must be smaller than group_size {group_size}"
        )));
    }
    Ok(())
}

/// Batch grouping of an ordered keyframe list.
///
/// Group `n` covers indices `[(n-1)(M-j), (n-1)(M-j)+M)`. Trailing keyframes
/// that do not fill a whole group are emitted as a shorter final group when at
/// least one of them is not already covered.
pub fn form_groups(
    keyframes: &[Keyframe],
    group_size: usize,
    overlap: usize,
) -> Result<Vec<KeyframeGroup>> {
    check_params(group_size, overlap)?;
    if keyframes
        .windows(2)
        .any(|w| w[0].keyframe_id >= w[1].keyframe_id)
    {
        return Err(Error::input(
            "keyframes must be sorted by strictly increasing id",
        ));
    }
    let ids: Vec<u64> = keyframes.iter().map(|k| k.keyframe_id).collect();
    Ok(form_groups_from_ids(&ids, group_size, overlap))
}

pub(crate) fn form_groups_from_ids(
    ids: &[u64],
    group_size: usize,
    overlap: usize,
) -> Vec<KeyframeGroup> {
    let stride = group_size - overlap;
    let mut groups = Vec::new();
    let mut start = 0usize;
    let mut covered = 0usize;
    while start < ids.len() {
        let end = (start + group_size).min(ids.len());
        if end <= covered {
            break;
        }
        groups.push(KeyframeGroup {
            group_index: groups.len() + 1,
            keyframe_ids: ids[start..end].to_vec(),
            overlap_with_prev: if groups.is_empty() {
                0
            } else {
                covered - start
            },
        });
        covered = end;
        if end == ids.len() {
            break;
        }
        start += stride;
    }
    groups
}

/// Online counterpart of [`form_groups`].
#[derive(Debug, Clone)]
pub struct StreamingGrouper {
    group_size: usize,
    overlap: usize,
    window: Vec<u64>,
    fresh: usize,
    emitted: usize,
    last_id: Option<u64>,
}

impl StreamingGrouper {
    pub fn new(group_size: usize, overlap: usize) -> Result<Self> {
        check_params(group_size, overlap)?;
        Ok(Self {
            group_size,
            overlap,
            window: Vec::with_capacity(group_size),
            fresh: 0,
            emitted: 0,
            last_id: None,
        })
    }

    pub fn push_keyframe(&mut self, kf: &Keyframe) -> Result<Option<KeyframeGroup>> {
        self.push(kf.keyframe_id)
    }

    /// Adds a keyframe id; returns a group when its last keyframe arrives.
    pub fn push(&mut self, keyframe_id: u64) -> Result<Option<KeyframeGroup>> {
        if let Some(last) = self.last_id {
            if keyframe_id <= last {
                return Err(Error::input(format!(
                    "keyframe {keyframe_id} arrived after keyframe {last}"
                )));
            }
        }
        self.last_id = Some(keyframe_id);
        self.window.push(keyframe_id);
        self.fresh += 1;
        if self.window.len() == self.group_size {
            Ok(Some(self.emit()))
        } else {
            Ok(None)
        }
    }

    /// Emits the residual group, if it holds any keyframe not yet emitted.
    pub fn flush(&mut self) -> Option<KeyframeGroup> {
        (self.fresh > 0).then(|| self.emit())
    }

    fn emit(&mut self) -> KeyframeGroup {
        let group = KeyframeGroup {
            group_index: self.emitted + 1,
            keyframe_ids: self.window.clone(),
            overlap_with_prev: self.window.len() - self.fresh,
        };
        self.emitted += 1;
        let keep = self.overlap.min(self.window.len());
        self.window.drain(..self.window.len() - keep);
        self.fresh = 0;
        group
    }
}
