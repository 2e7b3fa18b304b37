//! Pose data pipeline: COCO-17 keypoint frames in, labelled 20-frame windows
//! and per-client splits/partitions out.

pub mod io;
pub mod keypoints;
pub mod partition;
pub mod split;
pub mod synth;
pub mod windows;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use keypoints::{merge_facial_keypoints, normalize_frame, ImageSize};
pub use partition::{build_fedensemble_partition, by_subject_partition, PartitionMode, PartitionPlan};
pub use split::{split_by_client, stratified_split, SplitFractions};
pub use synth::{synthesize_dataset, SynthSpec};
pub use windows::{build_windows, slide_windows, Recording};

/// Number of COCO keypoints per raw frame.
pub const COCO_KEYPOINTS: usize = 17;
/// Joints kept after merging the face into one head point.
pub const JOINTS: usize = 13;
/// Values per processed frame: 13 joints × (x, y).
pub const FRAME_DIM: usize = 2 * JOINTS;
/// Frames per window sample.
pub const WINDOW_LEN: usize = 20;
pub const NUM_CLASSES: usize = 8;

/// The eight gestures in canonical (alphabetical) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GestureLabel {
    Down,
    Grab,
    Left,
    Nothing,
    Right,
    Stop,
    Ungrab,
    Up,
}

impl GestureLabel {
    pub const ALL: [GestureLabel; NUM_CLASSES] = [
        GestureLabel::Down,
        GestureLabel::Grab,
        GestureLabel::Left,
        GestureLabel::Nothing,
        GestureLabel::Right,
        GestureLabel::Stop,
        GestureLabel::Ungrab,
        GestureLabel::Up,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            GestureLabel::Down => "down",
            GestureLabel::Grab => "grab",
            GestureLabel::Left => "left",
            GestureLabel::Nothing => "nothing",
            GestureLabel::Right => "right",
            GestureLabel::Stop => "stop",
            GestureLabel::Ungrab => "ungrab",
            GestureLabel::Up => "up",
        }
    }
}

impl fmt::Display for GestureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GestureLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Data(format!("unknown gesture label `{s}`")))
    }
}

/// One estimated COCO-17 pose: `(x, y, confidence)` per keypoint, in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawKeypointFrame {
    pub client_id: String,
    pub recording_id: String,
    pub frame_index: u64,
    pub label: GestureLabel,
    pub keypoints: [[f64; 3]; COCO_KEYPOINTS],
}

/// 13 joints × (x, y), order
/// `[head, l_shoulder, r_shoulder, l_elbow, r_elbow, l_wrist, r_wrist, l_hip, r_hip, l_knee, r_knee, l_ankle, r_ankle]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseFrame {
    pub coords: [f64; FRAME_DIM],
    pub label: GestureLabel,
}

/// Identity of a window: where it was cut from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WindowId {
    pub client: String,
    pub recording: String,
    pub start_frame: u64,
}

/// 20 consecutive pose frames from one recording with a single label.
/// Coordinates are frame-major: `coords[t * 26 + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub id: WindowId,
    pub label: GestureLabel,
    pub coords: Vec<f64>,
}

impl WindowSample {
    pub fn new(id: WindowId, label: GestureLabel, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != WINDOW_LEN * FRAME_DIM {
            return Err(Error::dim(format!(
                "window needs {} values, got {}",
                WINDOW_LEN * FRAME_DIM,
                coords.len()
            )));
        }
        Ok(Self { id, label, coords })
    }

    pub fn client_id(&self) -> &str {
        &self.id.client
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.coords[t * FRAME_DIM..(t + 1) * FRAME_DIM]
    }
}

/// One client's disjoint train/val/test windows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClientDataset {
    pub client_id: String,
    pub train: Vec<WindowSample>,
    pub val: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
}

impl ClientDataset {
    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_windows(&self) -> impl Iterator<Item = &WindowSample> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }
}

/// Per-class window counts in canonical order.
pub fn class_histogram<'a>(windows: impl IntoIterator<Item = &'a WindowSample>) -> [usize; NUM_CLASSES] {
    let mut h = [0; NUM_CLASSES];
    for w in windows {
        h[w.label.index()] += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_biject_with_indices() {
        for (i, l) in GestureLabel::ALL.iter().enumerate() {
            assert_eq!(l.index(), i);
            assert_eq!(GestureLabel::from_index(i), Some(*l));
            assert_eq!(l.name().parse::<GestureLabel>().unwrap(), *l);
        }
        assert_eq!(GestureLabel::from_index(8), None);
        assert!("jump".parse::<GestureLabel>().is_err());
    }

    #[test]
    fn canonical_order_is_alphabetical() {
        let names: Vec<_> = GestureLabel::ALL.iter().map(|l| l.name()).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        assert_eq!(GestureLabel::Stop.index(), 5);
    }

    #[test]
    fn label_serializes_lowercase() {
        assert_eq!(serde_json::to_string(&GestureLabel::Ungrab).unwrap(), "\"ungrab\"");
    }
}
