//! Per-frame keypoint reduction: COCO-17 → 13 joints, pixel → unit coordinates.

use serde::{Deserialize, Serialize};

use super::{PoseFrame, RawKeypointFrame, COCO_KEYPOINTS, FRAME_DIM};
use crate::error::{Error, Result};

/// COCO indices of nose, eyes and ears; averaged into the head joint.
pub const FACIAL_KEYPOINTS: [usize; 5] = [0, 1, 2, 3, 4];
/// Keypoints below this confidence are treated as missing.
pub const MIN_CONFIDENCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: f64,
    pub height: f64,
}

impl ImageSize {
    pub fn new(width: f64, height: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(width) || !ok(height) {
            return Err(Error::Config(format!(
                "image size must be positive, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * self.width, 0.5 * self.height)
    }
}

impl Default for ImageSize {
    fn default() -> Self {
        Self {
            width: 640.0,
            height: 480.0,
        }
    }
}

/// Collapses the five facial keypoints into their mean (the head joint) and
/// copies the twelve body joints through. Confidence is ignored here.
pub fn merge_facial_keypoints(raw: &RawKeypointFrame) -> PoseFrame {
    let kp = &raw.keypoints;
    let n = FACIAL_KEYPOINTS.len() as f64;
    let (sx, sy) = FACIAL_KEYPOINTS
        .iter()
        .fold((0.0, 0.0), |(sx, sy), &i| (sx + kp[i][0], sy + kp[i][1]));
    let mut coords = [0.0; FRAME_DIM];
    coords[0] = sx / n;
    coords[1] = sy / n;
    for (j, p) in kp[FACIAL_KEYPOINTS.len()..COCO_KEYPOINTS].iter().enumerate() {
        coords[2 + 2 * j] = p[0];
        coords[3 + 2 * j] = p[1];
    }
    PoseFrame {
        coords,
        label: raw.label,
    }
}

/// Divides x by width and y by height, clamping into `[0, 1]`.
pub fn normalize_frame(frame: &PoseFrame, width: f64, height: f64) -> Result<PoseFrame> {
    let size = ImageSize::new(width, height)?;
    let mut out = *frame;
    for pair in out.coords.chunks_exact_mut(2) {
        pair[0] = (pair[0] / size.width).clamp(0.0, 1.0);
        pair[1] = (pair[1] / size.height).clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Replaces low-confidence keypoints in a recording (frames in order) with the
/// previous frame's value for that keypoint, or the image center when there is
/// none. Non-finite coordinates count as missing.
pub fn fill_low_confidence(frames: &mut [RawKeypointFrame], size: ImageSize) {
    let (cx, cy) = size.center();
    let mut last: [(f64, f64); COCO_KEYPOINTS] = [(cx, cy); COCO_KEYPOINTS];
    for frame in frames {
        for (k, p) in frame.keypoints.iter_mut().enumerate() {
            let missing = !(p[2] >= MIN_CONFIDENCE) || !p[0].is_finite() || !p[1].is_finite();
            if missing {
                p[0] = last[k].0;
                p[1] = last[k].1;
            } else {
                last[k] = (p[0], p[1]);
            }
        }
    }
}
