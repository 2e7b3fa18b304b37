use std::collections::BTreeMap;

use super::keypoints::{fill_low_confidence, merge_facial_keypoints, normalize_frame, ImageSize};
use super::{PoseFrame, RawKeypointFrame, WindowId, WindowSample, FRAME_DIM, WINDOW_LEN};
use crate::error::{Error, Result};

/// Processed frames of one recording, in frame order.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub client_id: String,
    pub recording_id: String,
    pub frame_indices: Vec<u64>,
    pub frames: Vec<PoseFrame>,
}

impl Recording {
    /// Lengths of maximal runs of same-label frames with consecutive indices.
    pub fn label_runs(&self) -> Vec<(usize, usize)> {
        let mut runs = Vec::new();
        let mut start = 0;
        for i in 1..=self.frames.len() {
            let boundary = i == self.frames.len()
                || self.frames[i].label != self.frames[i - 1].label
                || self.frame_indices[i] != self.frame_indices[i - 1] + 1;
            if boundary {
                runs.push((start, i - start));
                start = i;
            }
        }
        runs
    }
}

/// Stride-1 windows over every label run; runs shorter than the window yield
/// nothing and windows never cross a label change or a frame-index gap.
pub fn slide_windows(recording: &Recording) -> Vec<WindowSample> {
    let mut out = Vec::new();
    for (start, len) in recording.label_runs() {
        if len < WINDOW_LEN {
            continue;
        }
        for s in start..=start + len - WINDOW_LEN {
            let mut coords = Vec::with_capacity(WINDOW_LEN * FRAME_DIM);
            for f in &recording.frames[s..s + WINDOW_LEN] {
                coords.extend_from_slice(&f.coords);
            }
            out.push(WindowSample {
                id: WindowId {
                    client: recording.client_id.clone(),
                    recording: recording.recording_id.clone(),
                    start_frame: recording.frame_indices[s],
                },
                label: recording.frames[s].label,
                coords,
            });
        }
    }
    out
}

/// Groups raw frames into recordings (sorted by client, then recording id),
/// fills low-confidence keypoints, merges the face, and normalizes.
pub fn group_recordings(raw: &[RawKeypointFrame], size: ImageSize) -> Result<Vec<Recording>> {
    let mut groups: BTreeMap<(&str, &str), Vec<RawKeypointFrame>> = BTreeMap::new();
    for f in raw {
        groups
            .entry((f.client_id.as_str(), f.recording_id.as_str()))
            .or_default()
            .push(f.clone());
    }
    let mut recordings = Vec::with_capacity(groups.len());
    for ((client, rec), mut frames) in groups {
        if let Some(w) = frames.windows(2).find(|w| w[1].frame_index <= w[0].frame_index) {
            return Err(Error::Data(format!(
                "recording {client}/{rec}: frame index {} follows {} (must strictly increase)",
                w[1].frame_index, w[0].frame_index
            )));
        }
        fill_low_confidence(&mut frames, size);
        let processed = frames
            .iter()
            .map(|f| normalize_frame(&merge_facial_keypoints(f), size.width, size.height))
            .collect::<Result<Vec<_>>>()?;
        recordings.push(Recording {
            client_id: client.to_owned(),
            recording_id: rec.to_owned(),
            frame_indices: frames.iter().map(|f| f.frame_index).collect(),
            frames: processed,
        });
    }
    Ok(recordings)
}

/// Full preprocessing: raw frames → windows, in canonical recording order.
pub fn build_windows(raw: &[RawKeypointFrame], size: ImageSize) -> Result<Vec<WindowSample>> {
    Ok(group_recordings(raw, size)?
        .iter()
        .flat_map(slide_windows)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::GestureLabel;

    fn recording(labels: &[(GestureLabel, usize)]) -> Recording {
        let mut frames = Vec::new();
        for &(label, n) in labels {
            for _ in 0..n {
                let mut coords = [0.0; FRAME_DIM];
                coords[0] = frames.len() as f64;
                frames.push(PoseFrame { coords, label });
            }
        }
        Recording {
            client_id: "c1".into(),
            recording_id: "r1".into(),
            frame_indices: (0..frames.len() as u64).collect(),
            frames,
        }
    }

    #[test]
    fn exact_fit_gives_one_window() {
        assert_eq!(slide_windows(&recording(&[(GestureLabel::Up, 20)])).len(), 1);
    }

    #[test]
    fn longer_run_gives_stride_one_windows() {
        let w = slide_windows(&recording(&[(GestureLabel::Up, 25)]));
        assert_eq!(w.len(), 6);
        assert_eq!(w[5].id.start_frame, 5);
        assert_eq!(w[5].frame(0)[0], 5.0);
        assert_eq!(w[5].frame(19)[0], 24.0);
    }

    #[test]
    fn short_run_gives_nothing() {
        assert!(slide_windows(&recording(&[(GestureLabel::Up, 19)])).is_empty());
    }

    #[test]
    fn windows_never_straddle_label_changes() {
        let rec = recording(&[(GestureLabel::Up, 30), (GestureLabel::Down, 10), (GestureLabel::Up, 21)]);
        let w = slide_windows(&rec);
        assert_eq!(w.len(), 11 + 0 + 2);
        assert!(w.iter().all(|w| w.label == GestureLabel::Up));
        assert_eq!(w[11].id.start_frame, 40);
    }

    #[test]
    fn index_gaps_break_runs() {
        let mut rec = recording(&[(GestureLabel::Up, 30)]);
        for i in rec.frame_indices.iter_mut().skip(15) {
            *i += 1;
        }
        assert!(slide_windows(&rec).is_empty());
    }

    #[test]
    fn non_increasing_frame_index_is_rejected() {
        let f = RawKeypointFrame {
            client_id: "c".into(),
            recording_id: "r".into(),
            frame_index: 3,
            label: GestureLabel::Up,
            keypoints: [[1.0, 1.0, 1.0]; 17],
        };
        let g = RawKeypointFrame { frame_index: 3, ..f.clone() };
        assert!(group_recordings(&[f, g], ImageSize::default()).is_err());
    }
}
