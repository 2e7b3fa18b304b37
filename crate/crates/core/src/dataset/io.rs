//! JSON-lines readers and writers for raw frames and processed windows.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GestureLabel, RawKeypointFrame, WindowId, WindowSample, COCO_KEYPOINTS};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct FrameLine {
    client: String,
    recording: String,
    frame: u64,
    label: GestureLabel,
    kp: Vec<[f64; 3]>,
}

#[derive(Serialize, Deserialize)]
struct WindowLine {
    client: String,
    label: GestureLabel,
    coords: Vec<f64>,
    #[serde(default)]
    recording: String,
    #[serde(default)]
    start: u64,
}

fn parse_lines<T, R: BufRead>(
    reader: R,
    mut convert: impl FnMut(&str) -> std::result::Result<T, String>,
) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(convert(&line).map_err(|message| Error::Parse {
            line: i + 1,
            message,
        })?);
    }
    Ok(out)
}

pub fn parse_frames<R: BufRead>(reader: R) -> Result<Vec<RawKeypointFrame>> {
    parse_lines(reader, |line| {
        let f: FrameLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let keypoints: [[f64; 3]; COCO_KEYPOINTS] = f
            .kp
            .try_into()
            .map_err(|kp: Vec<_>| format!("expected {COCO_KEYPOINTS} keypoints, got {}", kp.len()))?;
        if let Some(p) = keypoints.iter().find(|p| !(0.0..=1.0).contains(&p[2])) {
            return Err(format!("confidence {} outside [0, 1]", p[2]));
        }
        Ok(RawKeypointFrame {
            client_id: f.client,
            recording_id: f.recording,
            frame_index: f.frame,
            label: f.label,
            keypoints,
        })
    })
}

pub fn load_frames(path: &Path) -> Result<Vec<RawKeypointFrame>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_frames(BufReader::new(file))
}

pub fn write_frames<W: Write>(mut w: W, frames: &[RawKeypointFrame]) -> Result<()> {
    for f in frames {
        let line = FrameLine {
            client: f.client_id.clone(),
            recording: f.recording_id.clone(),
            frame: f.frame_index,
            label: f.label,
            kp: f.keypoints.to_vec(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n").map_err(|e| Error::io("<frames>", e))?;
    }
    Ok(())
}

pub fn save_frames(path: &Path, frames: &[RawKeypointFrame]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_frames(&mut w, frames)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn parse_windows<R: BufRead>(reader: R) -> Result<Vec<WindowSample>> {
    parse_lines(reader, |line| {
        let w: WindowLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
        WindowSample::new(
            WindowId {
                client: w.client,
                recording: w.recording,
                start_frame: w.start,
            },
            w.label,
            w.coords,
        )
        .map_err(|e| e.to_string())
    })
}

pub fn load_windows(path: &Path) -> Result<Vec<WindowSample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_windows(BufReader::new(file))
}

/// One line per window: `client`, `label`, frame-major `coords`, plus the
/// `recording`/`start` provenance used for contamination checks.
pub fn write_windows<W: Write>(mut w: W, windows: &[WindowSample]) -> Result<()> {
    for s in windows {
        let line = WindowLine {
            client: s.id.client.clone(),
            label: s.label,
            coords: s.coords.clone(),
            recording: s.id.recording.clone(),
            start: s.id.start_frame,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n").map_err(|e| Error::io("<windows>", e))?;
    }
    Ok(())
}

pub fn save_windows(path: &Path, windows: &[WindowSample]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_windows(&mut w, windows)?;
    w.flush().map_err(|e| Error::io(path, e))
}
