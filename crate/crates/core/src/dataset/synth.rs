//! Synthetic COCO-17 gesture recordings.
//!
//! Each gesture is a parametric wrist/elbow trajectory on a fixed stick
//! figure. Subjects differ in body placement, scale, handedness, stroke
//! direction, amplitude, tempo and class proportions, which makes per-subject
//! data non-IID in the same ways real recordings are.

use std::f64::consts::TAU;

use rand::Rng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::keypoints::ImageSize;
use super::{GestureLabel, RawKeypointFrame, COCO_KEYPOINTS, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub subjects: usize,
    pub recordings: usize,
    pub frames_per_recording: usize,
    pub image_width: f64,
    pub image_height: f64,
    /// Per-keypoint Gaussian jitter, pixels.
    pub noise: f64,
    /// Strength of per-subject style offsets; 0 makes all subjects identical in style.
    pub style: f64,
    /// Probability that a keypoint is reported with near-zero confidence.
    pub dropout: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            subjects: 5,
            recordings: 2,
            frames_per_recording: 480,
            image_width: 640.0,
            image_height: 480.0,
            noise: 2.0,
            style: 1.0,
            dropout: 0.01,
        }
    }
}

impl SynthSpec {
    pub fn image_size(&self) -> Result<ImageSize> {
        ImageSize::new(self.image_width, self.image_height)
    }

    pub fn validate(&self) -> Result<()> {
        self.image_size()?;
        if self.subjects == 0 || self.recordings == 0 {
            return Err(Error::Config("synthetic spec needs >= 1 subject and recording".into()));
        }
        if !(self.noise >= 0.0 && self.style >= 0.0 && (0.0..=1.0).contains(&self.dropout)) {
            return Err(Error::Config(format!(
                "synthetic spec: noise {} / style {} must be >= 0 and dropout {} in [0, 1]",
                self.noise, self.style, self.dropout
            )));
        }
        Ok(())
    }

    pub fn subject_id(index: usize) -> String {
        format!("s{}", index + 1)
    }
}

/// Rest pose relative to the hip center, pixels at scale 1; COCO order.
/// `l_*` joints sit at +x.
const REST: [(f64, f64); COCO_KEYPOINTS] = [
    (0.0, -150.0),
    (7.0, -158.0),
    (-7.0, -158.0),
    (15.0, -153.0),
    (-15.0, -153.0),
    (42.0, -120.0),
    (-42.0, -120.0),
    (50.0, -65.0),
    (-50.0, -65.0),
    (52.0, -10.0),
    (-52.0, -10.0),
    (25.0, 0.0),
    (-25.0, 0.0),
    (27.0, 75.0),
    (-27.0, 75.0),
    (28.0, 150.0),
    (-28.0, 150.0),
];

const L_SHOULDER: usize = 5;
const R_SHOULDER: usize = 6;
const L_ELBOW: usize = 7;
const R_ELBOW: usize = 8;
const L_WRIST: usize = 9;
const R_WRIST: usize = 10;

#[derive(Debug, Clone)]
struct SubjectStyle {
    center: (f64, f64),
    scale: f64,
    left_handed: bool,
    rotation: f64,
    amplitude: f64,
    period: f64,
    lean: f64,
    class_weights: [f64; NUM_CLASSES],
}

impl SubjectStyle {
    fn sample(index: usize, spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Self {
        let s = spec.style;
        let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
        let center = (
            0.5 * spec.image_width + s * u(-0.2, 0.2) * spec.image_width,
            0.62 * spec.image_height + s * u(-0.1, 0.1) * spec.image_height,
        );
        let scale = 1.0 + s * u(-0.3, 0.3);
        let rotation = s * u(-0.7, 0.7);
        let amplitude = 1.0 + s * u(-0.3, 0.3);
        let period = 22.0 * (1.0 + s * u(-0.35, 0.35));
        let lean = s * u(-0.15, 0.15);
        let mut class_weights = [1.0; NUM_CLASSES];
        for w in &mut class_weights {
            *w = u(0.4, 1.6).powf(s.min(1.0));
        }
        Self {
            center,
            scale,
            left_handed: s > 0.0 && index % 2 == 1,
            rotation,
            amplitude,
            period,
            lean,
            class_weights,
        }
    }
}

/// Slow stroke over 80% of the cycle, quick return: the sign of the motion
/// vector is visible in the temporal profile.
fn stroke(phase: f64) -> f64 {
    let f = phase.rem_euclid(1.0);
    if f < 0.8 {
        f / 0.8
    } else {
        (1.0 - f) / 0.2
    }
}

fn rotate((x, y): (f64, f64), a: f64) -> (f64, f64) {
    let (s, c) = a.sin_cos();
    (c * x - s * y, s * x + c * y)
}

/// Joint positions (pixels, before noise) for `label` at cycle phase `phase`.
fn pose(label: GestureLabel, phase: f64, style: &SubjectStyle) -> [(f64, f64); COCO_KEYPOINTS] {
    let mut p = REST;
    let (active_sh, active_wr, out) = if style.left_handed {
        (L_SHOULDER, L_WRIST, 1.0)
    } else {
        (R_SHOULDER, R_WRIST, -1.0)
    };
    let s = stroke(phase);
    let amp = style.amplitude;
    let sh = p[active_sh];
    let single = |zone: (f64, f64), motion: (f64, f64)| {
        let m = rotate(motion, style.rotation);
        (
            sh.0 + out * zone.0 + amp * m.0 * (s - 0.5),
            sh.1 + zone.1 + amp * m.1 * (s - 0.5),
        )
    };
    let mid_y = p[L_SHOULDER].1 + 40.0;
    let both_hands = |p: &mut [(f64, f64); COCO_KEYPOINTS], half_gap: f64| {
        p[L_WRIST] = (half_gap, mid_y);
        p[R_WRIST] = (-half_gap, mid_y);
    };
    match label {
        GestureLabel::Up => p[active_wr] = single((25.0, -60.0), (0.0, -70.0)),
        GestureLabel::Down => p[active_wr] = single((25.0, -30.0), (0.0, 70.0)),
        GestureLabel::Left => p[active_wr] = single((45.0, -5.0), (-80.0, 0.0)),
        GestureLabel::Right => p[active_wr] = single((45.0, -5.0), (80.0, 0.0)),
        GestureLabel::Stop => {
            let tremble = 2.0 * (TAU * phase * 3.0).sin();
            p[active_wr] = (sh.0 + out * 10.0 + tremble, sh.1 - 55.0);
        }
        GestureLabel::Grab => both_hands(&mut p, 75.0 - 55.0 * amp * s),
        GestureLabel::Ungrab => both_hands(&mut p, 20.0 + 55.0 * amp * s),
        GestureLabel::Nothing => {
            let sway = 4.0 * (TAU * phase).sin();
            p[L_WRIST].0 += sway;
            p[R_WRIST].0 += sway;
        }
    }
    // Elbows sit between shoulder and wrist, bowed outward.
    for (shoulder, elbow, wrist, side) in [(L_SHOULDER, L_ELBOW, L_WRIST, 1.0), (R_SHOULDER, R_ELBOW, R_WRIST, -1.0)] {
        p[elbow] = (
            0.5 * (p[shoulder].0 + p[wrist].0) + side * 12.0,
            0.5 * (p[shoulder].1 + p[wrist].1) + 8.0,
        );
    }
    // Upper-body lean about the hips.
    for (k, q) in p.iter_mut().enumerate() {
        if k <= R_WRIST {
            *q = (q.0 + style.lean * -q.1, q.1);
        }
    }
    p
}

/// Segment lengths per class for one recording, proportional to the
/// subject's class weights.
fn segment_lengths(frames: usize, weights: &[f64; NUM_CLASSES]) -> [usize; NUM_CLASSES] {
    let total: f64 = weights.iter().sum();
    let mut lens = weights.map(|w| (frames as f64 * w / total).floor() as usize);
    let assigned: usize = lens.iter().sum();
    lens[NUM_CLASSES - 1] += frames - assigned;
    lens
}

/// Deterministic synthetic dataset: `subjects × recordings × frames_per_recording`
/// frames in pixel coordinates, ordered by subject, recording, frame.
pub fn synthesize_dataset(spec: &SynthSpec, seed: u64) -> Result<Vec<RawKeypointFrame>> {
    spec.validate()?;
    let noise = Normal::new(0.0, spec.noise.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(format!("synthetic noise: {e}")))?;
    let mut out = Vec::with_capacity(spec.subjects * spec.recordings * spec.frames_per_recording);
    for subject in 0..spec.subjects {
        let mut srng = rng(derive_seed(seed, &[stream::SYNTH, subject as u64]));
        let style = SubjectStyle::sample(subject, spec, &mut srng);
        let client_id = SynthSpec::subject_id(subject);
        for rec in 0..spec.recordings {
            let mut rrng = rng(derive_seed(seed, &[stream::SYNTH, subject as u64, rec as u64 + 1]));
            let mut order = GestureLabel::ALL;
            order.shuffle(&mut rrng);
            let lens = segment_lengths(spec.frames_per_recording, &style.class_weights);
            let drift = (rrng.random_range(-6.0..6.0), rrng.random_range(-6.0..6.0));
            let mut frame_index = 0u64;
            for (label, &len) in order.iter().zip(&lens) {
                let start_phase: f64 = rrng.random();
                for t in 0..len {
                    let phase = start_phase + t as f64 / style.period;
                    let joints = pose(*label, phase, &style);
                    let mut keypoints = [[0.0; 3]; COCO_KEYPOINTS];
                    for (kp, (x, y)) in keypoints.iter_mut().zip(joints) {
                        let jitter = if spec.noise > 0.0 {
                            (noise.sample(&mut rrng), noise.sample(&mut rrng))
                        } else {
                            (0.0, 0.0)
                        };
                        let px = style.center.0 + drift.0 + style.scale * x + jitter.0;
                        let py = style.center.1 + drift.1 + style.scale * y + jitter.1;
                        *kp = if rrng.random::<f64>() < spec.dropout {
                            [0.0, 0.0, 0.01]
                        } else {
                            [px, py, rrng.random_range(0.6..1.0)]
                        };
                    }
                    out.push(RawKeypointFrame {
                        client_id: client_id.clone(),
                        recording_id: format!("r{}", rec + 1),
                        frame_index,
                        label: *label,
                        keypoints,
                    });
                    frame_index += 1;
                }
            }
        }
    }
    Ok(out)
}
