//! Pose sequences, the `.motion.json` format and a procedural walk.
//!
//! A [`MotionSequence`] stores one [`Pose`] per frame. On disk it is
//!
//! ```json
//! {"fps": 30.0, "frames": [{"root_trans": [x, y, z], "pose": [[ax, ay, az], ...]}]}
//! ```
//!
//! with 24 pose entries per frame in skeleton joint order.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::derivatives::MIN_FRAMES;
use crate::error::{Error, Result};
use crate::rotations::Vec3;
use crate::skeleton::{joint_index, Pose, NUM_JOINTS};

/// Pose parameters per frame: 24 axis-angles plus the root translation.
pub const CHANNELS_PER_FRAME: usize = 3 * NUM_JOINTS + 3;

#[derive(Clone, Debug, PartialEq)]
pub struct MotionSequence {
    pub fps: f64,
    pub frames: Vec<Pose>,
}

#[derive(Serialize, Deserialize)]
struct FrameRecord {
    root_trans: Vec<f64>,
    pose: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct MotionRecord {
    fps: f64,
    frames: Vec<FrameRecord>,
}

fn vec3_from(values: &[f64], what: impl Fn() -> String) -> Result<Vec3> {
    if values.len() != 3 {
        return Err(Error::Parse(format!("{}: expected 3 components, got {}", what(), values.len())));
    }
    let v = Vec3::new(values[0], values[1], values[2]);
    if !v.is_finite() {
        return Err(Error::Parse(format!("{}: non-finite value", what())));
    }
    Ok(v)
}

impl MotionSequence {
    pub fn new(fps: f64, frames: Vec<Pose>) -> Result<Self> {
        let m = MotionSequence { fps, frames };
        m.validate()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.fps
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::invalid(format!("fps must be positive, got {}", self.fps)));
        }
        if self.frames.len() < MIN_FRAMES {
            return Err(Error::SequenceTooShort {
                needed: MIN_FRAMES,
                got: self.frames.len(),
            });
        }
        for (t, f) in self.frames.iter().enumerate() {
            if f.rotations.len() != NUM_JOINTS {
                return Err(Error::invalid(format!(
                    "frame {t}: expected {NUM_JOINTS} pose entries, got {}",
                    f.rotations.len()
                )));
            }
            if !f.is_finite() {
                return Err(Error::invalid(format!("frame {t}: non-finite pose value")));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: MotionRecord = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let mut frames = Vec::with_capacity(rec.frames.len());
        for (t, fr) in rec.frames.iter().enumerate() {
            if fr.pose.len() != NUM_JOINTS {
                return Err(Error::Parse(format!(
                    "frame {t}: expected {NUM_JOINTS} pose entries, got {}",
                    fr.pose.len()
                )));
            }
            let root_trans = vec3_from(&fr.root_trans, || format!("frame {t} root_trans"))?;
            let rotations = fr
                .pose
                .iter()
                .enumerate()
                .map(|(j, aa)| vec3_from(aa, || format!("frame {t} joint {j}")))
                .collect::<Result<_>>()?;
            frames.push(Pose { rotations, root_trans });
        }
        MotionSequence::new(rec.fps, frames)
    }

    pub fn to_json(&self) -> String {
        let rec = MotionRecord {
            fps: self.fps,
            frames: self
                .frames
                .iter()
                .map(|f| FrameRecord {
                    root_trans: f.root_trans.to_array().to_vec(),
                    pose: f.rotations.iter().map(|r| r.to_array().to_vec()).collect(),
                })
                .collect(),
        };
        serde_json::to_string(&rec).expect("motion serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Frame-major flat parameter vector, [`CHANNELS_PER_FRAME`] per frame:
    /// 72 rotation channels then the translation.
    pub fn to_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * CHANNELS_PER_FRAME);
        for f in &self.frames {
            for r in &f.rotations {
                out.extend_from_slice(&r.to_array());
            }
            out.extend_from_slice(&f.root_trans.to_array());
        }
        out
    }

    /// Inverse of [`MotionSequence::to_params`].
    pub fn from_params(fps: f64, params: &[f64]) -> Result<Self> {
        if !params.len().is_multiple_of(CHANNELS_PER_FRAME) {
            return Err(Error::invalid(format!(
                "parameter count {} is not a multiple of {CHANNELS_PER_FRAME}",
                params.len()
            )));
        }
        let frames = params
            .chunks(CHANNELS_PER_FRAME)
            .map(|c| Pose {
                rotations: (0..NUM_JOINTS)
                    .map(|j| Vec3::new(c[3 * j], c[3 * j + 1], c[3 * j + 2]))
                    .collect(),
                root_trans: Vec3::new(c[3 * NUM_JOINTS], c[3 * NUM_JOINTS + 1], c[3 * NUM_JOINTS + 2]),
            })
            .collect();
        MotionSequence::new(fps, frames)
    }

    /// Value of channel `c` (0..75, same layout as `to_params`) over time.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.frames
            .iter()
            .map(|f| if c < 3 * NUM_JOINTS { f.rotations[c / 3][c % 3] } else { f.root_trans[c - 3 * NUM_JOINTS] })
            .collect()
    }
}

fn check_same_shape(a: &MotionSequence, b: &MotionSequence) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("motions differ in length: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

fn interior(n: usize, exclude: usize) -> Result<std::ops::Range<usize>> {
    if n <= 2 * exclude {
        return Err(Error::SequenceTooShort {
            needed: 2 * exclude + 1,
            got: n,
        });
    }
    Ok(exclude..n - exclude)
}

/// Root-mean-square difference over all 72 rotation channels of the
/// frames `exclude..T-exclude` (rad).
pub fn pose_error_rms(a: &MotionSequence, b: &MotionSequence, exclude: usize) -> Result<f64> {
    check_same_shape(a, b)?;
    let range = interior(a.len(), exclude)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in range {
        for (ra, rb) in a.frames[t].rotations.iter().zip(&b.frames[t].rotations) {
            sum += (*ra - *rb).norm_sq();
            count += 3;
        }
    }
    Ok((sum / count as f64).sqrt())
}

/// Mean over joints and interior frames of the axis-angle difference norm (rad).
pub fn pose_error_mean_norm(a: &MotionSequence, b: &MotionSequence, exclude: usize) -> Result<f64> {
    check_same_shape(a, b)?;
    let range = interior(a.len(), exclude)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in range {
        for (ra, rb) in a.frames[t].rotations.iter().zip(&b.frames[t].rotations) {
            sum += (*ra - *rb).norm();
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// Parameters of the procedural walk. Angles in rad, lengths in m.
///
/// Hip flexion is a negative rotation about +X (the thigh swings toward
/// +Z), knee flexion a positive one. Every channel is a finite sum of
/// sinusoids at multiples of `stride_hz`; the right side is the left side
/// delayed by half a stride.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaitConfig {
    pub stride_hz: f64,
    pub hip_amplitude: f64,
    pub knee_mean: f64,
    pub knee_amplitude: f64,
    /// Knee component at twice the stride frequency.
    pub knee_second_harmonic: f64,
    pub ankle_amplitude: f64,
    /// Abduction that brings the arms down from the T-pose.
    pub arm_abduction: f64,
    pub arm_swing: f64,
    pub elbow_mean: f64,
    pub elbow_amplitude: f64,
    pub spine_twist: f64,
    pub pelvis_twist: f64,
    pub speed: f64,
    pub vertical_bob: f64,
    pub lateral_sway: f64,
}

impl Default for GaitConfig {
    fn default() -> Self {
        GaitConfig {
            stride_hz: 1.0,
            hip_amplitude: 0.4,
            knee_mean: 0.45,
            knee_amplitude: 0.3,
            knee_second_harmonic: 0.1,
            ankle_amplitude: 0.15,
            arm_abduction: 1.3,
            arm_swing: 0.3,
            elbow_mean: 0.3,
            elbow_amplitude: 0.1,
            spine_twist: 0.05,
            pelvis_twist: 0.08,
            speed: 1.2,
            vertical_bob: 0.02,
            lateral_sway: 0.02,
        }
    }
}

fn j(name: &str) -> usize {
    joint_index(name).expect("built-in joint name")
}

/// A walk of `round(duration_s * fps)` frames.
pub fn synth_walk(duration_s: f64, fps: f64, cfg: &GaitConfig) -> Result<MotionSequence> {
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::invalid(format!("duration must be positive, got {duration_s}")));
    }
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::invalid(format!("fps must be positive, got {fps}")));
    }
    let n = (duration_s * fps).round() as usize;
    let w = 2.0 * PI * cfg.stride_hz;
    let frames = (0..n)
        .map(|t| {
            let time = t as f64 / fps;
            walk_pose(cfg, w * time, time)
        })
        .collect();
    MotionSequence::new(fps, frames)
}

fn walk_pose(cfg: &GaitConfig, phase: f64, time: f64) -> Pose {
    let mut rot = vec![Vec3::zero(); NUM_JOINTS];
    // left leg at `phase`, right leg half a stride later
    for (side, ph) in [("left", phase), ("right", phase + PI)] {
        rot[j(&format!("{side}_hip"))] = Vec3::new(-cfg.hip_amplitude * ph.sin(), 0.0, 0.0);
        let knee = cfg.knee_mean
            + cfg.knee_amplitude * (ph + 0.5 * PI).sin()
            + cfg.knee_second_harmonic * (2.0 * ph).sin();
        rot[j(&format!("{side}_knee"))] = Vec3::new(knee, 0.0, 0.0);
        rot[j(&format!("{side}_ankle"))] = Vec3::new(cfg.ankle_amplitude * (ph - 0.25 * PI).sin(), 0.0, 0.0);
    }
    // arms swing against the leg on the same side
    for (side, sign, ph) in [("left", -1.0, phase), ("right", 1.0, phase + PI)] {
        rot[j(&format!("{side}_shoulder"))] = Vec3::new(cfg.arm_swing * ph.sin(), 0.0, sign * cfg.arm_abduction);
        let elbow = cfg.elbow_mean + cfg.elbow_amplitude * ph.sin();
        rot[j(&format!("{side}_elbow"))] = Vec3::new(0.0, -sign * elbow, 0.0);
    }
    for s in ["spine1", "spine2", "spine3"] {
        rot[j(s)] = Vec3::new(0.0, cfg.spine_twist * phase.sin(), 0.0);
    }
    rot[0] = Vec3::new(0.0, -cfg.pelvis_twist * phase.sin(), 0.0);
    let root_trans = Vec3::new(
        cfg.lateral_sway * phase.sin(),
        cfg.vertical_bob * (2.0 * phase).cos(),
        cfg.speed * time,
    );
    Pose {
        rotations: rot,
        root_trans,
    }
}
