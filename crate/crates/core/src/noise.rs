//! Additive noise on axis-angle pose channels.
//!
//! All randomness comes from ChaCha8 seeded with `seed_from_u64`, with
//! standard normals drawn through `rand_distr` in a fixed order (frame,
//! then joint, then axis), so a seed yields the same noise on every
//! platform.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::MotionSequence;
use crate::rotations::Vec3;
use crate::skeleton::{joint_index, NUM_JOINTS};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal3(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal))
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma must be finite and non-negative, got {sigma}")));
    }
    Ok(())
}

/// I.i.d. Gaussian noise of std `sigma` on all 72 rotation channels.
pub fn add_uniform_noise(motion: &MotionSequence, sigma: f64, seed: u64) -> Result<MotionSequence> {
    let all: Vec<usize> = (0..NUM_JOINTS).collect();
    add_joint_noise(motion, &all, sigma, seed)
}

/// I.i.d. Gaussian noise of std `sigma` on the rotations of `joints` only.
pub fn add_joint_noise(motion: &MotionSequence, joints: &[usize], sigma: f64, seed: u64) -> Result<MotionSequence> {
    check_sigma(sigma)?;
    if let Some(&j) = joints.iter().find(|&&j| j >= NUM_JOINTS) {
        return Err(Error::invalid(format!("joint index {j} out of range")));
    }
    let mut out = motion.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let mut rng = rng(seed);
    for f in &mut out.frames {
        for &j in joints {
            f.rotations[j] += normal3(&mut rng).scale(sigma);
        }
    }
    Ok(out)
}

/// Joint-dependent, depth-anisotropic noise with a flicker term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    /// Base std per joint (rad), skeleton order.
    pub sigma: Vec<f64>,
    /// Unit camera depth direction.
    pub depth_axis: Vec3,
    /// Std multiplier for the noise component along `depth_axis`.
    pub depth_gain: f64,
    /// Flicker std relative to the joint sigma, before differencing.
    pub jitter_gain: f64,
    /// Base std of the root translation noise (m), scaled along the
    /// depth axis like the rotations.
    #[serde(default)]
    pub root_sigma: f64,
    pub seed: u64,
}

/// Per-joint base sigmas of the built-in profile. Neck, head and collars
/// sit between the trunk and the limbs.
const REALISTIC_SIGMA: [(&str, f64); NUM_JOINTS] = [
    ("pelvis", 0.02),
    ("left_hip", 0.04),
    ("right_hip", 0.04),
    ("spine1", 0.03),
    ("left_knee", 0.05),
    ("right_knee", 0.05),
    ("spine2", 0.03),
    ("left_ankle", 0.06),
    ("right_ankle", 0.06),
    ("spine3", 0.03),
    ("left_foot", 0.06),
    ("right_foot", 0.06),
    ("neck", 0.03),
    ("left_collar", 0.04),
    ("right_collar", 0.04),
    ("head", 0.04),
    ("left_shoulder", 0.05),
    ("right_shoulder", 0.05),
    ("left_elbow", 0.05),
    ("right_elbow", 0.05),
    ("left_wrist", 0.07),
    ("right_wrist", 0.07),
    ("left_hand", 0.07),
    ("right_hand", 0.07),
];

pub const ROOT_SIGMA: f64 = 0.01;

pub fn realistic_profile() -> NoiseProfile {
    let mut sigma = vec![0.0; NUM_JOINTS];
    for (name, s) in REALISTIC_SIGMA {
        sigma[joint_index(name).expect("built-in joint")] = s;
    }
    NoiseProfile {
        sigma,
        depth_axis: Vec3::new(0.0, 0.0, 1.0),
        depth_gain: 2.0,
        jitter_gain: 0.5,
        root_sigma: ROOT_SIGMA,
        seed: 42,
    }
}

impl Default for NoiseProfile {
    fn default() -> Self {
        realistic_profile()
    }
}

impl NoiseProfile {
    pub fn validate(&self) -> Result<()> {
        if self.sigma.len() != NUM_JOINTS {
            return Err(Error::Config(format!("profile needs {NUM_JOINTS} sigmas, got {}", self.sigma.len())));
        }
        if let Some((j, s)) = self.sigma.iter().enumerate().find(|(_, s)| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::Config(format!("sigma of joint {j} must be non-negative, got {s}")));
        }
        if (self.depth_axis.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("depth_axis must be a unit vector".into()));
        }
        if !(self.depth_gain.is_finite() && self.depth_gain >= 1.0) {
            return Err(Error::Config(format!("depth_gain must be at least 1, got {}", self.depth_gain)));
        }
        if !(self.root_sigma.is_finite() && self.root_sigma >= 0.0) {
            return Err(Error::Config(format!("root_sigma must be non-negative, got {}", self.root_sigma)));
        }
        if !(self.jitter_gain.is_finite() && self.jitter_gain >= 0.0) {
            return Err(Error::Config(format!("jitter_gain must be non-negative, got {}", self.jitter_gain)));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let p: NoiseProfile = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    /// Stationary variance of axis `axis` (0..3) of joint `joint`.
    pub fn channel_variance(&self, joint: usize, axis: usize) -> f64 {
        let d = self.depth_axis[axis];
        let s2 = self.sigma[joint].powi(2);
        // depth scaling maps n to n + (g-1)(n.d)d; the jitter is half a
        // first difference of white noise
        let along = 1.0 + (self.depth_gain.powi(2) - 1.0) * d * d;
        s2 * (along + 0.5 * self.jitter_gain.powi(2))
    }

    /// Mean variance over all 72 channels.
    pub fn mean_variance(&self) -> f64 {
        let total: f64 = (0..NUM_JOINTS)
            .flat_map(|j| (0..3).map(move |a| (j, a)))
            .map(|(j, a)| self.channel_variance(j, a))
            .sum();
        total / (3 * NUM_JOINTS) as f64
    }

    /// Uniform sigma with the same mean channel variance.
    pub fn matched_uniform_sigma(&self) -> f64 {
        self.mean_variance().sqrt()
    }
}

/// Applies `profile` with its own seed.
pub fn add_realistic_noise(motion: &MotionSequence, profile: &NoiseProfile) -> Result<MotionSequence> {
    add_realistic_noise_seeded(motion, profile, profile.seed)
}

/// Applies `profile` with an explicit seed.
pub fn add_realistic_noise_seeded(motion: &MotionSequence, profile: &NoiseProfile, seed: u64) -> Result<MotionSequence> {
    profile.validate()?;
    let mut rng = rng(seed);
    let n = motion.len();
    let d = profile.depth_axis;
    let mut white = Vec::with_capacity(n);
    let mut flicker = Vec::with_capacity(n + 1);
    for _ in 0..n {
        white.push((0..NUM_JOINTS).map(|_| normal3(&mut rng)).collect::<Vec<_>>());
    }
    for _ in 0..=n {
        flicker.push((0..NUM_JOINTS).map(|_| normal3(&mut rng)).collect::<Vec<_>>());
    }
    let root_white: Vec<Vec3> = (0..n).map(|_| normal3(&mut rng)).collect();
    let root_flicker: Vec<Vec3> = (0..=n).map(|_| normal3(&mut rng)).collect();
    let shaped = |w: Vec3, prev: Vec3, next: Vec3| {
        let aniso = w + d.scale((profile.depth_gain - 1.0) * w.dot(d));
        // white noise minus its two-frame moving average
        aniso + (next - prev).scale(0.5 * profile.jitter_gain)
    };
    let mut out = motion.clone();
    for (t, f) in out.frames.iter_mut().enumerate() {
        for j in 0..NUM_JOINTS {
            f.rotations[j] += shaped(white[t][j], flicker[t][j], flicker[t + 1][j]).scale(profile.sigma[j]);
        }
        f.root_trans += shaped(root_white[t], root_flicker[t], root_flicker[t + 1]).scale(profile.root_sigma);
    }
    Ok(out)
}
