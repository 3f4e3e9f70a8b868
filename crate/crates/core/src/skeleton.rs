//! The 24-joint SMPL kinematic tree and forward kinematics.
//!
//! Coordinates are Y-up and right-handed, the body faces +Z and its left
//! side is +X. The template below approximates the SMPL mean rest skeleton
//! (T-pose) of a 1.75 m adult; it is not SMPL's exact joint regressor output,
//! so absolute torque values are only meaningful in order of magnitude.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rotations::{exp_so3, AxisAngle, Mat3, Vec3};
use crate::scalar::Scalar;

pub const NUM_JOINTS: usize = 24;
pub const TEMPLATE_HEIGHT: f64 = 1.75;
pub const DEFAULT_MASS: f64 = 75.0;

/// Gravity in the Y-up world frame (m/s²).
pub const GRAVITY: Vec3 = Vec3 {
    x: 0.0,
    y: -9.81,
    z: 0.0,
};

pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hand",
    "right_hand",
];

pub const SMPL_PARENTS: [Option<usize>; NUM_JOINTS] = [
    None,
    Some(0),
    Some(0),
    Some(0),
    Some(1),
    Some(2),
    Some(3),
    Some(4),
    Some(5),
    Some(6),
    Some(7),
    Some(8),
    Some(9),
    Some(9),
    Some(9),
    Some(12),
    Some(13),
    Some(14),
    Some(16),
    Some(17),
    Some(18),
    Some(19),
    Some(20),
    Some(21),
];

/// Pelvis position above the ground at zero pose for the 1.75 m template.
const TEMPLATE_ROOT: [f64; 3] = [0.0, 0.93, 0.0];

/// Rest-pose bone vectors (child position in the parent frame), metres.
const TEMPLATE_OFFSETS: [[f64; 3]; NUM_JOINTS] = [
    [0.0, 0.0, 0.0],
    [0.09, -0.08, -0.01],
    [-0.09, -0.08, -0.01],
    [0.0, 0.11, -0.02],
    [0.01, -0.38, 0.0],
    [-0.01, -0.38, 0.0],
    [0.0, 0.13, 0.01],
    [-0.01, -0.40, -0.04],
    [0.01, -0.40, -0.04],
    [0.0, 0.06, 0.02],
    [0.03, -0.06, 0.12],
    [-0.03, -0.06, 0.12],
    [0.0, 0.21, -0.03],
    [0.07, 0.12, -0.01],
    [-0.07, 0.12, -0.01],
    [0.0, 0.09, 0.05],
    [0.11, 0.03, -0.01],
    [-0.11, 0.03, -0.01],
    [0.26, -0.01, -0.02],
    [-0.26, -0.01, -0.02],
    [0.25, 0.01, 0.0],
    [-0.25, 0.01, 0.0],
    [0.08, -0.01, -0.01],
    [-0.08, -0.01, -0.01],
];

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

/// Joint index by SMPL name.
pub fn joint_index(name: &str) -> Option<usize> {
    JOINT_NAMES.iter().position(|&n| n == name)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Skeleton {
    pub joint_names: Vec<String>,
    pub parent: Vec<Option<usize>>,
    pub offset: Vec<Vec3>,
    /// World position of the root joint at zero pose and zero translation.
    pub root_position: Vec3,
    pub total_mass: f64,
    pub total_height: f64,
}

/// The SMPL template scaled to `total_height`.
pub fn default_skeleton(total_mass: f64, total_height: f64) -> Result<Skeleton> {
    if !(total_mass > 0.0 && total_mass.is_finite()) {
        return Err(Error::invalid(format!("total mass must be positive, got {total_mass}")));
    }
    if !(total_height > 0.0 && total_height.is_finite()) {
        return Err(Error::invalid(format!(
            "total height must be positive, got {total_height}"
        )));
    }
    let scale = total_height / TEMPLATE_HEIGHT;
    Ok(Skeleton {
        joint_names: JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
        parent: SMPL_PARENTS.to_vec(),
        offset: TEMPLATE_OFFSETS.iter().map(|&o| v3(o).scale_f(scale)).collect(),
        root_position: v3(TEMPLATE_ROOT).scale_f(scale),
        total_mass,
        total_height,
    })
}

impl Default for Skeleton {
    fn default() -> Self {
        default_skeleton(DEFAULT_MASS, TEMPLATE_HEIGHT).expect("default template is valid")
    }
}

impl Skeleton {
    /// Builds a skeleton from raw parts, validating the tree invariants.
    pub fn new(
        joint_names: Vec<String>,
        parent: Vec<Option<usize>>,
        offset: Vec<Vec3>,
        root_position: Vec3,
        total_mass: f64,
        total_height: f64,
    ) -> Result<Self> {
        let s = Skeleton {
            joint_names,
            parent,
            offset,
            root_position,
            total_mass,
            total_height,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.parent.len();
        if n == 0 {
            return Err(Error::invalid("skeleton has no joints"));
        }
        if self.joint_names.len() != n || self.offset.len() != n {
            return Err(Error::invalid(format!(
                "skeleton arrays disagree: {} names, {} parents, {} offsets",
                self.joint_names.len(),
                n,
                self.offset.len()
            )));
        }
        if self.parent[0].is_some() {
            return Err(Error::invalid("joint 0 must be the root"));
        }
        for (i, p) in self.parent.iter().enumerate().skip(1) {
            match p {
                Some(p) if *p < i => {}
                _ => {
                    return Err(Error::invalid(format!(
                        "joint {i} ({}) must have a parent with a smaller index",
                        self.joint_names[i]
                    )))
                }
            }
        }
        if !self.offset.iter().all(|o| o.is_finite()) || !self.root_position.is_finite() {
            return Err(Error::invalid("skeleton offsets must be finite"));
        }
        if !(self.total_mass > 0.0 && self.total_mass.is_finite()) {
            return Err(Error::invalid("total mass must be positive"));
        }
        if !(self.total_height > 0.0 && self.total_height.is_finite()) {
            return Err(Error::invalid("total height must be positive"));
        }
        Ok(())
    }

    pub fn children(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.parent
            .iter()
            .enumerate()
            .filter(move |(_, p)| **p == Some(i))
            .map(|(j, _)| j)
    }

    /// Every joint in the subtree rooted at `i`, including `i`.
    pub fn subtree(&self, i: usize) -> Vec<usize> {
        let mut inside = vec![false; self.len()];
        inside[i] = true;
        // parent[j] < j, so one forward sweep suffices
        for j in i + 1..self.len() {
            if let Some(p) = self.parent[j] {
                inside[j] = inside[p];
            }
        }
        (0..self.len()).filter(|&j| inside[j]).collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: SkeletonFile = serde_json::from_str(text).map_err(|e| Error::Parse(format!("skeleton: {e}")))?;
        let parent = f
            .parents
            .iter()
            .map(|&p| if p < 0 { None } else { Some(p as usize) })
            .collect();
        Skeleton::new(f.joint_names, parent, f.offsets, f.root_position, f.total_mass, f.total_height)
    }

    pub fn to_json(&self) -> String {
        let f = SkeletonFile {
            joint_names: self.joint_names.clone(),
            parents: self.parent.iter().map(|p| p.map_or(-1, |p| p as i64)).collect(),
            offsets: self.offset.clone(),
            root_position: self.root_position,
            total_mass: self.total_mass,
            total_height: self.total_height,
        };
        serde_json::to_string_pretty(&f).expect("skeleton serializes")
    }
}

/// On-disk skeleton document. The root's parent is written as -1.
#[derive(Serialize, Deserialize)]
struct SkeletonFile {
    joint_names: Vec<String>,
    parents: Vec<i64>,
    offsets: Vec<Vec3>,
    root_position: Vec3,
    total_mass: f64,
    total_height: f64,
}

/// One frame of pose parameters. `rotations[0]` is the root orientation,
/// the rest are joint rotations relative to the parent.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    pub rotations: Vec<AxisAngle>,
    pub root_trans: Vec3,
}

impl Pose {
    pub fn zero(n_joints: usize) -> Self {
        Pose {
            rotations: vec![Vec3::zero(); n_joints],
            root_trans: Vec3::zero(),
        }
    }

    pub fn root_orient(&self) -> AxisAngle {
        self.rotations[0]
    }

    pub fn body(&self) -> &[AxisAngle] {
        &self.rotations[1..]
    }

    pub fn is_finite(&self) -> bool {
        self.root_trans.is_finite() && self.rotations.iter().all(|r| r.is_finite())
    }
}

#[derive(Clone, Debug)]
pub struct FrameKinematics<T = f64> {
    pub world_pos: Vec<Vec3<T>>,
    pub world_rot: Vec<Mat3<T>>,
}

/// Forward kinematics over any scalar type.
pub fn forward_kinematics_generic<T: Scalar>(
    skel: &Skeleton,
    rotations: &[Vec3<T>],
    root_trans: Vec3<T>,
) -> FrameKinematics<T> {
    let n = skel.len();
    let mut world_pos = Vec::with_capacity(n);
    let mut world_rot: Vec<Mat3<T>> = Vec::with_capacity(n);
    for i in 0..n {
        let local = exp_so3(rotations[i]);
        match skel.parent[i] {
            None => {
                world_rot.push(local);
                world_pos.push(root_trans + Vec3::splat_cst(skel.root_position));
            }
            Some(p) => {
                let pos = world_pos[p] + world_rot[p].mul_vec_f(skel.offset[i]);
                world_rot.push(world_rot[p].matmul(&local));
                world_pos.push(pos);
            }
        }
    }
    FrameKinematics { world_pos, world_rot }
}

/// World joint positions and rotations for one pose.
pub fn forward_kinematics(skel: &Skeleton, pose: &Pose) -> Result<FrameKinematics> {
    if pose.rotations.len() != skel.len() {
        return Err(Error::invalid(format!(
            "pose has {} rotations, skeleton has {} joints",
            pose.rotations.len(),
            skel.len()
        )));
    }
    if !pose.is_finite() {
        return Err(Error::invalid("pose contains non-finite values"));
    }
    Ok(forward_kinematics_generic(skel, &pose.rotations, pose.root_trans))
}
