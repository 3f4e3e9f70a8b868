//! Pose sequence to joint torques in one call.

use crate::derivatives::{kinematics_from_poses, BOUNDARY_FRAMES};
use crate::error::Result;
use crate::motion::MotionSequence;
use crate::rnea::{inverse_dynamics, per_joint_torque_error, torque_error, DynamicsMode, DynamicsResult};
use crate::rotations::Vec3;
use crate::scalar::Scalar;
use crate::segments::{build_segment_params, BspTable, SegmentModel};
use crate::skeleton::{default_skeleton, Skeleton, DEFAULT_MASS, TEMPLATE_HEIGHT};

/// A body model plus the dynamics convention used to evaluate it.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub skeleton: Skeleton,
    pub model: SegmentModel,
    pub mode: DynamicsMode,
}

impl Default for Pipeline {
    fn default() -> Self {
        Pipeline::with_body(DEFAULT_MASS, TEMPLATE_HEIGHT, DynamicsMode::default()).expect("default body is valid")
    }
}

impl Pipeline {
    pub fn new(skeleton: Skeleton, table: &BspTable, mode: DynamicsMode) -> Result<Self> {
        let model = build_segment_params(&skeleton, table)?;
        Ok(Pipeline { skeleton, model, mode })
    }

    /// The template skeleton scaled to `height` with the default segment table.
    pub fn with_body(mass: f64, height: f64, mode: DynamicsMode) -> Result<Self> {
        Pipeline::new(default_skeleton(mass, height)?, &BspTable::default(), mode)
    }

    pub fn dynamics(&self, motion: &MotionSequence) -> Result<DynamicsResult> {
        motion.validate()?;
        let rot: Vec<Vec<Vec3>> = motion.frames.iter().map(|f| f.rotations.clone()).collect();
        let trans: Vec<Vec3> = motion.frames.iter().map(|f| f.root_trans).collect();
        self.dynamics_generic(&rot, &trans, motion.dt())
    }

    pub fn dynamics_generic<T: Scalar>(
        &self,
        rotations: &[Vec<Vec3<T>>],
        trans: &[Vec3<T>],
        dt: f64,
    ) -> Result<DynamicsResult<T>> {
        let kin = kinematics_from_poses(&self.skeleton, rotations, trans, dt)?;
        inverse_dynamics(&self.skeleton, &self.model, &kin, self.mode)
    }

    /// Mean torque error of `motion` against reference torques, interior
    /// frames only.
    pub fn torque_error(&self, motion: &MotionSequence, reference: &DynamicsResult) -> Result<f64> {
        torque_error(&self.dynamics(motion)?, reference, BOUNDARY_FRAMES)
    }

    /// Per-joint torque error of `motion` against reference torques.
    pub fn per_joint_error(&self, motion: &MotionSequence, reference: &DynamicsResult) -> Result<Vec<f64>> {
        per_joint_torque_error(&self.dynamics(motion)?, reference, BOUNDARY_FRAMES)
    }
}
