//! Recursive Newton-Euler inverse dynamics over the joint tree.
//!
//! Wrenches are accumulated from the leaves to the root. In
//! [`DynamicsMode::JointMass`] each segment's mass sits at its joint:
//!
//! ```text
//! f_i = m_i p̈_i - m_i g + Σ_{j∈ch(i)} f_j
//! τ_i = I_i α_i + ω_i × (I_i ω_i) + Σ_{j∈ch(i)} (τ_j + r_j × f_j)
//! ```
//!
//! with `r_j = p_j - p_i`. [`DynamicsMode::ComCorrected`] uses the CoM
//! acceleration in the force term and adds the moment of the segment's own
//! inertial and gravity force about the joint. All quantities are in the
//! world frame.

use std::fmt::Write as _;

use crate::derivatives::{linear_derivatives, KinematicState, Series};
use crate::error::{Error, Result};
use crate::rotations::Vec3;
use crate::scalar::Scalar;
use crate::segments::SegmentModel;
use crate::skeleton::{Skeleton, GRAVITY};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DynamicsMode {
    #[default]
    JointMass,
    ComCorrected,
}

impl std::str::FromStr for DynamicsMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" | "joint-mass" => Ok(DynamicsMode::JointMass),
            "com" | "com-corrected" => Ok(DynamicsMode::ComCorrected),
            _ => Err(Error::invalid(format!("unknown dynamics mode '{s}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DynamicsResult<T = f64> {
    pub force: Series<Vec3<T>>,
    pub torque: Series<Vec3<T>>,
}

impl<T: Scalar> DynamicsResult<T> {
    pub fn frames(&self) -> usize {
        self.torque.len()
    }

    pub fn joints(&self) -> usize {
        self.torque.first().map_or(0, |f| f.len())
    }

    pub fn values(&self) -> DynamicsResult<f64> {
        let conv = |s: &Series<Vec3<T>>| s.iter().map(|f| f.iter().map(|v| v.values()).collect()).collect();
        DynamicsResult {
            force: conv(&self.force),
            torque: conv(&self.torque),
        }
    }
}

impl DynamicsResult<f64> {
    /// CSV with header `frame,joint_name,fx,fy,fz,tx,ty,tz` for frames
    /// `exclude..T-exclude`.
    pub fn to_csv(&self, joint_names: &[String], exclude: usize) -> String {
        let mut out = String::from("frame,joint_name,fx,fy,fz,tx,ty,tz\n");
        let n = self.frames();
        for t in exclude..n.saturating_sub(exclude) {
            for (j, name) in joint_names.iter().enumerate() {
                let f = self.force[t][j];
                let tq = self.torque[t][j];
                let _ = writeln!(out, "{t},{name},{},{},{},{},{},{}", f.x, f.y, f.z, tq.x, tq.y, tq.z);
            }
        }
        out
    }
}

/// Net force and torque at every joint of every frame under standard gravity.
pub fn inverse_dynamics<T: Scalar>(
    skel: &Skeleton,
    model: &SegmentModel,
    kin: &KinematicState<T>,
    mode: DynamicsMode,
) -> Result<DynamicsResult<T>> {
    inverse_dynamics_in_field(skel, model, kin, mode, GRAVITY)
}

/// [`inverse_dynamics`] with an explicit gravity vector.
pub fn inverse_dynamics_in_field<T: Scalar>(
    skel: &Skeleton,
    model: &SegmentModel,
    kin: &KinematicState<T>,
    mode: DynamicsMode,
    gravity: Vec3,
) -> Result<DynamicsResult<T>> {
    let n = skel.len();
    if model.params.len() != n || kin.joints() != n {
        return Err(Error::invalid(format!(
            "dimension mismatch: skeleton {n} joints, segment model {}, kinematics {}",
            model.params.len(),
            kin.joints()
        )));
    }
    let frames = kin.frames();
    let com_acc = match mode {
        DynamicsMode::JointMass => None,
        DynamicsMode::ComCorrected => {
            let com: Series<Vec3<T>> = (0..frames)
                .map(|t| {
                    (0..n)
                        .map(|i| kin.pos[t][i] + kin.rot[t][i].mul_vec_f(model.params[i].com_offset))
                        .collect()
                })
                .collect();
            Some(linear_derivatives(&com, kin.dt)?.1)
        }
    };

    let g = gravity;
    let mut force = Vec::with_capacity(frames);
    let mut torque = Vec::with_capacity(frames);
    for t in 0..frames {
        let mut f: Vec<Vec3<T>> = Vec::with_capacity(n);
        let mut tau: Vec<Vec3<T>> = Vec::with_capacity(n);
        for i in 0..n {
            let p = &model.params[i];
            let r = &kin.rot[t][i];
            let acc = match &com_acc {
                Some(c) => c[t][i],
                None => kin.acc[t][i],
            };
            let own_force = if p.mass == 0.0 {
                Vec3::zero()
            } else {
                (acc - Vec3::splat_cst(g)).scale_f(p.mass)
            };
            let d = p.inertia_diag;
            let mut own_torque = if d == Vec3::zero() {
                Vec3::zero()
            } else {
                // I_w α + ω × (I_w ω) evaluated in the local frame, then rotated
                let w_l = r.tr_mul_vec(kin.ang_vel[t][i]);
                let a_l = r.tr_mul_vec(kin.ang_acc[t][i]);
                r.mul_vec(a_l.hadamard_f(d) + w_l.cross(w_l.hadamard_f(d)))
            };
            if com_acc.is_some() && p.mass != 0.0 {
                own_torque += r.mul_vec_f(p.com_offset).cross(own_force);
            }
            f.push(own_force);
            tau.push(own_torque);
        }
        for i in (1..n).rev() {
            let par = skel.parent[i].expect("non-root joints have parents");
            let r = kin.pos[t][i] - kin.pos[t][par];
            let (fi, ti) = (f[i], tau[i]);
            tau[par] += ti + r.cross(fi);
            f[par] += fi;
        }
        force.push(f);
        torque.push(tau);
    }
    Ok(DynamicsResult { force, torque })
}

/// Mean over frames `exclude..T-exclude` of the per-joint torque-difference
/// norms, one value per joint.
pub fn per_joint_torque_error<T: Scalar>(
    result: &DynamicsResult<T>,
    reference: &DynamicsResult<f64>,
    exclude: usize,
) -> Result<Vec<T>> {
    let (n_frames, n_joints) = (result.frames(), result.joints());
    if reference.frames() != n_frames || reference.joints() != n_joints {
        return Err(Error::invalid(format!(
            "torque fields differ in shape: {n_frames}x{n_joints} vs {}x{}",
            reference.frames(),
            reference.joints()
        )));
    }
    if n_frames <= 2 * exclude {
        return Err(Error::SequenceTooShort {
            needed: 2 * exclude + 1,
            got: n_frames,
        });
    }
    let count = (n_frames - 2 * exclude) as f64;
    let mut out = vec![T::zero(); n_joints];
    for t in exclude..n_frames - exclude {
        for (j, acc) in out.iter_mut().enumerate() {
            *acc += (result.torque[t][j] - Vec3::splat_cst(reference.torque[t][j])).norm();
        }
    }
    Ok(out.into_iter().map(|s| s / count).collect())
}

/// Mean L2 torque deviation over interior frames and all joints (Nm).
pub fn torque_error<T: Scalar>(
    result: &DynamicsResult<T>,
    reference: &DynamicsResult<f64>,
    exclude: usize,
) -> Result<T> {
    let per_joint = per_joint_torque_error(result, reference, exclude)?;
    let n = per_joint.len() as f64;
    let sum = per_joint.into_iter().fold(T::zero(), |a, b| a + b);
    Ok(sum / n)
}
