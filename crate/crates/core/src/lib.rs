//! Differentiable inverse dynamics for the SMPL joint tree.
//!
//! The pipeline is pose sequence -> forward kinematics -> central finite
//! differences -> recursive Newton-Euler, producing per-joint net forces
//! and torques. Every stage is generic over [`scalar::Scalar`], so the
//! same code also runs on the reverse-mode tape in [`ad`], which is what
//! gradient-based pose refinement uses.

pub mod ad;
pub mod analysis;
pub mod derivatives;
pub mod error;
pub mod filtering;
pub mod motion;
pub mod noise;
pub mod pipeline;
pub mod refinement;
pub mod rnea;
pub mod rotations;
pub mod scalar;
pub mod segments;
pub mod skeleton;

pub use error::{Error, Result};
