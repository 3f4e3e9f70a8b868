//! Gradient-based pose refinement against a physics loss.
//!
//! For pose parameters `θ̂` (all rotations and the root translation of
//! every frame) and the noisy estimate `θ` it starts from,
//!
//! ```text
//! L = λs · mean ‖τ(t+1) − 2τ(t) + τ(t−1)‖
//!   + λm · mean max(‖τ(t)‖ − τmax, 0)
//!   + λr · mean ‖θ̂ − θ‖
//! ```
//!
//! The torque terms average over interior frames and all joints. The
//! regularizer averages the per-joint axis-angle distance over all frames,
//! with the root translation counted as one more entry per frame. The
//! gradient comes from one reverse sweep of the tape, and Adam takes the
//! step.

use serde::{Deserialize, Serialize};

use crate::ad::{Tape, Var};
use crate::derivatives::BOUNDARY_FRAMES;
use crate::error::{Error, Result};
use crate::filtering::{filter_tracks, FilterSpec};
use crate::motion::{pose_error_mean_norm, pose_error_rms, MotionSequence, CHANNELS_PER_FRAME};
use crate::pipeline::Pipeline;
use crate::rnea::{torque_error, DynamicsResult};
use crate::rotations::Vec3;
use crate::scalar::Scalar;
use crate::skeleton::{joint_index, NUM_JOINTS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefinementConfig {
    pub lambda_smooth: f64,
    pub lambda_magnitude: f64,
    pub lambda_reg: f64,
    /// Torque norm above which the magnitude penalty applies (Nm).
    pub tau_max: f64,
    pub iterations: usize,
    pub step_size: f64,
    pub schedule: StepSchedule,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Keep the root translation fixed at its noisy value.
    pub freeze_translation: bool,
    /// Low-pass the parameters inside the differentiable path.
    pub filter_cutoff_hz: Option<f64>,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            lambda_smooth: 10.0,
            lambda_magnitude: 1.0,
            lambda_reg: 5.0,
            tau_max: 100.0,
            iterations: 200,
            step_size: 0.01,
            schedule: StepSchedule::Constant,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            freeze_translation: false,
            filter_cutoff_hz: None,
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("lambda_smooth", self.lambda_smooth),
            ("lambda_magnitude", self.lambda_magnitude),
            ("lambda_reg", self.lambda_reg),
            ("tau_max", self.tau_max),
        ];
        for (name, w) in weights {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Config(format!("{name} must be non-negative, got {w}")));
            }
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::Config(format!("step_size must be positive, got {}", self.step_size)));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::Config("moment decay rates must lie in [0, 1)".into()));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Step size as a function of progress through the iterations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepSchedule {
    #[default]
    Constant,
    /// Half a cosine from the full step size down to zero.
    Cosine,
}

impl StepSchedule {
    /// Multiplier for update `k` of `n` (k counts from 0).
    pub fn factor(self, k: usize, n: usize) -> f64 {
        match self {
            StepSchedule::Constant => 1.0,
            StepSchedule::Cosine => 0.5 * (1.0 + (std::f64::consts::PI * k as f64 / n as f64).cos()),
        }
    }
}

impl std::str::FromStr for StepSchedule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(StepSchedule::Constant),
            "cosine" => Ok(StepSchedule::Cosine),
            _ => Err(Error::Config(format!("unknown step schedule '{s}' (constant|cosine)"))),
        }
    }
}

/// The three weighted loss terms and their sum.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms<T> {
    pub smoothness: T,
    pub magnitude: T,
    pub regularizer: T,
    pub total: T,
}

impl<T: Scalar> LossTerms<T> {
    pub fn values(&self) -> LossTerms<f64> {
        LossTerms {
            smoothness: self.smoothness.value(),
            magnitude: self.magnitude.value(),
            regularizer: self.regularizer.value(),
            total: self.total.value(),
        }
    }
}

fn unflatten<T: Scalar>(params: &[T]) -> (Vec<Vec<Vec3<T>>>, Vec<Vec3<T>>) {
    let v3 = |c: &[T], i: usize| Vec3::new(c[i], c[i + 1], c[i + 2]);
    let rot = params
        .chunks(CHANNELS_PER_FRAME)
        .map(|c| (0..NUM_JOINTS).map(|j| v3(c, 3 * j)).collect())
        .collect();
    let trans = params.chunks(CHANNELS_PER_FRAME).map(|c| v3(c, 3 * NUM_JOINTS)).collect();
    (rot, trans)
}

/// Torques for a flat parameter vector (layout of [`MotionSequence::to_params`]).
pub fn dynamics_of_params<T: Scalar>(
    pipeline: &Pipeline,
    params: &[T],
    fps: f64,
    filter: Option<&FilterSpec>,
) -> Result<DynamicsResult<T>> {
    if params.is_empty() || !params.len().is_multiple_of(CHANNELS_PER_FRAME) {
        return Err(Error::invalid(format!(
            "parameter count {} is not a positive multiple of {CHANNELS_PER_FRAME}",
            params.len()
        )));
    }
    let (rot, trans) = unflatten(params);
    match filter {
        Some(spec) => {
            let (rot, trans) = filter_tracks(&rot, &trans, spec)?;
            pipeline.dynamics_generic(&rot, &trans, 1.0 / fps)
        }
        None => pipeline.dynamics_generic(&rot, &trans, 1.0 / fps),
    }
}

/// The refinement loss at `params`, anchored at `noisy`.
pub fn physics_loss<T: Scalar>(
    pipeline: &Pipeline,
    params: &[T],
    noisy: &[f64],
    fps: f64,
    config: &RefinementConfig,
) -> Result<LossTerms<T>> {
    if params.len() != noisy.len() {
        return Err(Error::invalid(format!(
            "parameter vectors differ in length: {} vs {}",
            params.len(),
            noisy.len()
        )));
    }
    let spec = config.filter_cutoff_hz.map(|c| FilterSpec::new(c, fps)).transpose()?;
    let dynamics = dynamics_of_params(pipeline, params, fps, spec.as_ref())?;
    let tau = &dynamics.torque;
    let n = tau.len();
    if n <= 2 * BOUNDARY_FRAMES {
        return Err(Error::SequenceTooShort {
            needed: 2 * BOUNDARY_FRAMES + 1,
            got: n,
        });
    }
    let mut smooth = T::zero();
    let mut magnitude = T::zero();
    for t in BOUNDARY_FRAMES..n - BOUNDARY_FRAMES {
        for j in 0..tau[t].len() {
            smooth += (tau[t + 1][j] - tau[t][j].scale_f(2.0) + tau[t - 1][j]).norm();
            magnitude += (tau[t][j].norm() - config.tau_max).relu();
        }
    }
    let count = ((n - 2 * BOUNDARY_FRAMES) * tau[0].len()) as f64;
    let mut reg = T::zero();
    for (p, q) in params.chunks(3).zip(noisy.chunks(3)) {
        reg += T::norm3(p[0] - q[0], p[1] - q[1], p[2] - q[2]);
    }
    let entries = (params.len() / 3) as f64;
    let smoothness = smooth / count * config.lambda_smooth;
    let magnitude = magnitude / count * config.lambda_magnitude;
    let regularizer = reg / entries * config.lambda_reg;
    Ok(LossTerms {
        smoothness,
        magnitude,
        regularizer,
        total: smoothness + magnitude + regularizer,
    })
}

/// Loss value and gradient with respect to every parameter.
pub fn loss_and_gradient(
    pipeline: &Pipeline,
    params: &[f64],
    noisy: &[f64],
    fps: f64,
    config: &RefinementConfig,
    tape: &mut Tape,
) -> Result<(f64, Vec<f64>)> {
    tape.clear();
    let vars = tape.vars(params);
    let loss: Var = physics_loss(pipeline, &vars, noisy, fps, config)?.total;
    let grads = tape.backward(loss)?;
    Ok((loss.value(), grads.wrt_all(&vars)))
}

/// Adam with bias-corrected moments.
#[derive(Clone, Debug)]
pub struct Adam {
    step_size: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, step_size: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Adam {
            step_size,
            beta1,
            beta2,
            epsilon,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step_scaled(params, grad, 1.0);
    }

    /// One update with the step size multiplied by `scale`.
    pub fn step_scaled(&mut self, params: &mut [f64], grad: &[f64], scale: f64) {
        let step_size = self.step_size * scale;
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= step_size * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Loss after each update; `loss[0]` is the loss at the starting point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrace {
    pub loss: Vec<f64>,
}

/// Runs Adam from the noisy motion for `config.iterations` steps.
pub fn refine(pipeline: &Pipeline, noisy: &MotionSequence, config: &RefinementConfig) -> Result<(MotionSequence, RefinementTrace)> {
    config.validate()?;
    noisy.validate()?;
    if noisy.len() < 5 {
        return Err(Error::SequenceTooShort {
            needed: 5,
            got: noisy.len(),
        });
    }
    let anchor = noisy.to_params();
    let mut params = anchor.clone();
    let mut adam = Adam::new(params.len(), config.step_size, config.beta1, config.beta2, config.epsilon);
    let mut tape = Tape::new();
    let mut loss = Vec::with_capacity(config.iterations + 1);
    for iteration in 0..=config.iterations {
        let (value, mut grad) = loss_and_gradient(pipeline, &params, &anchor, noisy.fps, config, &mut tape)?;
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { iteration, loss: value });
        }
        loss.push(value);
        if iteration == config.iterations {
            break;
        }
        if config.freeze_translation {
            for frame in grad.chunks_mut(CHANNELS_PER_FRAME) {
                frame[3 * NUM_JOINTS..].fill(0.0);
            }
        }
        adam.step_scaled(&mut params, &grad, config.schedule.factor(iteration, config.iterations));
    }
    Ok((MotionSequence::from_params(noisy.fps, &params)?, RefinementTrace { loss }))
}

/// Norm of one joint's torque in every frame.
pub fn torque_norm_track(d: &DynamicsResult, joint: usize) -> Vec<f64> {
    d.torque.iter().map(|f| f[joint].norm()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HipTrajectories {
    pub joint: String,
    pub clean: Vec<f64>,
    pub noisy: Vec<f64>,
    pub refined: Vec<f64>,
}

/// Errors of the noisy and refined motions against the clean one, plus
/// the optimization history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub config: RefinementConfig,
    pub iterations: usize,
    pub loss: Vec<f64>,
    pub torque_error_initial_nm: f64,
    pub torque_error_final_nm: f64,
    pub torque_reduction_pct: f64,
    /// RMS over rotation channels (rad).
    pub pose_error_initial_rad: f64,
    pub pose_error_final_rad: f64,
    pub pose_error_change_pct: f64,
    /// Mean per-joint axis-angle distance (rad).
    pub pose_error_mean_norm_initial_rad: f64,
    pub pose_error_mean_norm_final_rad: f64,
    pub left_hip_torque: HipTrajectories,
}

impl RefinementReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// RMS deviation of the refined hip torque norm from the clean one,
    /// relative to the RMS of the clean track (interior frames).
    pub fn hip_tracking_ratio(&self) -> f64 {
        let h = &self.left_hip_torque;
        let range = BOUNDARY_FRAMES..h.clean.len() - BOUNDARY_FRAMES;
        let dev: f64 = range.clone().map(|t| (h.refined[t] - h.clean[t]).powi(2)).sum();
        let base: f64 = range.map(|t| h.clean[t].powi(2)).sum();
        (dev / base).sqrt()
    }
}

/// Refines `noisy` and scores it against `clean`.
pub fn refine_and_evaluate(
    pipeline: &Pipeline,
    clean: &MotionSequence,
    noisy: &MotionSequence,
    config: &RefinementConfig,
) -> Result<(MotionSequence, RefinementReport)> {
    if clean.len() != noisy.len() {
        return Err(Error::invalid("clean and noisy motions differ in length"));
    }
    let (refined, trace) = refine(pipeline, noisy, config)?;
    let d_clean = pipeline.dynamics(clean)?;
    let d_noisy = pipeline.dynamics(noisy)?;
    let d_refined = pipeline.dynamics(&refined)?;
    let te0 = torque_error(&d_noisy, &d_clean, BOUNDARY_FRAMES)?;
    let te1 = torque_error(&d_refined, &d_clean, BOUNDARY_FRAMES)?;
    let pe0 = pose_error_rms(noisy, clean, BOUNDARY_FRAMES)?;
    let pe1 = pose_error_rms(&refined, clean, BOUNDARY_FRAMES)?;
    let hip = joint_index("left_hip").expect("built-in joint");
    let report = RefinementReport {
        config: config.clone(),
        iterations: config.iterations,
        loss: trace.loss,
        torque_error_initial_nm: te0,
        torque_error_final_nm: te1,
        torque_reduction_pct: 100.0 * (te0 - te1) / te0,
        pose_error_initial_rad: pe0,
        pose_error_final_rad: pe1,
        pose_error_change_pct: 100.0 * (pe1 - pe0) / pe0,
        pose_error_mean_norm_initial_rad: pose_error_mean_norm(noisy, clean, BOUNDARY_FRAMES)?,
        pose_error_mean_norm_final_rad: pose_error_mean_norm(&refined, clean, BOUNDARY_FRAMES)?,
        left_hip_torque: HipTrajectories {
            joint: "left_hip".into(),
            clean: torque_norm_track(&d_clean, hip),
            noisy: torque_norm_track(&d_noisy, hip),
            refined: torque_norm_track(&d_refined, hip),
        },
    };
    Ok((refined, report))
}
