//! Central finite differences for joint trajectories.
//!
//! Linear quantities use the three-point stencils
//! `v(t) = (p(t+1) - p(t-1)) / 2dt` and
//! `a(t) = (p(t+1) - 2p(t) + p(t-1)) / dt²`.
//! Angular velocity comes from the relative rotation between the
//! neighbouring frames, `ω(t) = R(t) · log(R(t-1)ᵀ R(t+1)) / 2dt`, mapped to
//! the world frame by `R(t)`; angular acceleration is the central
//! difference of `ω`.
//!
//! The first and last frame copy the nearest interior value. Error
//! statistics downstream skip [`BOUNDARY_FRAMES`] frames at each end.

use crate::error::{Error, Result};
use crate::rotations::{log_so3, Mat3, Vec3};
use crate::scalar::Scalar;
use crate::skeleton::{forward_kinematics_generic, FrameKinematics, Skeleton};

/// Frames excluded at each end of a sequence by every error metric.
pub const BOUNDARY_FRAMES: usize = 2;

pub const MIN_FRAMES: usize = 3;

/// Frame-major series: `series[t][joint]`.
pub type Series<T> = Vec<Vec<T>>;

#[derive(Clone, Debug)]
pub struct KinematicState<T = f64> {
    pub dt: f64,
    pub pos: Series<Vec3<T>>,
    pub vel: Series<Vec3<T>>,
    pub acc: Series<Vec3<T>>,
    pub rot: Series<Mat3<T>>,
    pub ang_vel: Series<Vec3<T>>,
    pub ang_acc: Series<Vec3<T>>,
}

impl<T: Scalar> KinematicState<T> {
    pub fn frames(&self) -> usize {
        self.pos.len()
    }

    pub fn joints(&self) -> usize {
        self.pos.first().map_or(0, |f| f.len())
    }
}

fn check_len(frames: usize, dt: f64) -> Result<()> {
    if frames < MIN_FRAMES {
        return Err(Error::SequenceTooShort {
            needed: MIN_FRAMES,
            got: frames,
        });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    Ok(())
}

fn replicate_ends<V: Copy>(series: &mut [Vec<V>]) {
    let n = series.len();
    series[0] = series[1].clone();
    series[n - 1] = series[n - 2].clone();
}

/// Velocity and acceleration of every joint by central differences.
pub fn linear_derivatives<T: Scalar>(
    pos: &[Vec<Vec3<T>>],
    dt: f64,
) -> Result<(Series<Vec3<T>>, Series<Vec3<T>>)> {
    check_len(pos.len(), dt)?;
    let n = pos.len();
    let inv_2dt = 1.0 / (2.0 * dt);
    let inv_dt2 = 1.0 / (dt * dt);
    let mut vel = vec![Vec::new(); n];
    let mut acc = vec![Vec::new(); n];
    for t in 1..n - 1 {
        let (prev, cur, next) = (&pos[t - 1], &pos[t], &pos[t + 1]);
        vel[t] = prev.iter().zip(next).map(|(&a, &b)| (b - a).scale_f(inv_2dt)).collect();
        acc[t] = prev
            .iter()
            .zip(cur)
            .zip(next)
            .map(|((&a, &b), &c)| (c - b - b + a).scale_f(inv_dt2))
            .collect();
    }
    replicate_ends(&mut vel);
    replicate_ends(&mut acc);
    Ok((vel, acc))
}

/// World-frame angular velocity and acceleration from rotation matrices.
pub fn angular_derivatives<T: Scalar>(
    rot: &[Vec<Mat3<T>>],
    dt: f64,
) -> Result<(Series<Vec3<T>>, Series<Vec3<T>>)> {
    check_len(rot.len(), dt)?;
    let n = rot.len();
    let inv_2dt = 1.0 / (2.0 * dt);
    let mut omega = vec![Vec::new(); n];
    for t in 1..n - 1 {
        let mut row = Vec::with_capacity(rot[t].len());
        for j in 0..rot[t].len() {
            let rel = rot[t - 1][j].tr_matmul(&rot[t + 1][j]);
            let phi = log_so3(&rel)?;
            row.push(rot[t][j].mul_vec(phi).scale_f(inv_2dt));
        }
        omega[t] = row;
    }
    replicate_ends(&mut omega);
    let mut alpha = vec![Vec::new(); n];
    for t in 1..n - 1 {
        alpha[t] = omega[t - 1]
            .iter()
            .zip(&omega[t + 1])
            .map(|(&a, &b)| (b - a).scale_f(inv_2dt))
            .collect();
    }
    replicate_ends(&mut alpha);
    Ok((omega, alpha))
}

/// Standard-deviation gain of the second-difference operator on white
/// noise: the norm of the stencil `(1, -2, 1) / dt²`, i.e. `√6 / dt²`.
pub fn amplification_gain(dt: f64) -> f64 {
    6f64.sqrt() / (dt * dt)
}

/// Differentiates per-frame forward kinematics into a full kinematic state.
pub fn kinematic_state<T: Scalar>(frames: Vec<FrameKinematics<T>>, dt: f64) -> Result<KinematicState<T>> {
    check_len(frames.len(), dt)?;
    let (pos, rot): (Vec<_>, Vec<_>) = frames.into_iter().map(|f| (f.world_pos, f.world_rot)).unzip();
    let (vel, acc) = linear_derivatives(&pos, dt)?;
    let (ang_vel, ang_acc) = angular_derivatives(&rot, dt)?;
    Ok(KinematicState {
        dt,
        pos,
        vel,
        acc,
        rot,
        ang_vel,
        ang_acc,
    })
}

/// Forward kinematics for every frame followed by differentiation.
pub fn kinematics_from_poses<T: Scalar>(
    skel: &Skeleton,
    rotations: &[Vec<Vec3<T>>],
    root_trans: &[Vec3<T>],
    dt: f64,
) -> Result<KinematicState<T>> {
    if rotations.len() != root_trans.len() {
        return Err(Error::invalid("rotation and translation tracks differ in length"));
    }
    let frames = rotations
        .iter()
        .zip(root_trans)
        .map(|(r, &t)| forward_kinematics_generic(skel, r, t))
        .collect();
    kinematic_state(frames, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotations::axis_rotation;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::PI;

    fn track(values: &[Vec3]) -> Series<Vec3> {
        values.iter().map(|&v| vec![v]).collect()
    }

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    #[test]
    fn too_short_or_bad_dt() {
        let p = track(&[v(0.0, 0.0, 0.0); 2]);
        assert!(matches!(
            linear_derivatives(&p, 0.1),
            Err(Error::SequenceTooShort { needed: 3, got: 2 })
        ));
        let p = track(&[v(0.0, 0.0, 0.0); 5]);
        assert!(linear_derivatives(&p, 0.0).is_err());
    }

    #[test]
    fn constant_has_zero_derivatives() {
        let p = track(&[v(1.0, -2.0, 3.0); 6]);
        let (vel, acc) = linear_derivatives(&p, 0.1).unwrap();
        assert!(vel.iter().chain(&acc).all(|f| f[0] == Vec3::zero()));
        let r = vec![vec![axis_rotation(v(1.0, 1.0, 0.0), 0.7)]; 6];
        let (w, a) = angular_derivatives(&r, 0.1).unwrap();
        assert!(w.iter().chain(&a).all(|f| f[0].norm() < 1e-15));
    }

    #[test]
    fn quadratic_is_differentiated_exactly() {
        let dt = 0.037;
        let a = v(1.5, -9.81, 0.25);
        let p: Vec<Vec3> = (0..10).map(|k| a.scale_f(0.5 * (k as f64 * dt).powi(2))).collect();
        let (_, acc) = linear_derivatives(&track(&p), dt).unwrap();
        for f in &acc {
            assert!((f[0] - a).norm() < 1e-9 * a.norm());
        }
    }

    #[test]
    fn sine_matches_discrete_operator_gain() {
        let dt = 1.0 / 30.0;
        let f = 2.0;
        let w = 2.0 * PI * f;
        let p: Vec<Vec3> = (0..60).map(|k| v((w * k as f64 * dt).sin(), 0.0, 0.0)).collect();
        let (_, acc) = linear_derivatives(&track(&p), dt).unwrap();
        let gain = 2.0 / (dt * dt) * (1.0 - (w * dt).cos());
        for t in 1..59 {
            let expected = -gain * p[t].x;
            assert!((acc[t][0].x - expected).abs() < 1e-9 * gain);
        }
    }

    #[test]
    fn uniform_spin_about_z() {
        let dt = 1.0 / 30.0;
        let r: Series<Mat3> = (0..30)
            .map(|k| vec![axis_rotation(v(0.0, 0.0, 1.0), k as f64 * dt)])
            .collect();
        let (w, a) = angular_derivatives(&r, dt).unwrap();
        for t in 0..30 {
            assert!((w[t][0] - v(0.0, 0.0, 1.0)).norm() < 1e-6);
            assert!(a[t][0].norm() < 1e-6);
        }
    }

    #[test]
    fn ramping_spin() {
        // rate ramps 0 -> 2 rad/s over 2 s: angle = t²/2, alpha = 1
        let dt = 1.0 / 30.0;
        let n = 61;
        let r: Series<Mat3> = (0..n)
            .map(|k| {
                let t = k as f64 * dt;
                vec![axis_rotation(v(0.0, 0.0, 1.0), 0.5 * t * t)]
            })
            .collect();
        let (w, a) = angular_derivatives(&r, dt).unwrap();
        for t in BOUNDARY_FRAMES..n - BOUNDARY_FRAMES {
            assert!((a[t][0] - v(0.0, 0.0, 1.0)).norm() < 1e-9);
            assert!((w[t][0].z - t as f64 * dt).abs() < 1e-9);
        }
    }

    #[test]
    fn gain_values() {
        assert!((amplification_gain(1.0) - 2.449489742783178).abs() < 1e-12);
        assert!((amplification_gain(1.0 / 30.0) - 6f64.sqrt() * 900.0).abs() < 1e-9);
        assert!((amplification_gain(1.0 / 30.0) - 2204.5).abs() < 0.1);
    }

    #[test]
    fn monte_carlo_noise_gain() {
        let dt = 1.0 / 30.0;
        let sigma = 0.01;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_002;
        let p: Vec<Vec3> = (0..n)
            .map(|_| v(sigma * rng.sample::<f64, _>(StandardNormal), 0.0, 0.0))
            .collect();
        let (_, acc) = linear_derivatives(&track(&p), dt).unwrap();
        let xs: Vec<f64> = acc[1..n - 1].iter().map(|f| f[0].x).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        let expected = sigma * amplification_gain(dt);
        assert!((var.sqrt() / expected - 1.0).abs() < 0.02);
    }

    #[test]
    fn spin_recovers_rate_to_second_order() {
        let w0 = v(0.4, -1.1, 0.7);
        let err = |dt: f64| {
            let r: Series<Mat3> = (0..7).map(|k| vec![crate::rotations::exp_so3(w0.scale_f(k as f64 * dt))]).collect();
            let (w, _) = angular_derivatives(&r, dt).unwrap();
            (w[3][0] - w0).norm()
        };
        // constant body rate about a fixed axis is exact
        assert!(err(0.05) < 1e-12);
        assert!(err(0.01) < 1e-12);
    }

    proptest! {
        #[test]
        fn linear_in_input(
            a in proptest::collection::vec(-1.0f64..1.0, 8),
            b in proptest::collection::vec(-1.0f64..1.0, 8),
            s in -2.0f64..2.0, u in -2.0f64..2.0,
        ) {
            let dt = 0.1;
            let pa = track(&a.iter().map(|&x| v(x, 0.0, 0.0)).collect::<Vec<_>>());
            let pb = track(&b.iter().map(|&x| v(0.0, x, x)).collect::<Vec<_>>());
            let pc: Series<Vec3> = pa.iter().zip(&pb).map(|(x, y)| vec![x[0].scale_f(s) + y[0].scale_f(u)]).collect();
            let (va, aa) = linear_derivatives(&pa, dt).unwrap();
            let (vb, ab) = linear_derivatives(&pb, dt).unwrap();
            let (vc, ac) = linear_derivatives(&pc, dt).unwrap();
            for t in 0..8 {
                prop_assert!((vc[t][0] - va[t][0].scale_f(s) - vb[t][0].scale_f(u)).norm() < 1e-12);
                prop_assert!((ac[t][0] - aa[t][0].scale_f(s) - ab[t][0].scale_f(u)).norm() < 1e-10);
            }
        }

        #[test]
        fn time_reversal(a in proptest::collection::vec(-1.0f64..1.0, 9)) {
            let dt = 0.1;
            let p = track(&a.iter().map(|&x| v(x, -x, 2.0 * x)).collect::<Vec<_>>());
            let mut rev = p.clone();
            rev.reverse();
            let (v1, a1) = linear_derivatives(&p, dt).unwrap();
            let (v2, a2) = linear_derivatives(&rev, dt).unwrap();
            for t in 1..8 {
                prop_assert!((v1[t][0] + v2[8 - t][0]).norm() < 1e-12);
                prop_assert!((a1[t][0] - a2[8 - t][0]).norm() < 1e-12);
            }
        }
    }
}
