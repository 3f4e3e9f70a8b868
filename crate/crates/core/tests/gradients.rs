use proptest::prelude::*;

use idyn::ad;
use idyn::derivatives::BOUNDARY_FRAMES;
use idyn::filtering::FilterSpec;
use idyn::motion::{synth_walk, GaitConfig, MotionSequence};
use idyn::noise::add_uniform_noise;
use idyn::pipeline::Pipeline;
use idyn::refinement::{dynamics_of_params, physics_loss, RefinementConfig};
use idyn::rnea::{torque_error, DynamicsMode};
use idyn::scalar::Scalar;

fn clip(start: usize, frames: usize, seed: u64) -> MotionSequence {
    let walk = synth_walk(4.0, 30.0, &GaitConfig::default()).unwrap();
    let m = MotionSequence::new(30.0, walk.frames[start..start + frames].to_vec()).unwrap();
    add_uniform_noise(&m, 0.03, seed).unwrap()
}

fn fd(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
    let h = 1e-6;
    let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

fn close(tape: f64, fd: f64) -> bool {
    (tape - fd).abs() <= 1e-4 * tape.abs().max(fd.abs()) + 1e-7
}

/// A smooth scalar of every wrench: weighted sum of all components.
fn wrench_sum<T: Scalar>(d: &idyn::rnea::DynamicsResult<T>) -> T {
    let mut s = T::zero();
    for t in 0..d.frames() {
        for j in 0..d.joints() {
            let w = 1.0 + 0.1 * j as f64 + 0.01 * t as f64;
            let (f, tau) = (d.force[t][j], d.torque[t][j]);
            s += (f.x + f.y * 0.5 + f.z * 0.25 + tau.x * 2.0 - tau.y + tau.z * 0.3) * w;
        }
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn wrench_gradient_matches_fd(
        start in 0usize..100, frames in 5usize..10, seed in 0u64..1000,
        channels in proptest::collection::vec(0usize..10_000, 6),
        com in any::<bool>(),
    ) {
        let mode = if com { DynamicsMode::ComCorrected } else { DynamicsMode::JointMass };
        let p = Pipeline::with_body(75.0, 1.75, mode).unwrap();
        let x = clip(start, frames, seed).to_params();
        let f = |v: &[f64]| wrench_sum(&dynamics_of_params(&p, v, 30.0, None).unwrap());
        let (_, g) = ad::gradient(&x, |v| Ok(wrench_sum(&dynamics_of_params(&p, v, 30.0, None)?))).unwrap();
        for c in channels {
            let i = c % x.len();
            let d = fd(f, &x, i);
            prop_assert!(close(g[i], d), "channel {}: tape {} fd {}", i, g[i], d);
        }
    }

    #[test]
    fn filtered_error_gradient_matches_fd(
        start in 0usize..90, frames in 16usize..24, seed in 0u64..1000,
        channels in proptest::collection::vec(0usize..10_000, 6),
    ) {
        let p = Pipeline::default();
        let m = clip(start, frames, seed);
        let reference = p.dynamics(&MotionSequence::new(30.0, synth_walk(4.0, 30.0, &GaitConfig::default()).unwrap().frames[start..start + frames].to_vec()).unwrap()).unwrap();
        let spec = FilterSpec::new(6.0, 30.0).unwrap();
        let x = m.to_params();
        let f = |v: &[f64]| torque_error(&dynamics_of_params(&p, v, 30.0, Some(&spec)).unwrap(), &reference, BOUNDARY_FRAMES).unwrap();
        let (_, g) = ad::gradient(&x, |v| torque_error(&dynamics_of_params(&p, v, 30.0, Some(&spec))?, &reference, BOUNDARY_FRAMES)).unwrap();
        for c in channels {
            let i = c % x.len();
            let d = fd(f, &x, i);
            prop_assert!(close(g[i], d), "channel {}: tape {} fd {}", i, g[i], d);
        }
    }

    #[test]
    fn loss_gradient_matches_fd(
        start in 0usize..100, frames in 5usize..10, seed in 0u64..1000,
        channels in proptest::collection::vec(0usize..10_000, 6),
        tau_max in 5.0f64..150.0,
    ) {
        let p = Pipeline::default();
        let m = clip(start, frames, seed);
        let anchor = add_uniform_noise(&m, 0.01, seed + 1).unwrap().to_params();
        let x = m.to_params();
        let config = RefinementConfig { tau_max, ..RefinementConfig::default() };
        let f = |v: &[f64]| physics_loss(&p, v, &anchor, 30.0, &config).unwrap().total;
        let (_, g) = ad::gradient(&x, |v| Ok(physics_loss(&p, v, &anchor, 30.0, &config)?.total)).unwrap();
        for c in channels {
            let i = c % x.len();
            let d = fd(f, &x, i);
            prop_assert!(close(g[i], d), "channel {}: tape {} fd {}", i, g[i], d);
        }
    }
}
