//! Fourth-order zero-phase Butterworth low-pass filtering.
//!
//! Coefficients come from the analog prototype through the bilinear
//! transform with pre-warping, built as two cascaded biquads and expanded
//! into a single direct-form polynomial. [`filtfilt`] runs the filter
//! forward and backward over an odd-reflected extension of the signal,
//! starting each pass from the steady state of its first sample, so the
//! net phase is zero.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::motion::MotionSequence;
use crate::rotations::Vec3;
use crate::scalar::Scalar;

pub const ORDER: usize = 4;
/// Samples of odd reflection added at each end before filtering.
pub const PAD_LEN: usize = 3 * (ORDER + 1);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterSpec {
    pub cutoff_hz: f64,
    pub sample_rate_hz: f64,
}

impl FilterSpec {
    pub fn new(cutoff_hz: f64, sample_rate_hz: f64) -> Result<Self> {
        let s = FilterSpec {
            cutoff_hz,
            sample_rate_hz,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn order(&self) -> usize {
        ORDER
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate_hz / 2.0;
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::invalid(format!("sample rate must be positive, got {}", self.sample_rate_hz)));
        }
        if !(self.cutoff_hz > 0.0 && self.cutoff_hz < nyquist) {
            return Err(Error::invalid(format!(
                "cutoff {} Hz must lie in (0, {nyquist}) Hz",
                self.cutoff_hz
            )));
        }
        Ok(())
    }
}

/// Transfer function `B(z)/A(z)` with `a[0] = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coefficients {
    pub b: [f64; ORDER + 1],
    pub a: [f64; ORDER + 1],
}

impl Coefficients {
    pub fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }

    /// `|H(e^{jω})|²` at frequency `hz`.
    pub fn power_response(&self, hz: f64, sample_rate_hz: f64) -> f64 {
        let w = 2.0 * PI * hz / sample_rate_hz;
        let eval = |c: &[f64; ORDER + 1]| {
            let (mut re, mut im) = (0.0, 0.0);
            for (k, &ck) in c.iter().enumerate() {
                re += ck * (k as f64 * w).cos();
                im -= ck * (k as f64 * w).sin();
            }
            re * re + im * im
        };
        eval(&self.b) / eval(&self.a)
    }

    /// Internal state of the transposed direct form after a unit step has
    /// settled.
    fn step_state(&self) -> [f64; ORDER] {
        let y = self.dc_gain();
        let mut z = [0.0; ORDER];
        let mut acc = 0.0;
        for k in (0..ORDER).rev() {
            acc += self.b[k + 1] - self.a[k + 1] * y;
            z[k] = acc;
        }
        z
    }
}

fn poly_mul3(p: [f64; 3], q: [f64; 3]) -> [f64; 5] {
    let mut r = [0.0; 5];
    for i in 0..3 {
        for j in 0..3 {
            r[i + j] += p[i] * q[j];
        }
    }
    r
}

pub fn butterworth_coeffs(spec: &FilterSpec) -> Result<Coefficients> {
    spec.validate()?;
    let k = (PI * spec.cutoff_hz / spec.sample_rate_hz).tan();
    let k2 = k * k;
    let section = |i: usize| {
        let q = 1.0 / (2.0 * ((2 * i + 1) as f64 * PI / (2 * ORDER) as f64).sin());
        let norm = 1.0 / (1.0 + k / q + k2);
        let b = [k2 * norm, 2.0 * k2 * norm, k2 * norm];
        let a = [1.0, 2.0 * (k2 - 1.0) * norm, (1.0 - k / q + k2) * norm];
        (b, a)
    };
    let ((b0, a0), (b1, a1)) = (section(0), section(1));
    let a = poly_mul3(a0, a1);
    let mut b = poly_mul3(b0, b1);
    // the expanded sums lose a few ulps at low cutoffs; pin the DC gain
    let gain = a.iter().sum::<f64>() / b.iter().sum::<f64>();
    b.iter_mut().for_each(|v| *v *= gain);
    Ok(Coefficients { b, a })
}

/// Causal filtering in transposed direct form II with initial state `zi`.
fn lfilter<T: Scalar>(c: &Coefficients, x: &[T], zi: [T; ORDER]) -> Vec<T> {
    let mut z = zi;
    let mut y = Vec::with_capacity(x.len());
    for &xn in x {
        let yn = xn * c.b[0] + z[0];
        for k in 0..ORDER - 1 {
            z[k] = xn * c.b[k + 1] - yn * c.a[k + 1] + z[k + 1];
        }
        z[ORDER - 1] = xn * c.b[ORDER] - yn * c.a[ORDER];
        y.push(yn);
    }
    y
}

/// One forward pass then one backward pass over the padded signal, each
/// starting from the steady state of its first sample.
fn forward_backward<T: Scalar>(c: &Coefficients, x: &[T]) -> Result<Vec<T>> {
    let n = x.len();
    if n <= PAD_LEN {
        return Err(Error::SequenceTooShort {
            needed: PAD_LEN + 1,
            got: n,
        });
    }
    let mut ext = Vec::with_capacity(n + 2 * PAD_LEN);
    let (first, last) = (x[0], x[n - 1]);
    ext.extend((1..=PAD_LEN).rev().map(|i| first * 2.0 - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=PAD_LEN).map(|i| last * 2.0 - x[n - 1 - i]));

    let step = c.step_state();
    let zi = |s: T| step.map(|v| s * v);
    let mut y = lfilter(c, &ext, zi(ext[0]));
    y.reverse();
    let mut y = lfilter(c, &y, zi(y[0]));
    y.reverse();
    Ok(y[PAD_LEN..PAD_LEN + n].to_vec())
}

/// Zero-phase filtering with precomputed coefficients.
///
/// The forward-backward pass alone depends slightly on the direction of
/// time near the ends, so it is averaged with its mirror image. The result
/// commutes exactly with time reversal.
pub fn filtfilt_with<T: Scalar>(c: &Coefficients, x: &[T]) -> Result<Vec<T>> {
    let fwd = forward_backward(c, x)?;
    let mut rev = x.to_vec();
    rev.reverse();
    let bwd = forward_backward(c, &rev)?;
    Ok(fwd.into_iter().zip(bwd.into_iter().rev()).map(|(a, b)| (a + b) * 0.5).collect())
}

pub fn filtfilt<T: Scalar>(x: &[T], spec: &FilterSpec) -> Result<Vec<T>> {
    filtfilt_with(&butterworth_coeffs(spec)?, x)
}

/// Filters every rotation and translation component of generic tracks
/// (`rotations[t][joint]`, `trans[t]`) independently.
pub fn filter_tracks<T: Scalar>(
    rotations: &[Vec<Vec3<T>>],
    trans: &[Vec3<T>],
    spec: &FilterSpec,
) -> Result<(Vec<Vec<Vec3<T>>>, Vec<Vec3<T>>)> {
    let c = butterworth_coeffs(spec)?;
    let n = rotations.len();
    let joints = rotations.first().map_or(0, |f| f.len());
    let mut out_rot = vec![vec![Vec3::<T>::zero(); joints]; n];
    let mut out_trans = vec![Vec3::<T>::zero(); n];
    for jn in 0..joints {
        for axis in 0..3 {
            let ch: Vec<T> = rotations.iter().map(|f| f[jn][axis]).collect();
            for (t, v) in filtfilt_with(&c, &ch)?.into_iter().enumerate() {
                set(&mut out_rot[t][jn], axis, v);
            }
        }
    }
    for axis in 0..3 {
        let ch: Vec<T> = trans.iter().map(|v| v[axis]).collect();
        for (t, v) in filtfilt_with(&c, &ch)?.into_iter().enumerate() {
            set(&mut out_trans[t], axis, v);
        }
    }
    Ok((out_rot, out_trans))
}

fn set<T: Scalar>(v: &mut Vec3<T>, axis: usize, value: T) {
    match axis {
        0 => v.x = value,
        1 => v.y = value,
        _ => v.z = value,
    }
}

/// Filters the 72 axis-angle channels and the 3 translation channels.
pub fn filter_motion(motion: &MotionSequence, spec: &FilterSpec) -> Result<MotionSequence> {
    motion.validate()?;
    let rot: Vec<Vec<Vec3>> = motion.frames.iter().map(|f| f.rotations.clone()).collect();
    let trans: Vec<Vec3> = motion.frames.iter().map(|f| f.root_trans).collect();
    let (rot, trans) = filter_tracks(&rot, &trans, spec)?;
    let frames = rot
        .into_iter()
        .zip(trans)
        .map(|(rotations, root_trans)| crate::skeleton::Pose { rotations, root_trans })
        .collect();
    MotionSequence::new(motion.fps, frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::gradient;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn spec(fc: f64) -> FilterSpec {
        FilterSpec::new(fc, 30.0).unwrap()
    }

    // scipy.signal.butter(4, 6, fs=30)
    const REF_B: [f64; 5] = [
        0.046582906636443676,
        0.1863316265457747,
        0.27949743981866204,
        0.1863316265457747,
        0.046582906636443676,
    ];
    const REF_A: [f64; 5] = [
        1.0,
        -0.7820951980233375,
        0.6799785269162995,
        -0.18267569775303227,
        0.030118875043169235,
    ];

    fn test_signal() -> Vec<f64> {
        (0..40)
            .map(|k| {
                let k = k as f64;
                (0.3 * k).sin() + 0.05 * k + 0.2 * (2.7 * k).cos()
            })
            .collect()
    }

    // scipy.signal.filtfilt(b, a, test_signal()) with the default padding
    const REF_FILTFILT: [f64; 40] = [
        0.20012713600796014, 0.3831710088427809, 0.6258357969949355, 0.9046677973627854,
        1.1368606996130382, 1.2625280233801361, 1.278257174231126, 1.208177925720286,
        1.071128736180762, 0.87776295396626, 0.6433141318708148, 0.3930697599189818,
        0.15682723281735467, -0.038439409948593954, -0.17157362130315137, -0.22721366351443475,
        -0.19602048017283563, -0.07589239152097672, 0.12714118634965807, 0.39931224637975116,
        0.7206195930957008, 1.0668181321558037, 1.4115328707753496, 1.7284675274022736,
        1.9937014470560916, 2.187943286807203, 2.298402384084723, 2.319875478197429,
        2.2548876035678385, 2.1132728684803705, 1.9117856057155695, 1.673474121809091,
        1.4254332322770389, 1.1943315155141492, 1.002450297328292, 0.8685731723908421,
        0.8125513756513641, 0.8534429828463503, 0.993446168806713, 1.1992014580860697,
    ];

    #[test]
    fn coefficients_match_reference() {
        let c = butterworth_coeffs(&spec(6.0)).unwrap();
        for k in 0..5 {
            assert!((c.b[k] - REF_B[k]).abs() < 1e-9);
            assert!((c.a[k] - REF_A[k]).abs() < 1e-9);
        }
        // scipy.signal.butter(4, 2, fs=30)
        let c = butterworth_coeffs(&spec(2.0)).unwrap();
        assert_relative_eq!(c.b[0], 0.0011752795495705098, max_relative = 1e-9);
        assert_relative_eq!(c.a[4], 0.331503438845899, max_relative = 1e-9);
    }

    #[test]
    fn unit_dc_gain() {
        for fc in [0.5, 2.0, 6.0, 10.0, 14.0, 14.9] {
            let g = butterworth_coeffs(&spec(fc)).unwrap().dc_gain();
            assert!((g - 1.0).abs() < 1e-12, "{fc}: {g}");
        }
    }

    #[test]
    fn half_power_at_cutoff() {
        for (fc, fs) in [(7.5, 30.0), (6.0, 30.0), (25.0, 100.0)] {
            let c = butterworth_coeffs(&FilterSpec::new(fc, fs).unwrap()).unwrap();
            assert!((c.power_response(fc, fs) - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_cutoffs() {
        assert!(FilterSpec::new(15.0, 30.0).is_err());
        assert!(FilterSpec::new(20.0, 30.0).is_err());
        assert!(FilterSpec::new(0.0, 30.0).is_err());
        let raw = FilterSpec {
            cutoff_hz: 16.0,
            sample_rate_hz: 30.0,
        };
        assert!(matches!(butterworth_coeffs(&raw), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn single_pass_matches_reference_filtfilt() {
        let c = butterworth_coeffs(&spec(6.0)).unwrap();
        let y = forward_backward(&c, &test_signal()).unwrap();
        for (a, b) in y.iter().zip(REF_FILTFILT) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn symmetrized_output_stays_close_to_reference() {
        let y = filtfilt(&test_signal(), &spec(6.0)).unwrap();
        for (t, (a, b)) in y.iter().zip(REF_FILTFILT).enumerate() {
            let tol = if (PAD_LEN..40 - PAD_LEN).contains(&t) { 1e-4 } else { 1e-2 };
            assert!((a - b).abs() < tol, "{t}: {a} vs {b}");
        }
    }

    #[test]
    fn too_short() {
        let x = vec![1.0; PAD_LEN];
        assert!(matches!(
            filtfilt(&x, &spec(6.0)),
            Err(Error::SequenceTooShort { needed: 16, got: 15 })
        ));
        assert!(filtfilt(&vec![1.0; PAD_LEN + 1], &spec(6.0)).is_ok());
    }

    #[test]
    fn constant_passes_through() {
        let y = filtfilt(&vec![0.7; 50], &spec(6.0)).unwrap();
        assert!(y.iter().all(|v| (v - 0.7).abs() < 1e-9));
    }

    fn sine_gain(hz: f64) -> f64 {
        let x: Vec<f64> = (0..300).map(|t| (2.0 * PI * hz * t as f64 / 30.0).sin()).collect();
        let y = filtfilt(&x, &spec(6.0)).unwrap();
        // away from the edges, compare projections onto the sinusoid
        let mid = 60..240;
        let num: f64 = mid.clone().map(|t| y[t] * x[t]).sum();
        let den: f64 = mid.map(|t| x[t] * x[t]).sum();
        num / den
    }

    #[test]
    fn passband_and_stopband() {
        let pass = sine_gain(1.0);
        assert!(pass >= 0.999, "{pass}");
        let expected_pass = 1.0 / (1.0 + (1.0f64 / 6.0).powi(8));
        assert!((pass - expected_pass).abs() < 1e-3);
        let stop = sine_gain(12.0);
        assert!(stop.abs() < 0.01, "{stop}");
    }

    #[test]
    fn gradient_is_transposed_filter() {
        let x = test_signal();
        let c = butterworth_coeffs(&spec(6.0)).unwrap();
        let w: Vec<f64> = (0..40).map(|k| ((k * 7 % 11) as f64 - 5.0) / 5.0).collect();
        let loss = |xs: &[f64]| -> f64 {
            filtfilt_with(&c, xs).unwrap().iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        let (val, grad) = gradient(&x, |v| {
            let y = filtfilt_with(&c, v)?;
            Ok(y.into_iter().zip(&w).fold(crate::ad::Var::constant(0.0), |acc, (a, &b)| acc + a * b))
        })
        .unwrap();
        assert_eq!(val, loss(&x));
        let h = 1e-5;
        for i in 0..40 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (loss(&xp) - loss(&xm)) / (2.0 * h);
            assert!((grad[i] - fd).abs() <= 1e-6 * fd.abs().max(1.0), "{i}: {} vs {fd}", grad[i]);
        }
    }

    /// Energy above `fc` of the Hann-windowed signal. The window keeps
    /// leakage from the pass band out of the measurement.
    fn high_band_energy(x: &[f64], fc: f64, fs: f64) -> f64 {
        use rustfft::{num_complex::Complex, FftPlanner};
        let n = x.len();
        let mut buf: Vec<Complex<f64>> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
                Complex::new(v * w, 0.0)
            })
            .collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let first = (fc * n as f64 / fs).ceil() as usize + 2;
        buf[first.min(n / 2)..=n / 2].iter().map(|z| z.norm_sqr()).sum()
    }

    proptest! {
        #[test]
        fn reversal_symmetry(x in prop::collection::vec(-1.0f64..1.0, 16..80), fc in 1.0f64..14.0) {
            let s = spec(fc);
            let mut rev = x.clone();
            rev.reverse();
            let mut a = filtfilt(&rev, &s).unwrap();
            a.reverse();
            let b = filtfilt(&x, &s).unwrap();
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }

        #[test]
        fn linear(x in prop::collection::vec(-1.0f64..1.0, 20..60), alpha in -3.0f64..3.0, shift in -2.0f64..2.0) {
            let s = spec(6.0);
            let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| (i as f64 * 0.37).sin() + shift * v).collect();
            let combo: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + b).collect();
            let fx = filtfilt(&x, &s).unwrap();
            let fy = filtfilt(&y, &s).unwrap();
            let fc = filtfilt(&combo, &s).unwrap();
            for i in 0..x.len() {
                prop_assert!((fc[i] - (alpha * fx[i] + fy[i])).abs() < 1e-9);
            }
        }

        #[test]
        fn refiltering_does_not_add_high_band_energy(x in prop::collection::vec(-1.0f64..1.0, 64..128), fc in 2.0f64..12.0) {
            let s = spec(fc);
            let once = filtfilt(&x, &s).unwrap();
            let twice = filtfilt(&once, &s).unwrap();
            let e0 = high_band_energy(&x, fc, 30.0);
            let e1 = high_band_energy(&once, fc, 30.0);
            let e2 = high_band_energy(&twice, fc, 30.0);
            prop_assert!(e1 <= e0 * (1.0 + 1e-9) + 1e-12);
            prop_assert!(e2 <= e1 * (1.0 + 1e-9) + 1e-12, "{} {} {}", e0, e1, e2);
        }
    }
}
