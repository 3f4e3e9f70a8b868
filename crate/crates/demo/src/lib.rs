//! Browser bindings: noise amplification, a filtered hip torque trace and
//! the joint sensitivity ranking, all on a synthetic walk.

use wasm_bindgen::prelude::*;

use idyn::analysis::{sigma_grid, Experiment};
use idyn::derivatives::BOUNDARY_FRAMES;
use idyn::filtering::{butterworth_coeffs, filter_motion, FilterSpec};
use idyn::motion::{synth_walk, GaitConfig, MotionSequence};
use idyn::noise::add_uniform_noise;
use idyn::pipeline::Pipeline;
use idyn::skeleton::joint_index;

fn err(e: idyn::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// A body model and a clean walk shared by every operation.
#[wasm_bindgen]
pub struct Demo {
    pipeline: Pipeline,
    clean: MotionSequence,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(mass: f64, height: f64, duration_s: f64) -> Result<Demo, JsError> {
        Demo::build(mass, height, duration_s).map_err(err)
    }

    pub fn frames(&self) -> usize {
        self.clean.len()
    }

    /// Flat `[sigma, mean_nm, std_nm]` triples for sigma in 0..=max.
    pub fn amplification(&self, sigma_max: f64, step: f64, seeds: usize, seed: u64) -> Result<Vec<f64>, JsError> {
        self.amplification_rows(sigma_max, step, seeds, seed).map_err(err)
    }

    /// Left hip torque norm for clean, noisy and filtered motion, one
    /// row of interior frames after another. A cutoff of 0 skips filtering.
    pub fn hip_trace(&self, sigma: f64, cutoff_hz: f64, seed: u64) -> Result<Vec<f64>, JsError> {
        self.hip_rows(sigma, cutoff_hz, seed).map_err(err)
    }

    /// Filter power response at `n` frequencies from 0 to Nyquist.
    pub fn filter_response(&self, cutoff_hz: f64, n: usize) -> Result<Vec<f64>, JsError> {
        self.response_rows(cutoff_hz, n).map_err(err)
    }

    /// Joint names and summed errors, most sensitive first, as
    /// tab-separated lines.
    pub fn sensitivity(&self, sigma: f64, seeds: usize, seed: u64) -> Result<String, JsError> {
        let e = Experiment::new(&self.pipeline, &self.clean, seeds, seed).map_err(err)?;
        let r = e.sensitivity(sigma).map_err(err)?;
        Ok(r.rows.iter().map(|row| format!("{}\t{}\n", row.joint, row.error_nm)).collect())
    }
}

impl Demo {
    fn build(mass: f64, height: f64, duration_s: f64) -> idyn::Result<Demo> {
        let pipeline = Pipeline::with_body(mass, height, Default::default())?;
        let clean = synth_walk(duration_s, 30.0, &GaitConfig::default())?;
        Ok(Demo { pipeline, clean })
    }

    fn amplification_rows(&self, sigma_max: f64, step: f64, seeds: usize, seed: u64) -> idyn::Result<Vec<f64>> {
        let e = Experiment::new(&self.pipeline, &self.clean, seeds, seed)?;
        let r = e.amplification(&sigma_grid(step, sigma_max))?;
        Ok(r.rows.iter().flat_map(|row| [row.x, row.mean_nm, row.std_nm]).collect())
    }

    fn response_rows(&self, cutoff_hz: f64, n: usize) -> idyn::Result<Vec<f64>> {
        let fs = self.clean.fps;
        let c = butterworth_coeffs(&FilterSpec::new(cutoff_hz, fs)?)?;
        let n = n.max(2);
        Ok((0..n).map(|i| c.power_response(0.5 * fs * i as f64 / (n - 1) as f64, fs)).collect())
    }

    fn hip_rows(&self, sigma: f64, cutoff_hz: f64, seed: u64) -> idyn::Result<Vec<f64>> {
        let hip = joint_index("left_hip").expect("template joint");
        let noisy = add_uniform_noise(&self.clean, sigma, seed)?;
        let filtered = if cutoff_hz > 0.0 {
            filter_motion(&noisy, &FilterSpec::new(cutoff_hz, self.clean.fps)?)?
        } else {
            noisy.clone()
        };
        let mut out = Vec::new();
        for m in [&self.clean, &noisy, &filtered] {
            let d = self.pipeline.dynamics(m)?;
            out.extend((BOUNDARY_FRAMES..m.len() - BOUNDARY_FRAMES).map(|t| d.torque[t][hip].norm()));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo() -> Demo {
        Demo::build(75.0, 1.75, 2.0).unwrap()
    }

    #[test]
    fn amplification_rows_are_triples() {
        let rows = demo().amplification_rows(0.1, 0.05, 2, 1).unwrap();
        assert_eq!(rows.len(), 9);
        assert_eq!(rows[0], 0.0);
        assert_eq!(rows[1], 0.0);
        assert!(rows[7] > rows[4]);
    }

    #[test]
    fn hip_trace_has_three_rows() {
        let d = demo();
        let interior = d.frames() - 2 * BOUNDARY_FRAMES;
        let v = d.hip_rows(0.05, 6.0, 3).unwrap();
        assert_eq!(v.len(), 3 * interior);
        let rms = |s: &[f64], r: &[f64]| (s.iter().zip(r).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / s.len() as f64).sqrt();
        let (clean, rest) = v.split_at(interior);
        let (noisy, filtered) = rest.split_at(interior);
        assert!(rms(filtered, clean) < rms(noisy, clean));
    }

    #[test]
    fn unfiltered_trace_repeats_noisy() {
        let d = demo();
        let interior = d.frames() - 2 * BOUNDARY_FRAMES;
        let v = d.hip_rows(0.05, 0.0, 3).unwrap();
        assert_eq!(v[interior..2 * interior], v[2 * interior..]);
    }

    #[test]
    fn response_is_half_power_at_cutoff() {
        let r = demo().response_rows(7.5, 3).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-9);
        assert!((r[1] - 0.5).abs() < 1e-9);
    }
}
