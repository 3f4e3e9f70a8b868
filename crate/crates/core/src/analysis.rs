//! Noise-propagation experiments on a clean reference motion.
//!
//! Every experiment perturbs the clean motion, runs the pipeline and
//! compares torques with those of the clean motion. Trial `k` of an
//! experiment uses seed `base_seed + k`, and trials are evaluated in
//! parallel but collected in a fixed order, so results do not depend on
//! the thread count.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::filtering::{filter_motion, FilterSpec};
use crate::motion::MotionSequence;
use crate::noise::{add_joint_noise, add_realistic_noise_seeded, add_uniform_noise, NoiseProfile};
use crate::pipeline::Pipeline;
use crate::rnea::DynamicsResult;
use crate::skeleton::NUM_JOINTS;

/// Order-preserving map, parallel when the `parallel` feature is on.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, _) = mean_std(x);
    let (my, _) = mean_std(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub x: f64,
    pub mean_nm: f64,
    pub std_nm: f64,
    pub n: usize,
}

impl SweepRow {
    fn from_trials(x: f64, errors: &[f64]) -> Self {
        let (mean_nm, std_nm) = mean_std(errors);
        SweepRow {
            x,
            mean_nm,
            std_nm,
            n: errors.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// Least-squares slope of mean error against `x` through the origin.
    pub fn slope(&self) -> f64 {
        let sxy: f64 = self.rows.iter().map(|r| r.x * r.mean_nm).sum();
        let sxx: f64 = self.rows.iter().map(|r| r.x * r.x).sum();
        sxy / sxx
    }

    /// Pearson correlation of mean error with `x` over rows with `x > 0`.
    pub fn correlation(&self) -> f64 {
        let rows: Vec<&SweepRow> = self.rows.iter().filter(|r| r.x > 0.0).collect();
        let x: Vec<f64> = rows.iter().map(|r| r.x).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.mean_nm).collect();
        pearson(&x, &y)
    }

    pub fn row(&self, x: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| (r.x - x).abs() < 1e-12)
    }

    /// `sigma,mean_nm,std_nm,n`
    pub fn amplification_csv(&self) -> String {
        let mut s = String::from("sigma,mean_nm,std_nm,n\n");
        for r in &self.rows {
            writeln!(s, "{},{},{},{}", r.x, r.mean_nm, r.std_nm, r.n).unwrap();
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct Experiment<'a> {
    pub pipeline: &'a Pipeline,
    pub clean: &'a MotionSequence,
    pub reference: DynamicsResult,
    pub seeds: usize,
    pub base_seed: u64,
}

impl<'a> Experiment<'a> {
    pub fn new(pipeline: &'a Pipeline, clean: &'a MotionSequence, seeds: usize, base_seed: u64) -> Result<Self> {
        if seeds == 0 {
            return Err(Error::invalid("at least one seed is required"));
        }
        let reference = pipeline.dynamics(clean)?;
        Ok(Experiment {
            pipeline,
            clean,
            reference,
            seeds,
            base_seed,
        })
    }

    fn seed(&self, trial: usize) -> u64 {
        self.base_seed.wrapping_add(trial as u64)
    }

    fn error(&self, motion: &MotionSequence) -> Result<f64> {
        self.pipeline.torque_error(motion, &self.reference)
    }

    /// Uniform noise at each sigma, `seeds` trials per sigma.
    pub fn amplification(&self, sigmas: &[f64]) -> Result<SweepResult> {
        let jobs: Vec<(usize, usize)> = (0..sigmas.len()).flat_map(|i| (0..self.seeds).map(move |k| (i, k))).collect();
        let errors = par_map(&jobs, |&(i, k)| self.error(&add_uniform_noise(self.clean, sigmas[i], self.seed(k))?));
        let errors = errors.into_iter().collect::<Result<Vec<_>>>()?;
        let rows = sigmas
            .iter()
            .enumerate()
            .map(|(i, &s)| SweepRow::from_trials(s, &errors[i * self.seeds..(i + 1) * self.seeds]))
            .collect();
        Ok(SweepResult { rows })
    }

    /// Noise on one joint at a time; the score is the per-joint torque
    /// error summed over all joints, averaged over seeds.
    pub fn sensitivity(&self, sigma: f64) -> Result<SensitivityResult> {
        let jobs: Vec<(usize, usize)> = (0..NUM_JOINTS).flat_map(|j| (0..self.seeds).map(move |k| (j, k))).collect();
        let errors = par_map(&jobs, |&(j, k)| -> Result<f64> {
            let noisy = add_joint_noise(self.clean, &[j], sigma, self.seed(k))?;
            Ok(self.pipeline.per_joint_error(&noisy, &self.reference)?.iter().sum())
        });
        let errors = errors.into_iter().collect::<Result<Vec<_>>>()?;
        let mut rows: Vec<SensitivityRow> = (0..NUM_JOINTS)
            .map(|j| {
                let (mean, std) = mean_std(&errors[j * self.seeds..(j + 1) * self.seeds]);
                SensitivityRow {
                    joint: self.pipeline.skeleton.joint_names[j].clone(),
                    error_nm: mean,
                    std_nm: std,
                }
            })
            .collect();
        rows.sort_by(|a, b| b.error_nm.total_cmp(&a.error_nm).then_with(|| a.joint.cmp(&b.joint)));
        Ok(SensitivityResult { rows })
    }

    /// Uniform noise at `sigma`, filtered at each cutoff. Distortion is the
    /// error of the filtered clean motion.
    pub fn cutoff(&self, sigma: f64, cutoffs: &[f64]) -> Result<CutoffResult> {
        let fs = self.clean.fps;
        let specs = cutoffs.iter().map(|&c| FilterSpec::new(c, fs)).collect::<Result<Vec<_>>>()?;
        let noisy = par_map(&(0..self.seeds).collect::<Vec<_>>(), |&k| add_uniform_noise(self.clean, sigma, self.seed(k)));
        let noisy = noisy.into_iter().collect::<Result<Vec<_>>>()?;
        let unfiltered = noisy.iter().map(|m| self.error(m)).collect::<Result<Vec<_>>>()?;
        let jobs: Vec<(usize, usize)> = (0..specs.len()).flat_map(|i| (0..self.seeds).map(move |k| (i, k))).collect();
        let errors = par_map(&jobs, |&(i, k)| self.error(&filter_motion(&noisy[k], &specs[i])?));
        let errors = errors.into_iter().collect::<Result<Vec<_>>>()?;
        let distortion = par_map(&specs, |s| self.error(&filter_motion(self.clean, s)?));
        let distortion = distortion.into_iter().collect::<Result<Vec<_>>>()?;
        let rows = cutoffs
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let (mean, std) = mean_std(&errors[i * self.seeds..(i + 1) * self.seeds]);
                CutoffRow {
                    cutoff_hz: c,
                    noise_error_nm: mean,
                    noise_std_nm: std,
                    distortion_nm: distortion[i],
                }
            })
            .collect();
        Ok(CutoffResult {
            sigma,
            unfiltered: SweepRow::from_trials(sigma, &unfiltered),
            rows,
        })
    }

    /// Realistic profile against magnitude-matched uniform noise, each raw
    /// and filtered at `cutoff_hz`.
    pub fn realistic(&self, profile: &NoiseProfile, cutoff_hz: f64) -> Result<RealisticResult> {
        profile.validate()?;
        let spec = FilterSpec::new(cutoff_hz, self.clean.fps)?;
        let sigma = profile.matched_uniform_sigma();
        let trials = par_map(&(0..self.seeds).collect::<Vec<_>>(), |&k| -> Result<[f64; 4]> {
            let seed = self.seed(k);
            let uni = add_uniform_noise(self.clean, sigma, seed)?;
            let real = add_realistic_noise_seeded(self.clean, profile, seed)?;
            Ok([
                self.error(&uni)?,
                self.error(&filter_motion(&uni, &spec)?)?,
                self.error(&real)?,
                self.error(&filter_motion(&real, &spec)?)?,
            ])
        });
        let trials = trials.into_iter().collect::<Result<Vec<_>>>()?;
        let cell = |model: &str, filtered: bool, idx: usize| {
            let v: Vec<f64> = trials.iter().map(|t| t[idx]).collect();
            let (error_nm, std_nm) = mean_std(&v);
            RealisticCell {
                model: model.into(),
                filtered,
                error_nm,
                std_nm,
            }
        };
        Ok(RealisticResult {
            uniform_sigma: sigma,
            cutoff_hz,
            cells: vec![
                cell("uniform", false, 0),
                cell("uniform", true, 1),
                cell("realistic", false, 2),
                cell("realistic", true, 3),
            ],
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityRow {
    pub joint: String,
    pub error_nm: f64,
    pub std_nm: f64,
}

/// One row per joint, most sensitive first.
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityResult {
    pub rows: Vec<SensitivityRow>,
}

impl SensitivityResult {
    pub fn error(&self, joint: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.joint == joint).map(|r| r.error_nm)
    }

    /// Mean score over the named joints.
    pub fn group_mean(&self, joints: &[&str]) -> Option<f64> {
        let v = joints.iter().map(|j| self.error(j)).collect::<Option<Vec<_>>>()?;
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }

    /// `joint,error_nm`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("joint,error_nm\n");
        for r in &self.rows {
            writeln!(s, "{},{}", r.joint, r.error_nm).unwrap();
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CutoffRow {
    pub cutoff_hz: f64,
    pub noise_error_nm: f64,
    pub noise_std_nm: f64,
    pub distortion_nm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CutoffResult {
    pub sigma: f64,
    /// The same noisy trials without filtering.
    pub unfiltered: SweepRow,
    pub rows: Vec<CutoffRow>,
}

impl CutoffResult {
    pub fn row(&self, cutoff_hz: f64) -> Option<&CutoffRow> {
        self.rows.iter().find(|r| (r.cutoff_hz - cutoff_hz).abs() < 1e-12)
    }

    /// `cutoff_hz,noise_error_nm,distortion_nm`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("cutoff_hz,noise_error_nm,distortion_nm\n");
        for r in &self.rows {
            writeln!(s, "{},{},{}", r.cutoff_hz, r.noise_error_nm, r.distortion_nm).unwrap();
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RealisticCell {
    pub model: String,
    pub filtered: bool,
    pub error_nm: f64,
    pub std_nm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RealisticResult {
    /// Sigma of the uniform comparison noise.
    pub uniform_sigma: f64,
    pub cutoff_hz: f64,
    pub cells: Vec<RealisticCell>,
}

impl RealisticResult {
    pub fn error(&self, model: &str, filtered: bool) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.model == model && c.filtered == filtered)
            .map(|c| c.error_nm)
    }

    /// `model,filtered,error_nm`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,filtered,error_nm\n");
        for c in &self.cells {
            writeln!(s, "{},{},{}", c.model, c.filtered, c.error_nm).unwrap();
        }
        s
    }
}

/// `0, step, 2 step, ..., max`
pub fn sigma_grid(step: f64, max: f64) -> Vec<f64> {
    let n = (max / step).round() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}

pub const DEFAULT_SEEDS: usize = 10;
pub const DEFAULT_SIGMA: f64 = 0.05;
pub const DEFAULT_CUTOFF_HZ: f64 = 6.0;

/// Sigma grid of the amplification sweep: 0 to 0.2 rad in 0.01 steps.
pub fn default_sigmas() -> Vec<f64> {
    sigma_grid(0.01, 0.2)
}

/// Cutoffs of the trade-off sweep: 2 to 14 Hz in 1 Hz steps.
pub fn default_cutoffs() -> Vec<f64> {
    (2..=14).map(f64::from).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{synth_walk, GaitConfig};
    use crate::noise::realistic_profile;
    use crate::rnea::torque_error;
    use crate::derivatives::BOUNDARY_FRAMES;

    fn setup() -> (Pipeline, MotionSequence) {
        (Pipeline::default(), synth_walk(2.0, 30.0, &GaitConfig::default()).unwrap())
    }

    #[test]
    fn zero_sigma_zero_error() {
        let (p, m) = setup();
        let e = Experiment::new(&p, &m, 3, 42).unwrap();
        let r = e.amplification(&[0.0, 0.05]).unwrap();
        assert_eq!(r.rows[0].mean_nm, 0.0);
        assert_eq!(r.rows[0].std_nm, 0.0);
        assert!(r.rows[1].mean_nm > 0.0);
        assert_eq!(r.rows.len(), 2);
    }

    #[test]
    fn aggregation_matches_naive_loop() {
        let (p, m) = setup();
        let e = Experiment::new(&p, &m, 4, 7).unwrap();
        let r = e.amplification(&[0.03]).unwrap();
        let reference = p.dynamics(&m).unwrap();
        let mut errs = Vec::new();
        for k in 0..4u64 {
            let noisy = add_uniform_noise(&m, 0.03, 7 + k).unwrap();
            errs.push(torque_error(&p.dynamics(&noisy).unwrap(), &reference, BOUNDARY_FRAMES).unwrap());
        }
        let mean = errs.iter().sum::<f64>() / 4.0;
        let var = errs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0;
        assert!((r.rows[0].mean_nm - mean).abs() < 1e-12);
        assert!((r.rows[0].std_nm - var.sqrt()).abs() < 1e-12);
        assert_eq!(r.rows[0].n, 4);
    }

    #[test]
    fn slope_and_correlation() {
        let r = SweepResult {
            rows: [0.0, 0.1, 0.2, 0.3]
                .iter()
                .map(|&x| SweepRow {
                    x,
                    mean_nm: 50.0 * x,
                    std_nm: 0.0,
                    n: 1,
                })
                .collect(),
        };
        assert!((r.slope() - 50.0).abs() < 1e-12);
        assert!((r.correlation() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sensitivity_has_every_joint_sorted() {
        let (p, m) = setup();
        let e = Experiment::new(&p, &m, 2, 1).unwrap();
        let s = e.sensitivity(0.05).unwrap();
        assert_eq!(s.rows.len(), NUM_JOINTS);
        assert!(s.rows.windows(2).all(|w| w[0].error_nm >= w[1].error_nm));
        assert_eq!(s.to_csv().lines().count(), NUM_JOINTS + 1);
    }

    #[test]
    fn csv_row_counts() {
        let (p, m) = setup();
        let e = Experiment::new(&p, &m, 2, 1).unwrap();
        let a = e.amplification(&default_sigmas()).unwrap();
        assert_eq!(a.amplification_csv().lines().count(), 22);
        let c = e.cutoff(0.05, &[4.0, 6.0, 8.0]).unwrap();
        assert_eq!(c.to_csv().lines().count(), 4);
        assert_eq!(c.to_csv().lines().next().unwrap(), "cutoff_hz,noise_error_nm,distortion_nm");
        let r = e.realistic(&realistic_profile(), 6.0).unwrap();
        assert_eq!(r.to_csv().lines().count(), 5);
    }

    #[test]
    fn deterministic_tables() {
        let (p, m) = setup();
        let e = Experiment::new(&p, &m, 3, 11).unwrap();
        let a = e.realistic(&realistic_profile(), 6.0).unwrap();
        let b = e.realistic(&realistic_profile(), 6.0).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn rejects_zero_seeds_and_bad_cutoff() {
        let (p, m) = setup();
        assert!(Experiment::new(&p, &m, 0, 1).is_err());
        let e = Experiment::new(&p, &m, 1, 1).unwrap();
        assert!(e.cutoff(0.05, &[15.0]).is_err());
    }

    #[test]
    fn grids() {
        let s = default_sigmas();
        assert_eq!(s.len(), 21);
        assert_eq!(s[0], 0.0);
        assert!((s[20] - 0.2).abs() < 1e-15);
        assert_eq!(default_cutoffs().len(), 13);
    }
}
