use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use idyn::analysis::{default_cutoffs, default_sigmas, Experiment, DEFAULT_CUTOFF_HZ, DEFAULT_SEEDS, DEFAULT_SIGMA};
use idyn::derivatives::BOUNDARY_FRAMES;
use idyn::filtering::{filter_motion, FilterSpec};
use idyn::motion::{synth_walk, GaitConfig, MotionSequence};
use idyn::noise::{add_realistic_noise_seeded, add_uniform_noise, realistic_profile, NoiseProfile};
use idyn::pipeline::Pipeline;
use idyn::refinement::{refine_and_evaluate, RefinementConfig, StepSchedule};
use idyn::rnea::DynamicsMode;
use idyn::segments::BspTable;
use idyn::skeleton::{default_skeleton, Skeleton, DEFAULT_MASS, TEMPLATE_HEIGHT};

/// Inverse dynamics and pose-noise analysis for SMPL motion.
#[derive(Parser, Debug)]
#[command(name = "idyn", version)]
struct Cli {
    /// Worker threads for parallel sweeps [default: available cores]
    #[arg(long, global = true, display_order = 100)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a procedural walking motion
    Synth(SynthArgs),
    /// Add pose noise to a motion
    Noise(NoiseArgs),
    /// Zero-phase low-pass filter a motion
    Filter(FilterArgs),
    /// Compute joint forces and torques as CSV
    Id(IdArgs),
    /// Run one noise-propagation experiment and write its CSV
    Analyze(AnalyzeArgs),
    /// Refine a noisy motion against the physics loss
    Refine(RefineArgs),
    /// Run every experiment and the refinement into one directory
    Repro(ReproArgs),
}

#[derive(Args, Debug, Clone)]
struct BodyArgs {
    /// Total body mass in kg
    #[arg(long, default_value_t = DEFAULT_MASS)]
    mass: f64,
    /// Body height in m
    #[arg(long, default_value_t = TEMPLATE_HEIGHT)]
    height: f64,
    /// Skeleton JSON replacing the scaled template
    #[arg(long)]
    skeleton: Option<PathBuf>,
    /// Segment parameter table JSON replacing the built-in one
    #[arg(long)]
    segments: Option<PathBuf>,
    /// Dynamics convention
    #[arg(long, value_enum, default_value_t = Mode::Joint)]
    mode: Mode,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Mode {
    /// Segment mass at the joint
    Joint,
    /// Segment mass at its centre of mass
    Com,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Duration in seconds
    #[arg(long, default_value_t = 4.0)]
    duration: f64,
    /// Frame rate in Hz
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    /// Gait parameters JSON (missing fields keep their defaults)
    #[arg(long)]
    gait: Option<PathBuf>,
    /// Output .motion.json
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum ProfileKind {
    Uniform,
    Realistic,
}

#[derive(Args, Debug)]
struct NoiseArgs {
    /// Input .motion.json
    #[arg(long)]
    input: PathBuf,
    /// Output .motion.json
    #[arg(long)]
    out: PathBuf,
    /// Noise model
    #[arg(long, value_enum, default_value_t = ProfileKind::Uniform)]
    profile: ProfileKind,
    /// Noise std in rad (uniform model)
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    /// Noise profile JSON (realistic model)
    #[arg(long)]
    profile_file: Option<PathBuf>,
    /// Random seed
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args, Debug)]
struct FilterArgs {
    /// Input .motion.json
    #[arg(long)]
    input: PathBuf,
    /// Output .motion.json
    #[arg(long)]
    out: PathBuf,
    /// Low-pass cutoff in Hz
    #[arg(long, default_value_t = DEFAULT_CUTOFF_HZ)]
    cutoff_hz: f64,
}

#[derive(Args, Debug)]
struct IdArgs {
    /// Input .motion.json
    #[arg(long)]
    input: PathBuf,
    /// Output CSV (frame,joint_name,fx,fy,fz,tx,ty,tz), interior frames only
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    body: BodyArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Experiment_ {
    Amplification,
    Sensitivity,
    Cutoff,
    Realistic,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Experiment to run
    #[arg(value_enum)]
    experiment: Experiment_,
    /// Clean .motion.json [default: 4 s synthetic walk at 30 fps]
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output CSV
    #[arg(long)]
    out: PathBuf,
    /// Noise std in rad (sensitivity, cutoff)
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    /// Trials per sweep point
    #[arg(long, default_value_t = DEFAULT_SEEDS)]
    seeds: usize,
    /// Seed of the first trial; trial k uses seed + k
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Cutoff in Hz for the filtered cells (realistic)
    #[arg(long, default_value_t = DEFAULT_CUTOFF_HZ)]
    cutoff_hz: f64,
    /// Noise profile JSON (realistic)
    #[arg(long)]
    profile_file: Option<PathBuf>,
    #[command(flatten)]
    body: BodyArgs,
}

#[derive(Args, Debug, Clone)]
struct RefineOverrides {
    /// Weight of the torque smoothness term
    #[arg(long, default_value_t = 10.0)]
    lambda_s: f64,
    /// Weight of the torque magnitude term
    #[arg(long, default_value_t = 1.0)]
    lambda_m: f64,
    /// Weight of the pose regularizer
    #[arg(long, default_value_t = 5.0)]
    lambda_r: f64,
    /// Torque norm above which the magnitude term applies, Nm
    #[arg(long, default_value_t = 100.0)]
    tau_max: f64,
    /// Adam iterations
    #[arg(long, default_value_t = 200)]
    iterations: usize,
    /// Adam step size
    #[arg(long, default_value_t = 0.01)]
    step_size: f64,
    /// Step size schedule (constant|cosine)
    #[arg(long, default_value = "constant")]
    schedule: StepSchedule,
    /// Keep the root translation fixed
    #[arg(long)]
    freeze_translation: bool,
    /// Low-pass cutoff in Hz applied inside the loss [default: off]
    #[arg(long)]
    filter_cutoff_hz: Option<f64>,
}

impl RefineOverrides {
    fn config(&self) -> RefinementConfig {
        RefinementConfig {
            lambda_smooth: self.lambda_s,
            lambda_magnitude: self.lambda_m,
            lambda_reg: self.lambda_r,
            tau_max: self.tau_max,
            iterations: self.iterations,
            step_size: self.step_size,
            schedule: self.schedule,
            freeze_translation: self.freeze_translation,
            filter_cutoff_hz: self.filter_cutoff_hz,
            ..RefinementConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct RefineArgs {
    /// Noisy .motion.json
    #[arg(long)]
    input: PathBuf,
    /// Clean reference .motion.json used for the report
    #[arg(long)]
    clean: PathBuf,
    /// Refined .motion.json
    #[arg(long)]
    out: PathBuf,
    /// Report JSON
    #[arg(long)]
    report: PathBuf,
    #[command(flatten)]
    refine: RefineOverrides,
    #[command(flatten)]
    body: BodyArgs,
}

#[derive(Args, Debug)]
struct ReproArgs {
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Trials per sweep point
    #[arg(long, default_value_t = DEFAULT_SEEDS)]
    seeds: usize,
    /// Seed of the first trial
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Noise std in rad for sensitivity, cutoff and refinement
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    /// Cutoff in Hz for the filtered realistic cells
    #[arg(long, default_value_t = DEFAULT_CUTOFF_HZ)]
    cutoff_hz: f64,
    #[command(flatten)]
    refine: RefineOverrides,
    #[command(flatten)]
    body: BodyArgs,
}

/// Usage problems exit with 2, failures during computation with 1.
enum Failure {
    Usage(anyhow::Error),
    Compute(anyhow::Error),
}

type Outcome<T> = std::result::Result<T, Failure>;

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn compute<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Compute(e.into())
}

fn load_motion(path: &Path) -> Outcome<MotionSequence> {
    MotionSequence::load(path).with_context(|| format!("reading motion {}", path.display())).map_err(usage)
}

fn check_output(path: &Path) -> Outcome<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = parent {
        if !dir.is_dir() {
            return Err(usage(anyhow!("output directory {} does not exist", dir.display())));
        }
    }
    Ok(())
}

fn write(path: &Path, contents: &str) -> Outcome<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display())).map_err(compute)
}

fn manifest_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join("manifest.json")
    } else {
        let mut s = out.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }
}

fn write_manifest(out: &Path, command: &str, params: Value, outputs: &[&Path]) -> Outcome<()> {
    let m = json!({
        "tool": "idyn",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "parameters": params,
        "outputs": outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    write(&manifest_path(out), &serde_json::to_string_pretty(&m).expect("manifest serializes"))
}

fn pipeline(body: &BodyArgs) -> Outcome<Pipeline> {
    let skel = match &body.skeleton {
        Some(p) => Skeleton::load(p).with_context(|| format!("reading skeleton {}", p.display())).map_err(usage)?,
        None => default_skeleton(body.mass, body.height).map_err(usage)?,
    };
    let table = match &body.segments {
        Some(p) => BspTable::load(p).with_context(|| format!("reading segment table {}", p.display())).map_err(usage)?,
        None => BspTable::default(),
    };
    let mode = match body.mode {
        Mode::Joint => DynamicsMode::JointMass,
        Mode::Com => DynamicsMode::ComCorrected,
    };
    Pipeline::new(skel, &table, mode).map_err(usage)
}

fn body_json(body: &BodyArgs) -> Value {
    json!({
        "mass": body.mass,
        "height": body.height,
        "skeleton": body.skeleton.as_ref().map(|p| p.display().to_string()),
        "segments": body.segments.as_ref().map(|p| p.display().to_string()),
        "mode": format!("{:?}", body.mode).to_lowercase(),
    })
}

fn load_profile(path: &Option<PathBuf>) -> Outcome<NoiseProfile> {
    match path {
        Some(p) => NoiseProfile::load(p).with_context(|| format!("reading noise profile {}", p.display())).map_err(usage),
        None => Ok(realistic_profile()),
    }
}

fn default_walk() -> Outcome<MotionSequence> {
    synth_walk(4.0, 30.0, &GaitConfig::default()).map_err(compute)
}

fn run_synth(a: &SynthArgs) -> Outcome<()> {
    check_output(&a.out)?;
    let gait = match &a.gait {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(usage)?;
            serde_json::from_str(&text).with_context(|| format!("parsing gait {}", p.display())).map_err(usage)?
        }
        None => GaitConfig::default(),
    };
    let m = synth_walk(a.duration, a.fps, &gait).map_err(usage)?;
    m.save(&a.out).map_err(compute)?;
    write_manifest(&a.out, "synth", json!({"duration": a.duration, "fps": a.fps, "gait": gait}), &[&a.out])?;
    println!("wrote {} frames at {} fps to {}", m.len(), m.fps, a.out.display());
    Ok(())
}

fn run_noise(a: &NoiseArgs) -> Outcome<()> {
    check_output(&a.out)?;
    let m = load_motion(&a.input)?;
    let (noisy, params) = match a.profile {
        ProfileKind::Uniform => (
            add_uniform_noise(&m, a.sigma, a.seed).map_err(usage)?,
            json!({"profile": "uniform", "sigma": a.sigma, "seed": a.seed}),
        ),
        ProfileKind::Realistic => {
            let p = load_profile(&a.profile_file)?;
            let noisy = add_realistic_noise_seeded(&m, &p, a.seed).map_err(usage)?;
            (noisy, json!({"profile": "realistic", "noise_profile": p, "seed": a.seed}))
        }
    };
    noisy.save(&a.out).map_err(compute)?;
    write_manifest(&a.out, "noise", params, &[&a.out])?;
    println!("wrote noisy motion to {}", a.out.display());
    Ok(())
}

fn run_filter(a: &FilterArgs) -> Outcome<()> {
    check_output(&a.out)?;
    let m = load_motion(&a.input)?;
    let spec = FilterSpec::new(a.cutoff_hz, m.fps).map_err(usage)?;
    let f = filter_motion(&m, &spec).map_err(usage)?;
    f.save(&a.out).map_err(compute)?;
    write_manifest(&a.out, "filter", json!({"cutoff_hz": a.cutoff_hz, "order": 4}), &[&a.out])?;
    println!("wrote filtered motion ({} Hz cutoff) to {}", a.cutoff_hz, a.out.display());
    Ok(())
}

fn run_id(a: &IdArgs) -> Outcome<()> {
    check_output(&a.out)?;
    let m = load_motion(&a.input)?;
    let p = pipeline(&a.body)?;
    let d = p.dynamics(&m).map_err(compute)?;
    write(&a.out, &d.to_csv(&p.skeleton.joint_names, BOUNDARY_FRAMES))?;
    write_manifest(&a.out, "id", json!({"body": body_json(&a.body), "boundary_frames": BOUNDARY_FRAMES}), &[&a.out])?;
    println!("wrote torques for {} interior frames to {}", m.len() - 2 * BOUNDARY_FRAMES, a.out.display());
    Ok(())
}

fn run_analyze(a: &AnalyzeArgs) -> Outcome<()> {
    check_output(&a.out)?;
    let clean = match &a.input {
        Some(p) => load_motion(p)?,
        None => default_walk()?,
    };
    let p = pipeline(&a.body)?;
    let e = Experiment::new(&p, &clean, a.seeds, a.seed).map_err(usage)?;
    let mut params = json!({
        "experiment": format!("{:?}", a.experiment).to_lowercase(),
        "input": a.input.as_ref().map(|p| p.display().to_string()),
        "seeds": a.seeds,
        "seed": a.seed,
        "body": body_json(&a.body),
    });
    let csv = match a.experiment {
        Experiment_::Amplification => {
            let r = e.amplification(&default_sigmas()).map_err(compute)?;
            println!("slope {:.1} Nm/rad, correlation {:.4}", r.slope(), r.correlation());
            params["sigmas"] = json!(default_sigmas());
            params["slope_nm_per_rad"] = json!(r.slope());
            r.amplification_csv()
        }
        Experiment_::Sensitivity => {
            let r = e.sensitivity(a.sigma).map_err(compute)?;
            println!("most sensitive: {} ({:.2} Nm)", r.rows[0].joint, r.rows[0].error_nm);
            params["sigma"] = json!(a.sigma);
            r.to_csv()
        }
        Experiment_::Cutoff => {
            let r = e.cutoff(a.sigma, &default_cutoffs()).map_err(usage)?;
            println!("unfiltered error {:.2} Nm", r.unfiltered.mean_nm);
            params["sigma"] = json!(a.sigma);
            params["cutoffs_hz"] = json!(default_cutoffs());
            params["unfiltered_nm"] = json!(r.unfiltered.mean_nm);
            r.to_csv()
        }
        Experiment_::Realistic => {
            let profile = load_profile(&a.profile_file)?;
            let r = e.realistic(&profile, a.cutoff_hz).map_err(usage)?;
            for c in &r.cells {
                println!("{:<9} filtered={:<5} {:.2} Nm", c.model, c.filtered, c.error_nm);
            }
            params["cutoff_hz"] = json!(a.cutoff_hz);
            params["uniform_sigma"] = json!(r.uniform_sigma);
            params["noise_profile"] = json!(profile);
            r.to_csv()
        }
    };
    write(&a.out, &csv)?;
    write_manifest(&a.out, "analyze", params, &[&a.out])?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn run_refine(a: &RefineArgs) -> Outcome<()> {
    check_output(&a.out)?;
    check_output(&a.report)?;
    let noisy = load_motion(&a.input)?;
    let clean = load_motion(&a.clean)?;
    let p = pipeline(&a.body)?;
    let config = a.refine.config();
    config.validate().map_err(usage)?;
    let (refined, report) = refine_and_evaluate(&p, &clean, &noisy, &config).map_err(compute)?;
    refined.save(&a.out).map_err(compute)?;
    write(&a.report, &report.to_json())?;
    write_manifest(&a.out, "refine", json!({"refinement": config, "body": body_json(&a.body)}), &[&a.out, &a.report])?;
    print_refinement(&report);
    Ok(())
}

fn print_refinement(r: &idyn::refinement::RefinementReport) {
    println!(
        "torque error {:.2} -> {:.2} Nm ({:.1}% lower); pose error {:.4} -> {:.4} rad ({:+.2}%)",
        r.torque_error_initial_nm,
        r.torque_error_final_nm,
        r.torque_reduction_pct,
        r.pose_error_initial_rad,
        r.pose_error_final_rad,
        r.pose_error_change_pct
    );
}

fn run_repro(a: &ReproArgs) -> Outcome<()> {
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display())).map_err(usage)?;
    let config = a.refine.config();
    config.validate().map_err(usage)?;
    let start = Instant::now();
    let p = pipeline(&a.body)?;
    let clean = default_walk()?;
    let e = Experiment::new(&p, &clean, a.seeds, a.seed).map_err(usage)?;
    let dir = &a.out;
    let path = |name: &str| dir.join(name);

    let amp = e.amplification(&default_sigmas()).map_err(compute)?;
    write(&path("amplification.csv"), &amp.amplification_csv())?;
    let sens = e.sensitivity(a.sigma).map_err(compute)?;
    write(&path("sensitivity.csv"), &sens.to_csv())?;
    let cut = e.cutoff(a.sigma, &default_cutoffs()).map_err(compute)?;
    write(&path("cutoff.csv"), &cut.to_csv())?;
    let profile = realistic_profile();
    let real = e.realistic(&profile, a.cutoff_hz).map_err(usage)?;
    write(&path("realistic.csv"), &real.to_csv())?;

    let noisy = add_uniform_noise(&clean, a.sigma, a.seed).map_err(compute)?;
    let (refined, report) = refine_and_evaluate(&p, &clean, &noisy, &config).map_err(compute)?;
    write(&path("refinement_report.json"), &report.to_json())?;
    for (name, m) in [("clean", &clean), ("noisy", &noisy), ("refined", &refined)] {
        m.save(path(&format!("{name}.motion.json"))).map_err(compute)?;
        let d = p.dynamics(m).map_err(compute)?;
        write(&path(&format!("torques_{name}.csv")), &d.to_csv(&p.skeleton.joint_names, BOUNDARY_FRAMES))?;
    }

    let summary = json!({
        "amplification_slope_nm_per_rad": amp.slope(),
        "amplification_correlation": amp.correlation(),
        "error_at_sigma_nm": amp.row(a.sigma).map(|r| r.mean_nm),
        "cutoff_unfiltered_nm": cut.unfiltered.mean_nm,
        "realistic_uniform_sigma": real.uniform_sigma,
        "most_sensitive_joint": sens.rows[0].joint,
        "torque_reduction_pct": report.torque_reduction_pct,
        "pose_error_change_pct": report.pose_error_change_pct,
        "elapsed_s": start.elapsed().as_secs_f64(),
    });
    write(&path("summary.json"), &serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
    let outputs = [
        "amplification.csv",
        "sensitivity.csv",
        "cutoff.csv",
        "realistic.csv",
        "refinement_report.json",
        "summary.json",
        "clean.motion.json",
        "noisy.motion.json",
        "refined.motion.json",
        "torques_clean.csv",
        "torques_noisy.csv",
        "torques_refined.csv",
    ]
    .map(path);
    let outputs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    write_manifest(
        dir,
        "repro",
        json!({
            "seeds": a.seeds,
            "seed": a.seed,
            "sigma": a.sigma,
            "sigmas": default_sigmas(),
            "cutoffs_hz": default_cutoffs(),
            "cutoff_hz": a.cutoff_hz,
            "noise_profile": profile,
            "refinement": config,
            "body": body_json(&a.body),
            "motion": {"duration": 4.0, "fps": 30.0, "gait": GaitConfig::default()},
        }),
        &outputs,
    )?;

    println!(
        "amplification: {:.1} Nm at sigma {}, slope {:.0} Nm/rad, r = {:.4}",
        amp.row(a.sigma).map_or(f64::NAN, |r| r.mean_nm),
        a.sigma,
        amp.slope(),
        amp.correlation()
    );
    println!("sensitivity: top joints {}, {}, {}", sens.rows[0].joint, sens.rows[1].joint, sens.rows[2].joint);
    if let Some(r6) = cut.row(a.cutoff_hz) {
        println!("cutoff: {:.1} Nm unfiltered, {:.1} Nm at {} Hz", cut.unfiltered.mean_nm, r6.noise_error_nm, a.cutoff_hz);
    }
    for c in &real.cells {
        println!("realistic: {:<9} filtered={:<5} {:.1} Nm", c.model, c.filtered, c.error_nm);
    }
    print_refinement(&report);
    println!("wrote results to {} in {:.1} s", dir.display(), start.elapsed().as_secs_f64());
    Ok(())
}

fn run(cli: &Cli) -> Outcome<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(usage(anyhow!("--jobs must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(compute)?;
    }
    match &cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Noise(a) => run_noise(a),
        Command::Filter(a) => run_filter(a),
        Command::Id(a) => run_id(a),
        Command::Analyze(a) => run_analyze(a),
        Command::Refine(a) => run_refine(a),
        Command::Repro(a) => run_repro(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Compute(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
