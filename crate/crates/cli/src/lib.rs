//! Command implementations behind the `posekit` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use posekit_core::bench::{
    rmse_metrics, run_sweep, write_csv, write_summary_csv, write_trials_csv, SummaryRow, TrialRecord,
    DEFAULT_GROUP_KEYS,
};
use posekit_core::homography::CameraPose;
use posekit_core::io::{
    CorrespondenceFile, ErrorRecord, EulerDegrees, Frame, FrameReport, GroundTruthFile, PoseRecord,
    PoseReport, ScenarioFile, TruthRecord,
};
use posekit_core::scene::{perturb_pixels_with, project_target, random_pose, rng_from_seed, GroundTruthPose};
use posekit_core::{
    solve_pose, DistanceWeighting, Error, NormalFusion, PoseSolution, SmoothedNormal, SolverConfig,
};

pub const EXIT_PARSE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    /// Malformed or invalid input file or flag.
    Parse(String),
    /// A solve or simulation failed; for `solve` the report was still written.
    Solver(ErrorRecord),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Solver(_) => EXIT_SOLVER,
            CliError::Io(_) => EXIT_IO,
        }
    }

    pub fn record(&self) -> ErrorRecord {
        match self {
            CliError::Parse(m) => ErrorRecord { kind: "parse".into(), message: m.clone() },
            CliError::Solver(r) => r.clone(),
            CliError::Io(m) => ErrorRecord { kind: "io".into(), message: m.clone() },
        }
    }
}

#[derive(Serialize)]
struct ErrorEnvelope<'a> {
    error: &'a ErrorRecord,
}

/// Single-line JSON error record for stderr.
pub fn error_json(err: &CliError) -> String {
    serde_json::to_string(&ErrorEnvelope { error: &err.record() }).expect("error records serialize")
}

fn parse_err(e: Error) -> CliError {
    CliError::Parse(e.to_string())
}

fn solver_err(e: Error) -> CliError {
    CliError::Solver(ErrorRecord::from(&e))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &[u8]) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => write_text(p, bytes),
        None => std::io::stdout().write_all(bytes).map_err(|e| CliError::Io(e.to_string())),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FusionArg {
    Algebraic,
    Eigen,
    Smooth,
}

impl From<FusionArg> for NormalFusion {
    fn from(f: FusionArg) -> Self {
        match f {
            FusionArg::Algebraic => NormalFusion::Algebraic,
            FusionArg::Eigen => NormalFusion::Eigen,
            FusionArg::Smooth => NormalFusion::Smooth,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum WeightingArg {
    Uniform,
    Norm,
}

impl From<WeightingArg> for DistanceWeighting {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::Uniform => DistanceWeighting::Uniform,
            WeightingArg::Norm => DistanceWeighting::NormWeighted,
        }
    }
}

#[derive(Clone, Debug, Default, Args)]
pub struct SolverArgs {
    /// Upper bound on the number of quads used for the normal.
    #[arg(long)]
    pub max_quads: Option<usize>,
    /// Averaging of per-point plane distances.
    #[arg(long, value_enum)]
    pub d_weighting: Option<WeightingArg>,
}

impl SolverArgs {
    fn apply(&self, mut cfg: SolverConfig) -> SolverConfig {
        if let Some(m) = self.max_quads {
            cfg.max_m = m;
        }
        if let Some(w) = self.d_weighting {
            cfg.d_weighting = w.into();
        }
        cfg
    }
}

#[derive(Debug, Parser)]
#[command(name = "posekit", version, about = "Camera pose from coplanar reference points")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve every frame of a correspondence file.
    Solve {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "algebraic")]
        fusion: FusionArg,
        #[command(flatten)]
        solver: SolverArgs,
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a correspondence file and its ground-truth sidecar from a scenario.
    Simulate {
        scenario: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth path; defaults to the output path with a `.truth.json` suffix.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run the Monte-Carlo sweep of a scenario and write trial and summary CSVs.
    Bench {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Restricts the sweep to these fusion methods.
        #[arg(long, value_enum)]
        fusion: Vec<FusionArg>,
        #[command(flatten)]
        solver: SolverArgs,
        /// Trial CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Summary CSV path; defaults to the trial path with a `.summary.csv` suffix.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Worker threads; falls back to POSEKIT_THREADS, then to all cores.
        #[arg(long)]
        threads: Option<usize>,
        /// Records per-solve wall time in the time_ns column.
        #[arg(long)]
        timing: bool,
    },
    /// Per-frame attitude and position series against ground truth, as CSV.
    PlotData {
        input: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Solves each frame in order. Smooth fusion carries one session across all
/// frames; a frame whose normal stage fails does not advance it.
pub fn cmd_solve(file: &CorrespondenceFile, cfg: &SolverConfig) -> Result<PoseReport, CliError> {
    cfg.validate().map_err(parse_err)?;
    let sets = file.correspondence_sets().map_err(parse_err)?;
    let mut session = SmoothedNormal::new();
    let frames = sets
        .iter()
        .enumerate()
        .map(|(frame, c)| match solve_pose(c, cfg, Some(&mut session)) {
            Ok(sol) => FrameReport { frame, pose: Some(PoseRecord::from(&sol)), error: None },
            Err(e) => FrameReport { frame, pose: None, error: Some(ErrorRecord::from(&e)) },
        })
        .collect();
    Ok(PoseReport::new(cfg.normal_fusion, frames))
}

/// Observations and true poses for the first sigma and distance cell of the
/// scenario. Frames are pixels; the file carries the intrinsics.
pub fn cmd_simulate(
    scenario: &ScenarioFile,
    seed: u64,
) -> Result<(CorrespondenceFile, GroundTruthFile), CliError> {
    let spec = scenario.sweep_spec(false).map_err(parse_err)?;
    let sigma = spec.sigma_list[0];
    let constraints = spec.pose_constraints(spec.d_over_extent_list[0]);
    let mut rng = rng_from_seed(seed);
    let mut pose: Option<GroundTruthPose> = None;
    let mut frames = Vec::new();
    let mut truth = Vec::new();
    for i in 0..scenario.sequence.frames {
        let p = match pose {
            Some(p) if scenario.sequence.static_scene => p,
            _ => random_pose(&mut rng, &constraints, &spec.target).map_err(solver_err)?,
        };
        pose = Some(p);
        let obs = project_target(&p, &spec.target, &spec.intrinsics).map_err(solver_err)?;
        let px = perturb_pixels_with(&obs.pixels, sigma, &mut rng).map_err(solver_err)?;
        frames.push(Frame::Pixels(px.iter().map(|v| [v.x, v.y]).collect()));
        truth.push(TruthRecord::new(i, &p));
    }
    let file = CorrespondenceFile {
        target: spec.target.points.iter().map(|x| [x.x, x.y]).collect(),
        intrinsics: Some(spec.intrinsics),
        frames,
    };
    Ok((file, GroundTruthFile::new(truth)))
}

pub fn threads_from_env() -> Option<usize> {
    std::env::var("POSEKIT_THREADS").ok().and_then(|v| v.trim().parse().ok()).filter(|n| *n > 0)
}

#[derive(Clone, Debug, Default)]
pub struct BenchOptions {
    pub seed: Option<u64>,
    pub methods: Vec<NormalFusion>,
    pub solver: SolverArgs,
    pub threads: Option<usize>,
    pub timing: bool,
}

/// Runs the scenario sweep on a dedicated pool of `threads` workers (all
/// cores when unset).
pub fn cmd_bench(
    scenario: &ScenarioFile,
    opts: &BenchOptions,
) -> Result<(Vec<TrialRecord>, Vec<SummaryRow>), CliError> {
    let mut spec = scenario.sweep_spec(opts.timing).map_err(parse_err)?;
    if let Some(seed) = opts.seed {
        spec.master_seed = seed;
    }
    if !opts.methods.is_empty() {
        spec.methods = opts.methods.clone();
    }
    spec.solver = opts.solver.apply(spec.solver);
    spec.validate().map_err(parse_err)?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Io(e.to_string()))?;
    let records = pool.install(|| run_sweep(&spec)).map_err(parse_err)?;
    let summary = rmse_metrics(&records, &DEFAULT_GROUP_KEYS).map_err(parse_err)?;
    Ok((records, summary))
}

pub fn trials_csv(records: &[TrialRecord]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_trials_csv(records, &mut buf).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(buf)
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_summary_csv(rows, &mut buf).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(buf)
}

/// One frame of the plot-data series. Angles in degrees, positions are the
/// camera position in the target frame, meters. Estimates are empty when the
/// solve failed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlotRow {
    pub frame: usize,
    pub roll_true_deg: f64,
    pub roll_algebraic_deg: Option<f64>,
    pub roll_smooth_deg: Option<f64>,
    pub pitch_true_deg: f64,
    pub pitch_algebraic_deg: Option<f64>,
    pub pitch_smooth_deg: Option<f64>,
    pub yaw_true_deg: f64,
    pub yaw_algebraic_deg: Option<f64>,
    pub yaw_smooth_deg: Option<f64>,
    pub x_true_m: f64,
    pub x_algebraic_m: Option<f64>,
    pub x_smooth_m: Option<f64>,
    pub y_true_m: f64,
    pub y_algebraic_m: Option<f64>,
    pub y_smooth_m: Option<f64>,
    pub z_true_m: f64,
    pub z_algebraic_m: Option<f64>,
    pub z_smooth_m: Option<f64>,
}

type Axes = ([f64; 3], [f64; 3]);

fn axes(pose: &impl CameraPose) -> Axes {
    let e = EulerDegrees::of(pose.rotation());
    ([e.roll, e.pitch, e.yaw], pose.position_in_target().into())
}

/// Per-frame series of the algebraic and smoothed solutions next to the truth.
pub fn cmd_plot_data(
    file: &CorrespondenceFile,
    truth: &GroundTruthFile,
    cfg: &SolverConfig,
) -> Result<Vec<PlotRow>, CliError> {
    let sets = file.correspondence_sets().map_err(parse_err)?;
    if truth.frames.len() != sets.len() {
        return Err(CliError::Parse(format!(
            "{} frames but {} ground-truth records",
            sets.len(),
            truth.frames.len()
        )));
    }
    let alg_cfg = SolverConfig { normal_fusion: NormalFusion::Algebraic, ..*cfg };
    let smooth_cfg = SolverConfig { normal_fusion: NormalFusion::Smooth, ..*cfg };
    let mut session = SmoothedNormal::new();
    sets.iter()
        .zip(&truth.frames)
        .enumerate()
        .map(|(frame, (c, t))| {
            let (ta, tp) = axes(&t.pose().map_err(parse_err)?);
            let pick = |s: &Option<PoseSolution>| s.as_ref().map(axes);
            let alg = pick(&solve_pose(c, &alg_cfg, None).ok());
            let smooth = pick(&solve_pose(c, &smooth_cfg, Some(&mut session)).ok());
            let a = |i: usize| alg.map(|(e, _)| e[i]);
            let ap = |i: usize| alg.map(|(_, p)| p[i]);
            let s = |i: usize| smooth.map(|(e, _)| e[i]);
            let sp = |i: usize| smooth.map(|(_, p)| p[i]);
            Ok(PlotRow {
                frame,
                roll_true_deg: ta[0],
                roll_algebraic_deg: a(0),
                roll_smooth_deg: s(0),
                pitch_true_deg: ta[1],
                pitch_algebraic_deg: a(1),
                pitch_smooth_deg: s(1),
                yaw_true_deg: ta[2],
                yaw_algebraic_deg: a(2),
                yaw_smooth_deg: s(2),
                x_true_m: tp[0],
                x_algebraic_m: ap(0),
                x_smooth_m: sp(0),
                y_true_m: tp[1],
                y_algebraic_m: ap(1),
                y_smooth_m: sp(1),
                z_true_m: tp[2],
                z_algebraic_m: ap(2),
                z_smooth_m: sp(2),
            })
        })
        .collect()
}

/// Executes a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve { input, fusion, solver, out } => {
            let file = CorrespondenceFile::from_json(&read_text(&input)?).map_err(parse_err)?;
            let cfg = solver.apply(SolverConfig { normal_fusion: fusion.into(), ..SolverConfig::default() });
            let report = cmd_solve(&file, &cfg)?;
            emit(out.as_deref(), report.to_json().as_bytes())?;
            match report.frames.iter().find_map(|f| f.error.as_ref()) {
                Some(e) => Err(CliError::Solver(e.clone())),
                None => Ok(()),
            }
        }
        Command::Simulate { scenario, seed, out, truth } => {
            let s = ScenarioFile::from_json(&read_text(&scenario)?).map_err(parse_err)?;
            let (file, gt) = cmd_simulate(&s, seed.unwrap_or(s.sweep.seed))?;
            write_text(&out, file.to_json().as_bytes())?;
            let truth = truth.unwrap_or_else(|| with_suffix(&out, ".truth.json"));
            write_text(&truth, gt.to_json().as_bytes())
        }
        Command::Bench { scenario, seed, fusion, solver, out, summary, threads, timing } => {
            let s = ScenarioFile::from_json(&read_text(&scenario)?).map_err(parse_err)?;
            let opts = BenchOptions {
                seed,
                methods: fusion.into_iter().map(NormalFusion::from).collect(),
                solver,
                threads: threads.or_else(threads_from_env),
                timing,
            };
            let (records, rows) = cmd_bench(&s, &opts)?;
            emit(out.as_deref(), &trials_csv(&records)?)?;
            let summary = summary.or_else(|| out.as_deref().map(|o| with_suffix(o, ".summary.csv")));
            match summary {
                Some(p) => write_text(&p, &summary_csv(&rows)?),
                None => Ok(()),
            }
        }
        Command::PlotData { input, truth, solver, out } => {
            let file = CorrespondenceFile::from_json(&read_text(&input)?).map_err(parse_err)?;
            let gt = GroundTruthFile::from_json(&read_text(&truth)?).map_err(parse_err)?;
            let rows = cmd_plot_data(&file, &gt, &solver.apply(SolverConfig::default()))?;
            let mut buf = Vec::new();
            write_csv(&rows, &mut buf).map_err(|e| CliError::Io(e.to_string()))?;
            emit(out.as_deref(), &buf)
        }
    }
}
