//! Monte-Carlo experiment runner: noise and distance sweeps over random
//! poses, per-trial error metrics, RMSE summaries and the far-field and
//! static-sequence studies.

use std::io::{Read, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{
    angle_between, geodesic_angle, rotation_to_euler, wrap_angle, CameraIntrinsics, UnitVector3,
};
use crate::normal::SmoothedNormal;
use crate::pose::{estimate_quad_normals, fuse_normals, solve_pose, NormalFusion, PoseSolution, SolverConfig};
use crate::scene::{
    correspondences_from_pixels, derive_seed, perturb_pixels_with, project_target, random_pose,
    rng_from_seed, GroundTruthPose, PoseConstraints, TargetModel,
};

/// Table 1 reference values from real-hardware runs (position RMSE in m,
/// orientation RMSE in degrees). Documentation only; synthetic sweeps are not
/// expected to reproduce them.
pub const REFERENCE_RMSE_PROPOSED: (f64, f64) = (0.0623, 5.3527);
pub const REFERENCE_RMSE_ITERATIVE_LM: (f64, f64) = (0.1574, 5.2766);
pub const REFERENCE_RMSE_EPNP: (f64, f64) = (0.1773, 5.4194);

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub sigma_list: Vec<f64>,
    /// Camera-to-plane distance as a multiple of the target diameter.
    pub d_over_extent_list: Vec<f64>,
    pub trials: usize,
    /// Noisy frames of the same static pose per trial; the record reports the
    /// last frame, so smooth fusion has `frames_per_trial - 1` refinements.
    pub frames_per_trial: usize,
    pub target: TargetModel,
    pub intrinsics: CameraIntrinsics,
    pub max_tilt: f64,
    /// Lateral camera offset range as a fraction of the plane distance.
    pub lateral_fraction: f64,
    pub methods: Vec<NormalFusion>,
    pub solver: SolverConfig,
    pub master_seed: u64,
    pub measure_time: bool,
}

impl SweepSpec {
    pub fn new(target: TargetModel) -> Self {
        SweepSpec {
            sigma_list: vec![0.0],
            d_over_extent_list: vec![5.0],
            trials: 100,
            frames_per_trial: 1,
            target,
            intrinsics: CameraIntrinsics::default(),
            max_tilt: 30f64.to_radians(),
            lateral_fraction: 0.2,
            methods: vec![NormalFusion::Algebraic],
            solver: SolverConfig::default(),
            master_seed: 0,
            measure_time: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(msg.to_string()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.frames_per_trial == 0 {
            return bad("frames per trial must be at least 1");
        }
        if self.sigma_list.is_empty() || self.d_over_extent_list.is_empty() || self.methods.is_empty() {
            return bad("sigma list, distance list and methods must be nonempty");
        }
        if self.sigma_list.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return bad("noise sigmas must be finite and >= 0");
        }
        if self.d_over_extent_list.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return bad("distance ratios must be finite and > 0");
        }
        if !(self.lateral_fraction >= 0.0) {
            return bad("lateral fraction must be >= 0");
        }
        self.solver.validate()
    }

    /// Pose sampling bounds for one distance cell.
    pub fn pose_constraints(&self, ratio: f64) -> PoseConstraints {
        let d = ratio * self.target.diameter();
        PoseConstraints { d_range: (d, d), max_tilt: self.max_tilt, lateral_range: self.lateral_fraction * d }
    }
}

/// Error metrics of one successful solve against ground truth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialErrors {
    pub pos_err_m: f64,
    pub rot_err_rad: f64,
    pub roll_dev_rad: f64,
    pub pitch_dev_rad: f64,
    pub yaw_dev_rad: f64,
    pub normal_err_rad: f64,
    /// Angle between `r / |r|` and `-xi / |xi|`.
    pub dir_err_rad: f64,
}

impl TrialErrors {
    pub fn evaluate(truth: &GroundTruthPose, est: &PoseSolution) -> Self {
        let et = rotation_to_euler(&truth.rot);
        let ee = rotation_to_euler(&est.rot);
        TrialErrors {
            pos_err_m: (est.xi - truth.xi).norm(),
            rot_err_rad: geodesic_angle(&est.rot, &truth.rot),
            roll_dev_rad: wrap_angle(ee.roll - et.roll).abs(),
            pitch_dev_rad: wrap_angle(ee.pitch - et.pitch).abs(),
            yaw_dev_rad: wrap_angle(ee.yaw - et.yaw).abs(),
            normal_err_rad: est.eta.angle_to(&truth.eta()),
            dir_err_rad: angle_between(&est.r_dir, &-truth.xi),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub trial: u64,
    pub method: NormalFusion,
    pub sigma_px: f64,
    pub d_over_extent: f64,
    pub truth: Option<GroundTruthPose>,
    pub estimate: Option<PoseSolution>,
    pub errors: Option<TrialErrors>,
    /// Machine-readable kind of the error that failed the trial.
    pub failure: Option<&'static str>,
    pub time_ns: Option<u64>,
}

impl TrialRecord {
    pub fn failed(&self) -> bool {
        self.errors.is_none()
    }
}

fn run_trial(spec: &SweepSpec, trial: u64, si: usize, di: usize, t: usize) -> Vec<TrialRecord> {
    let sigma = spec.sigma_list[si];
    let ratio = spec.d_over_extent_list[di];
    let mut rng = rng_from_seed(derive_seed(spec.master_seed, &[si as u64, di as u64, t as u64]));
    let blank = |method| TrialRecord {
        trial,
        method,
        sigma_px: sigma,
        d_over_extent: ratio,
        truth: None,
        estimate: None,
        errors: None,
        failure: None,
        time_ns: None,
    };

    let scene = random_pose(&mut rng, &spec.pose_constraints(ratio), &spec.target).and_then(|pose| {
        let obs = project_target(&pose, &spec.target, &spec.intrinsics)?;
        let frames = (0..spec.frames_per_trial)
            .map(|_| {
                let px = perturb_pixels_with(&obs.pixels, sigma, &mut rng)?;
                correspondences_from_pixels(&spec.target, &px, &spec.intrinsics)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((pose, frames))
    });
    let (pose, frames) = match scene {
        Ok(s) => s,
        Err(e) => {
            return spec
                .methods
                .iter()
                .map(|&m| TrialRecord { failure: Some(e.kind()), ..blank(m) })
                .collect()
        }
    };

    spec.methods
        .iter()
        .map(|&method| {
            let cfg = SolverConfig { normal_fusion: method, ..spec.solver };
            let mut session = SmoothedNormal::new();
            let (last, rest) = frames.split_last().expect("at least one frame");
            for c in rest {
                // Earlier frames only feed the smoothing session.
                let _ = solve_pose(c, &cfg, Some(&mut session));
            }
            let start = Instant::now();
            let result = solve_pose(last, &cfg, Some(&mut session));
            let elapsed = start.elapsed().as_nanos() as u64;
            let mut rec = TrialRecord {
                truth: Some(pose),
                time_ns: spec.measure_time.then_some(elapsed),
                ..blank(method)
            };
            match result {
                Ok(sol) => {
                    rec.errors = Some(TrialErrors::evaluate(&pose, &sol));
                    rec.estimate = Some(sol);
                }
                Err(e) => rec.failure = Some(e.kind()),
            }
            rec
        })
        .collect()
}

/// Runs every (sigma, distance, trial) cell for every method.
///
/// Records are ordered by sigma, distance, trial and then method, regardless of
/// how trials were scheduled across threads. Solver failures are recorded,
/// never propagated.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<TrialRecord>> {
    spec.validate()?;
    let nd = spec.d_over_extent_list.len();
    let cells: Vec<(usize, usize, usize)> = (0..spec.sigma_list.len())
        .flat_map(|si| (0..nd).flat_map(move |di| (0..spec.trials).map(move |t| (si, di, t))))
        .collect();
    let records: Vec<Vec<TrialRecord>> = cells
        .par_iter()
        .map(|&(si, di, t)| {
            let trial = ((si * nd + di) * spec.trials + t) as u64;
            run_trial(spec, trial, si, di, t)
        })
        .collect();
    Ok(records.into_iter().flatten().collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupKey {
    Method,
    Sigma,
    DOverExtent,
}

pub const DEFAULT_GROUP_KEYS: [GroupKey; 3] = [GroupKey::Method, GroupKey::Sigma, GroupKey::DOverExtent];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Option<NormalFusion>,
    pub sigma_px: Option<f64>,
    pub d_over_extent: Option<f64>,
    pub trials: usize,
    pub failures: usize,
    pub failure_rate: f64,
    pub pos_rmse_m: Option<f64>,
    /// Pooled over roll, pitch and yaw deviations.
    pub euler_rmse_deg: Option<f64>,
    pub normal_rmse_deg: Option<f64>,
    pub dir_rmse_deg: Option<f64>,
    pub median_time_ns: Option<u64>,
}

pub fn rmse(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyGroup);
    }
    Ok((values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt())
}

pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

type Key = (Option<NormalFusion>, Option<u64>, Option<u64>);

fn group_key(r: &TrialRecord, keys: &[GroupKey]) -> Key {
    (
        keys.contains(&GroupKey::Method).then_some(r.method),
        keys.contains(&GroupKey::Sigma).then_some(r.sigma_px.to_bits()),
        keys.contains(&GroupKey::DOverExtent).then_some(r.d_over_extent.to_bits()),
    )
}

fn group_records<'a>(records: &'a [TrialRecord], keys: &[GroupKey]) -> Vec<(Key, Vec<&'a TrialRecord>)> {
    let mut groups: Vec<(Key, Vec<&TrialRecord>)> = Vec::new();
    for r in records {
        let k = group_key(r, keys);
        match groups.iter_mut().find(|(gk, _)| *gk == k) {
            Some((_, g)) => g.push(r),
            None => groups.push((k, vec![r])),
        }
    }
    groups
}

/// RMSE summaries per group, in order of first appearance. Failed trials are
/// counted but excluded from the error statistics; a group with no successful
/// trial reports no RMSE values.
pub fn rmse_metrics(records: &[TrialRecord], keys: &[GroupKey]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::EmptyGroup);
    }
    Ok(group_records(records, keys)
        .into_iter()
        .map(|((method, sigma, ratio), group)| {
            let ok: Vec<&TrialErrors> = group.iter().filter_map(|r| r.errors.as_ref()).collect();
            let col = |f: fn(&TrialErrors) -> f64| ok.iter().map(|e| f(e)).collect::<Vec<f64>>();
            let euler: Vec<f64> = ok
                .iter()
                .flat_map(|e| [e.roll_dev_rad, e.pitch_dev_rad, e.yaw_dev_rad])
                .collect();
            let times: Vec<f64> = group
                .iter()
                .filter(|r| !r.failed())
                .filter_map(|r| r.time_ns.map(|t| t as f64))
                .collect();
            let failures = group.len() - ok.len();
            SummaryRow {
                method,
                sigma_px: sigma.map(f64::from_bits),
                d_over_extent: ratio.map(f64::from_bits),
                trials: group.len(),
                failures,
                failure_rate: failures as f64 / group.len() as f64,
                pos_rmse_m: rmse(&col(|e| e.pos_err_m)).ok(),
                euler_rmse_deg: rmse(&euler).ok().map(f64::to_degrees),
                normal_rmse_deg: rmse(&col(|e| e.normal_err_rad)).ok().map(f64::to_degrees),
                dir_rmse_deg: rmse(&col(|e| e.dir_err_rad)).ok().map(f64::to_degrees),
                median_time_ns: median(&times).ok().map(|t| t.round() as u64),
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct FarFieldRow {
    pub method: NormalFusion,
    pub sigma_px: f64,
    pub d_over_extent: f64,
    pub trials: usize,
    pub failures: usize,
    pub median_normal_err_rad: Option<f64>,
    pub median_dir_err_rad: Option<f64>,
}

/// Median normal error against median direction error per cell.
pub fn far_field_study(spec: &SweepSpec) -> Result<Vec<FarFieldRow>> {
    let records = run_sweep(spec)?;
    Ok(group_records(&records, &DEFAULT_GROUP_KEYS)
        .into_iter()
        .map(|(_, group)| {
            let first = group[0];
            let ok: Vec<&TrialErrors> = group.iter().filter_map(|r| r.errors.as_ref()).collect();
            let normal: Vec<f64> = ok.iter().map(|e| e.normal_err_rad).collect();
            let dir: Vec<f64> = ok.iter().map(|e| e.dir_err_rad).collect();
            FarFieldRow {
                method: first.method,
                sigma_px: first.sigma_px,
                d_over_extent: first.d_over_extent,
                trials: group.len(),
                failures: group.len() - ok.len(),
                median_normal_err_rad: median(&normal).ok(),
                median_dir_err_rad: median(&dir).ok(),
            }
        })
        .collect())
}

/// A fixed camera watching a fixed target over many noisy frames.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticSequence {
    pub target: TargetModel,
    pub intrinsics: CameraIntrinsics,
    pub pose: GroundTruthPose,
    pub frames: usize,
    pub sigma_px: f64,
    pub seed: u64,
    pub solver: SolverConfig,
}

/// Per-frame normal angular errors of the algebraic average and of the
/// smoothed estimate fed with the same quads. Frames where the quad stage
/// fails are skipped by both.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceErrors {
    pub algebraic: Vec<f64>,
    pub smoothed: Vec<f64>,
}

pub fn static_sequence_study(seq: &StaticSequence) -> Result<SequenceErrors> {
    let obs = project_target(&seq.pose, &seq.target, &seq.intrinsics)?;
    let truth = seq.pose.eta();
    let mut rng = rng_from_seed(seq.seed);
    let mut session = SmoothedNormal::new();
    let mut out = SequenceErrors { algebraic: Vec::new(), smoothed: Vec::new() };
    for _ in 0..seq.frames {
        let px = perturb_pixels_with(&obs.pixels, seq.sigma_px, &mut rng)?;
        let c = correspondences_from_pixels(&seq.target, &px, &seq.intrinsics)?;
        let Ok(quads) = estimate_quad_normals(&c, &seq.solver) else { continue };
        let Ok(alg) = fuse_normals(&quads, NormalFusion::Algebraic, None) else { continue };
        let smooth: UnitVector3 = fuse_normals(&quads, NormalFusion::Smooth, Some(&mut session))?;
        out.algebraic.push(alg.angle_to(&truth));
        out.smoothed.push(smooth.angle_to(&truth));
    }
    Ok(out)
}

pub const TRIAL_CSV_HEADER: &str = "trial,method,sigma_px,d_over_extent,pos_err_m,rot_err_rad,\
roll_dev_rad,pitch_dev_rad,yaw_dev_rad,normal_err_rad,dir_err_rad,time_ns,failed";

pub const SUMMARY_CSV_HEADER: &str = "method,sigma_px,d_over_extent,trials,failures,failure_rate,\
pos_rmse_m,euler_rmse_deg,normal_rmse_deg,dir_rmse_deg,median_time_ns";

/// One line of the trial CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: u64,
    pub method: NormalFusion,
    pub sigma_px: f64,
    pub d_over_extent: f64,
    pub pos_err_m: Option<f64>,
    pub rot_err_rad: Option<f64>,
    pub roll_dev_rad: Option<f64>,
    pub pitch_dev_rad: Option<f64>,
    pub yaw_dev_rad: Option<f64>,
    pub normal_err_rad: Option<f64>,
    pub dir_err_rad: Option<f64>,
    pub time_ns: Option<u64>,
    pub failed: bool,
}

impl From<&TrialRecord> for TrialRow {
    fn from(r: &TrialRecord) -> Self {
        let e = r.errors.as_ref();
        TrialRow {
            trial: r.trial,
            method: r.method,
            sigma_px: r.sigma_px,
            d_over_extent: r.d_over_extent,
            pos_err_m: e.map(|e| e.pos_err_m),
            rot_err_rad: e.map(|e| e.rot_err_rad),
            roll_dev_rad: e.map(|e| e.roll_dev_rad),
            pitch_dev_rad: e.map(|e| e.pitch_dev_rad),
            yaw_dev_rad: e.map(|e| e.yaw_dev_rad),
            normal_err_rad: e.map(|e| e.normal_err_rad),
            dir_err_rad: e.map(|e| e.dir_err_rad),
            time_ns: r.time_ns,
            failed: r.failed(),
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv: {e}"))
}

pub fn write_csv<T: Serialize>(rows: &[T], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::InvalidInput(format!("csv: {e}")))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(input: impl Read) -> Result<Vec<T>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(csv_err)
}

pub fn write_trials_csv(records: &[TrialRecord], out: impl Write) -> Result<()> {
    if records.is_empty() {
        let mut out = out;
        return writeln!(out, "{TRIAL_CSV_HEADER}").map_err(|e| Error::InvalidInput(e.to_string()));
    }
    let rows: Vec<TrialRow> = records.iter().map(TrialRow::from).collect();
    write_csv(&rows, out)
}

pub fn write_summary_csv(rows: &[SummaryRow], out: impl Write) -> Result<()> {
    if rows.is_empty() {
        let mut out = out;
        return writeln!(out, "{SUMMARY_CSV_HEADER}").map_err(|e| Error::InvalidInput(e.to_string()));
    }
    write_csv(rows, out)
}
