//! JSON file formats: correspondence files, scenario files, ground-truth
//! sidecars and pose reports.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bench::SweepSpec;
use crate::error::{Error, Result};
use crate::geom::{rotation_to_euler, CameraIntrinsics, RotationMatrix, UnitVector3, Vector2, Vector3};
use crate::pose::{DistanceWeighting, NormalFusion, PoseSolution, SolverConfig};
use crate::quads::{CorrespondenceSet, QuadStrategy};
use crate::scene::{make_grid_target, GroundTruthPose, TargetModel};

/// Written into every pose-bearing file.
pub const POSE_CONVENTION: &str = "rot is the target-to-camera rotation R, row-major; \
a target point x maps to camera coordinates R^T (x, y, 0) - xi; xi is the camera position \
in the camera basis, meters; eta = R^T e3; euler_deg is Z-Y-X with R = Rz(yaw) Ry(pitch) Rx(roll)";

fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("json: {e}")))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("file types always serialize");
    s.push('\n');
    s
}

fn finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

/// One observation of every target point, in target-point order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Calibrated bearing directions; need not be unit length.
    Bearings(Vec<[f64; 3]>),
    /// Pixel coordinates; requires intrinsics.
    Pixels(Vec<[f64; 2]>),
}

impl Frame {
    fn len(&self) -> usize {
        match self {
            Frame::Bearings(b) => b.len(),
            Frame::Pixels(p) => p.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrespondenceFile {
    /// Target-plane coordinates, meters.
    pub target: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsics: Option<CameraIntrinsics>,
    pub frames: Vec<Frame>,
}

impl CorrespondenceFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self = from_json(text)?;
        file.validate()?;
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.target.len() < 4 {
            return bad(format!("need at least 4 target points, got {}", self.target.len()));
        }
        if !self.target.iter().all(|p| finite(p)) {
            return bad("target points must be finite".into());
        }
        if self.frames.is_empty() {
            return bad("file has no frames".into());
        }
        if let Some(k) = &self.intrinsics {
            CameraIntrinsics::new(k.fx, k.fy, k.cx, k.cy)?;
        }
        for (i, frame) in self.frames.iter().enumerate() {
            if frame.len() != self.target.len() {
                return bad(format!(
                    "frame {i} has {} observations for {} target points",
                    frame.len(),
                    self.target.len()
                ));
            }
            match frame {
                Frame::Bearings(b) => {
                    if !b.iter().all(|v| finite(v) && v.iter().any(|c| *c != 0.0)) {
                        return bad(format!("frame {i} has a zero or non-finite bearing"));
                    }
                }
                Frame::Pixels(p) => {
                    if self.intrinsics.is_none() {
                        return bad(format!("frame {i} holds pixels but the file has no intrinsics"));
                    }
                    if !p.iter().all(|v| finite(v)) {
                        return bad(format!("frame {i} has a non-finite pixel"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn target_points(&self) -> Vec<Vector2> {
        self.target.iter().map(|p| Vector2::new(p[0], p[1])).collect()
    }

    pub fn correspondence_sets(&self) -> Result<Vec<CorrespondenceSet>> {
        self.validate()?;
        let points = self.target_points();
        self.frames
            .iter()
            .map(|frame| {
                let bearings = match frame {
                    Frame::Bearings(b) => b
                        .iter()
                        .map(|v| UnitVector3::from_direction(Vector3::from(*v)))
                        .collect::<Result<Vec<_>>>()?,
                    Frame::Pixels(p) => {
                        let k = self.intrinsics.as_ref().expect("validated");
                        p.iter()
                            .map(|px| crate::geom::pixel_to_bearing(&Vector2::new(px[0], px[1]), k))
                            .collect()
                    }
                };
                CorrespondenceSet::new(points.clone(), bearings)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSpec {
    /// Centred lattice, pitch in meters.
    Grid { rows: usize, cols: usize, pitch: f64 },
    Points(Vec<[f64; 2]>),
}

impl TargetSpec {
    pub fn build(&self) -> Result<TargetModel> {
        match self {
            TargetSpec::Grid { rows, cols, pitch } => {
                if !(*pitch > 0.0) || !pitch.is_finite() {
                    return Err(Error::InvalidInput(format!("grid pitch must be > 0, got {pitch}")));
                }
                make_grid_target(*rows, *cols, *pitch)
            }
            TargetSpec::Points(p) => {
                if p.len() < 4 {
                    return Err(Error::InvalidInput(format!(
                        "need at least 4 target points, got {}",
                        p.len()
                    )));
                }
                TargetModel::new(p.iter().map(|x| Vector2::new(x[0], x[1])).collect())
            }
        }
    }
}

fn default_max_tilt_deg() -> f64 {
    30.0
}

fn default_lateral_fraction() -> f64 {
    0.2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    #[serde(default = "default_max_tilt_deg")]
    pub max_tilt_deg: f64,
    #[serde(default = "default_lateral_fraction")]
    pub lateral_fraction: f64,
}

impl Default for CameraSpec {
    fn default() -> Self {
        CameraSpec { max_tilt_deg: default_max_tilt_deg(), lateral_fraction: default_lateral_fraction() }
    }
}

fn one() -> usize {
    1
}

fn all_methods() -> Vec<NormalFusion> {
    NormalFusion::ALL.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub sigma_px: Vec<f64>,
    pub d_over_extent: Vec<f64>,
    pub trials: usize,
    #[serde(default = "one")]
    pub frames_per_trial: usize,
    #[serde(default = "all_methods")]
    pub methods: Vec<NormalFusion>,
    #[serde(default)]
    pub seed: u64,
}

fn default_max_quads() -> usize {
    crate::quads::DEFAULT_MAX_QUADS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_max_quads")]
    pub max_quads: usize,
    #[serde(default)]
    pub quad_strategy: QuadStrategy,
    #[serde(default)]
    pub d_weighting: DistanceWeighting,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            max_quads: default_max_quads(),
            quad_strategy: QuadStrategy::default(),
            d_weighting: DistanceWeighting::default(),
        }
    }
}

fn yes() -> bool {
    true
}

/// Frame layout used when simulating a correspondence file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSection {
    #[serde(default = "one")]
    pub frames: usize,
    /// One pose for every frame when set; a fresh pose per frame otherwise.
    #[serde(default = "yes")]
    pub static_scene: bool,
}

impl Default for SequenceSection {
    fn default() -> Self {
        SequenceSection { frames: 1, static_scene: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub target: TargetSpec,
    #[serde(default)]
    pub intrinsics: CameraIntrinsics,
    #[serde(default)]
    pub camera: CameraSpec,
    pub sweep: SweepSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub sequence: SequenceSection,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self = from_json(text)?;
        file.sweep_spec(false)?;
        if file.sequence.frames == 0 {
            return Err(Error::InvalidInput("sequence needs at least one frame".into()));
        }
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            max_m: self.solver.max_quads,
            quad_strategy: self.solver.quad_strategy,
            d_weighting: self.solver.d_weighting,
            ..SolverConfig::default()
        }
    }

    /// Validated sweep description; fails on any inconsistent field.
    pub fn sweep_spec(&self, measure_time: bool) -> Result<SweepSpec> {
        let k = &self.intrinsics;
        let intrinsics = CameraIntrinsics::new(k.fx, k.fy, k.cx, k.cy)?;
        let max_tilt = self.camera.max_tilt_deg.to_radians();
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&max_tilt) {
            return Err(Error::InvalidInput(format!(
                "max tilt must be in [0, 90) degrees, got {}",
                self.camera.max_tilt_deg
            )));
        }
        let spec = SweepSpec {
            sigma_list: self.sweep.sigma_px.clone(),
            d_over_extent_list: self.sweep.d_over_extent.clone(),
            trials: self.sweep.trials,
            frames_per_trial: self.sweep.frames_per_trial,
            target: self.target.build()?,
            intrinsics,
            max_tilt,
            lateral_fraction: self.camera.lateral_fraction,
            methods: self.sweep.methods.clone(),
            solver: self.solver_config(),
            master_seed: self.sweep.seed,
            measure_time,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EulerDegrees {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub gimbal_lock: bool,
}

impl EulerDegrees {
    pub fn of(rot: &RotationMatrix) -> Self {
        let e = rotation_to_euler(rot);
        EulerDegrees {
            roll: e.roll.to_degrees(),
            pitch: e.pitch.to_degrees(),
            yaw: e.yaw.to_degrees(),
            gimbal_lock: e.gimbal_lock,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub frame: usize,
    pub rot: [f64; 9],
    pub xi: [f64; 3],
    pub eta: [f64; 3],
    pub d: f64,
    pub euler_deg: EulerDegrees,
}

impl TruthRecord {
    pub fn new(frame: usize, pose: &GroundTruthPose) -> Self {
        TruthRecord {
            frame,
            rot: pose.rot.to_row_major(),
            xi: pose.xi.into(),
            eta: pose.eta().as_array(),
            d: pose.d(),
            euler_deg: EulerDegrees::of(&pose.rot),
        }
    }

    pub fn pose(&self) -> Result<GroundTruthPose> {
        Ok(GroundTruthPose { rot: RotationMatrix::from_row_major(&self.rot)?, xi: Vector3::from(self.xi) })
    }
}

/// True poses matching the frames of a simulated correspondence file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFile {
    pub convention: String,
    pub frames: Vec<TruthRecord>,
}

impl GroundTruthFile {
    pub fn new(frames: Vec<TruthRecord>) -> Self {
        GroundTruthFile { convention: POSE_CONVENTION.to_string(), frames }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        from_json(text)
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub eta: [f64; 3],
    pub d: f64,
    pub xi: [f64; 3],
    pub rot: [f64; 9],
    pub euler_deg: EulerDegrees,
    pub r_dir: [f64; 3],
    pub per_point_d: Vec<f64>,
    pub excluded_indices: Vec<usize>,
    pub quads_used: usize,
}

impl From<&PoseSolution> for PoseRecord {
    fn from(s: &PoseSolution) -> Self {
        PoseRecord {
            eta: s.eta.as_array(),
            d: s.d,
            xi: s.xi.into(),
            rot: s.rot.to_row_major(),
            euler_deg: EulerDegrees::of(&s.rot),
            r_dir: s.r_dir.into(),
            per_point_d: s.per_point_d.clone(),
            excluded_indices: s.excluded_indices.clone(),
            quads_used: s.quads_used,
        }
    }
}

/// Machine-readable failure.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for ErrorRecord {
    fn from(e: &Error) -> Self {
        ErrorRecord { kind: e.kind().to_string(), message: e.to_string() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub frame: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<PoseRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseReport {
    pub convention: String,
    pub fusion: NormalFusion,
    pub frames: Vec<FrameReport>,
}

impl PoseReport {
    pub fn new(fusion: NormalFusion, frames: Vec<FrameReport>) -> Self {
        PoseReport { convention: POSE_CONVENTION.to_string(), fusion, frames }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        from_json(text)
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }
}
