//! Synthetic ground truth: planar targets, camera poses on the viewing side
//! of the target, exact projection, and pixel noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geom::{
    pixel_to_bearing, rodrigues_exp, CameraIntrinsics, RotationMatrix, UnitVector3, Vector2,
    Vector3,
};
use crate::quads::{select_quads, CorrespondenceSet, PlanarPoint, QuadStrategy, DEFAULT_COLLINEARITY_TOL};

pub const MAX_POSE_REJECTIONS: usize = 1000;

/// Deterministic random stream used by the simulator and the benchmarks.
pub type SimRng = ChaCha8Rng;

/// Derives an independent stream seed from a master seed and a key path.
pub fn derive_seed(master: u64, keys: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    keys.iter().fold(splitmix(master), |acc, &k| splitmix(acc ^ splitmix(k)))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetModel {
    pub points: Vec<PlanarPoint>,
    /// Bounding-box width and height, meters.
    pub extent: (f64, f64),
}

impl TargetModel {
    pub fn new(points: Vec<PlanarPoint>) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::InvalidInput(format!(
                "a target needs at least 4 points, got {}",
                points.len()
            )));
        }
        let c = CorrespondenceSet::new(points.clone(), vec![UnitVector3::E3; points.len()])?;
        select_quads(&c, 1, QuadStrategy::All, DEFAULT_COLLINEARITY_TOL)?;
        let (mut lo, mut hi) = (points[0], points[0]);
        for p in &points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        Ok(TargetModel { points, extent: (hi.x - lo.x, hi.y - lo.y) })
    }

    /// Diagonal of the bounding box; the length scale used for distance ratios.
    pub fn diameter(&self) -> f64 {
        self.extent.0.hypot(self.extent.1)
    }
}

/// A `rows x cols` lattice with spacing `pitch`, centred on the target origin.
pub fn make_grid_target(rows: usize, cols: usize, pitch: f64) -> Result<TargetModel> {
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidInput(format!(
            "grid needs at least 2 rows and 2 columns, got {rows}x{cols}"
        )));
    }
    if !(pitch > 0.0) || !pitch.is_finite() {
        return Err(Error::InvalidInput(format!("grid pitch must be positive, got {pitch}")));
    }
    let x0 = 0.5 * (cols - 1) as f64;
    let y0 = 0.5 * (rows - 1) as f64;
    let points = (0..rows)
        .flat_map(|r| {
            (0..cols).map(move |c| PlanarPoint::new((c as f64 - x0) * pitch, (r as f64 - y0) * pitch))
        })
        .collect();
    TargetModel::new(points)
}

/// `n` points drawn uniformly in a `width x height` rectangle centred on the
/// origin; redrawn until a valid quad exists.
pub fn random_target(n: usize, width: f64, height: f64, rng: &mut impl Rng) -> Result<TargetModel> {
    for _ in 0..MAX_POSE_REJECTIONS {
        let points = (0..n)
            .map(|_| {
                PlanarPoint::new(
                    (rng.random::<f64>() - 0.5) * width,
                    (rng.random::<f64>() - 0.5) * height,
                )
            })
            .collect();
        match TargetModel::new(points) {
            Ok(t) => return Ok(t),
            Err(Error::NoValidQuad) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::SamplingExhausted { attempts: MAX_POSE_REJECTIONS })
}

/// True camera pose relative to the target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundTruthPose {
    pub rot: RotationMatrix,
    /// Camera position in the camera basis.
    pub xi: Vector3,
}

impl GroundTruthPose {
    /// Builds a pose from its rotation and the camera position expressed in
    /// the target frame.
    pub fn from_target_position(rot: RotationMatrix, camera_in_target: Vector3) -> Self {
        GroundTruthPose { rot, xi: rot.transpose().apply(&camera_in_target) }
    }

    /// Target normal in camera coordinates, `R^T e3`.
    pub fn eta(&self) -> UnitVector3 {
        UnitVector3::new_unchecked(self.rot.matrix().row(2).transpose())
    }

    /// Signed distance to the plane, `-eta . xi`.
    pub fn d(&self) -> f64 {
        -self.eta().dot(&self.xi)
    }

    /// Camera-frame coordinates of a target point, `R^T (x; 0) - xi`.
    pub fn point_in_camera(&self, x: &PlanarPoint) -> Vector3 {
        self.rot.transpose().apply(&Vector3::new(x.x, x.y, 0.0)) - self.xi
    }
}

/// Exact pinhole projection of one target point.
pub fn project(
    pose: &GroundTruthPose,
    point: &PlanarPoint,
    k: &CameraIntrinsics,
) -> Result<(Vector2, UnitVector3)> {
    let v = pose.point_in_camera(point);
    if !(v.z > 0.0) {
        return Err(Error::BehindCamera { index: 0 });
    }
    let b = UnitVector3::from_direction(v)?;
    let pixel = Vector2::new(k.fx * b.x / b.z + k.cx, k.fy * b.y / b.z + k.cy);
    Ok((pixel, b))
}

/// Pixels and bearings of every target point seen from `pose`.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub pixels: Vec<Vector2>,
    pub bearings: Vec<UnitVector3>,
}

pub fn project_target(
    pose: &GroundTruthPose,
    target: &TargetModel,
    k: &CameraIntrinsics,
) -> Result<Observation> {
    let mut pixels = Vec::with_capacity(target.points.len());
    let mut bearings = Vec::with_capacity(target.points.len());
    for (i, x) in target.points.iter().enumerate() {
        let (px, b) = project(pose, x, k).map_err(|e| match e {
            Error::BehindCamera { .. } => Error::BehindCamera { index: i },
            other => other,
        })?;
        pixels.push(px);
        bearings.push(b);
    }
    Ok(Observation { pixels, bearings })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    /// Standard deviation per pixel coordinate.
    pub sigma_px: f64,
    pub seed: u64,
}

/// Adds i.i.d. zero-mean Gaussian noise to every pixel coordinate.
pub fn perturb_pixels(pixels: &[Vector2], noise: &NoiseModel) -> Result<Vec<Vector2>> {
    perturb_pixels_with(pixels, noise.sigma_px, &mut rng_from_seed(noise.seed))
}

pub fn perturb_pixels_with(pixels: &[Vector2], sigma_px: f64, rng: &mut impl Rng) -> Result<Vec<Vector2>> {
    if !(sigma_px >= 0.0) || !sigma_px.is_finite() {
        return Err(Error::InvalidInput(format!("noise sigma must be >= 0, got {sigma_px}")));
    }
    if sigma_px == 0.0 {
        return Ok(pixels.to_vec());
    }
    let normal = Normal::new(0.0, sigma_px).expect("sigma validated above");
    Ok(pixels
        .iter()
        .map(|p| Vector2::new(p.x + normal.sample(rng), p.y + normal.sample(rng)))
        .collect())
}

/// Bearings from (possibly noisy) pixels, paired with the target points.
pub fn correspondences_from_pixels(
    target: &TargetModel,
    pixels: &[Vector2],
    k: &CameraIntrinsics,
) -> Result<CorrespondenceSet> {
    let bearings = pixels.iter().map(|p| pixel_to_bearing(p, k)).collect();
    CorrespondenceSet::new(target.points.clone(), bearings)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseConstraints {
    /// Inclusive range for the camera-to-plane distance, meters.
    pub d_range: (f64, f64),
    /// Largest angle between optical axis and target normal, radians.
    pub max_tilt: f64,
    /// Camera offset from the target origin along each in-plane axis is drawn
    /// from `[-lateral_range, lateral_range]`, meters.
    pub lateral_range: f64,
}

/// Draws a camera pose on the viewing side of the target with every target
/// point in front of the camera.
///
/// The camera sits at `(lx, ly, -d)` in the target frame. Its axes are
/// `Rz(yaw) * Rtilt`, with yaw uniform on the circle and the tilt a rotation
/// about a random in-plane axis by an angle uniform in `[0, max_tilt]`.
pub fn random_pose(
    rng: &mut impl Rng,
    constraints: &PoseConstraints,
    target: &TargetModel,
) -> Result<GroundTruthPose> {
    let PoseConstraints { d_range: (d_lo, d_hi), max_tilt, lateral_range } = *constraints;
    if !(d_lo > 0.0 && d_hi >= d_lo) {
        return Err(Error::InvalidInput(format!("invalid distance range [{d_lo}, {d_hi}]")));
    }
    if !(0.0..std::f64::consts::FRAC_PI_2).contains(&max_tilt) {
        return Err(Error::InvalidInput(format!("max tilt must be in [0, pi/2), got {max_tilt}")));
    }
    if !(lateral_range >= 0.0) {
        return Err(Error::InvalidInput("lateral range must be >= 0".into()));
    }
    let uniform = |rng: &mut dyn rand::RngCore, lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();

    for _ in 0..MAX_POSE_REJECTIONS {
        let d = uniform(rng, d_lo, d_hi);
        let lx = uniform(rng, -lateral_range, lateral_range);
        let ly = uniform(rng, -lateral_range, lateral_range);
        let yaw = uniform(rng, -std::f64::consts::PI, std::f64::consts::PI);
        let axis_angle = uniform(rng, -std::f64::consts::PI, std::f64::consts::PI);
        let tilt = uniform(rng, 0.0, max_tilt);

        let tilt_rot =
            rodrigues_exp(&(Vector3::new(axis_angle.cos(), axis_angle.sin(), 0.0) * tilt));
        let rot = RotationMatrix::about_z(yaw).compose(&tilt_rot);
        let pose = GroundTruthPose::from_target_position(rot, Vector3::new(lx, ly, -d));

        let eta = pose.eta();
        let valid = pose.d() > 0.0
            && eta.z > 0.0
            && target.points.iter().all(|x| {
                let v = pose.point_in_camera(x);
                v.z > 0.0 && eta.dot(&v) > 0.0
            });
        if valid {
            return Ok(pose);
        }
    }
    Err(Error::SamplingExhausted { attempts: MAX_POSE_REJECTIONS })
}

/// A target, a pose satisfying the side constraint and its exact projection.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub target: TargetModel,
    pub pose: GroundTruthPose,
    pub observation: Observation,
}

impl Scene {
    pub fn correspondences(&self) -> Result<CorrespondenceSet> {
        CorrespondenceSet::new(self.target.points.clone(), self.observation.bearings.clone())
    }
}

/// `n` random points in a `size x size` square seen from a random pose.
pub fn random_scene(
    rng: &mut impl Rng,
    n: usize,
    size: f64,
    constraints: &PoseConstraints,
    k: &CameraIntrinsics,
) -> Result<Scene> {
    let target = random_target(n, size, size, rng)?;
    let pose = random_pose(rng, constraints, &target)?;
    let observation = project_target(&pose, &target, k)?;
    Ok(Scene { target, pose, observation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn project_examples() {
        let k = CameraIntrinsics::default();
        let pose = GroundTruthPose::from_target_position(RotationMatrix::identity(), Vector3::new(0., 0., -2.));
        assert_eq!(pose.xi, Vector3::new(0., 0., -2.));
        let (px, b) = project(&pose, &PlanarPoint::new(0., 0.), &k).unwrap();
        assert_eq!(b.as_array(), [0., 0., 1.]);
        assert_eq!(px, Vector2::new(k.cx, k.cy));

        let (px, b) = project(&pose, &PlanarPoint::new(1., 0.), &k).unwrap();
        let s5 = 5f64.sqrt();
        assert_abs_diff_eq!(*b, Vector3::new(1. / s5, 0., 2. / s5), epsilon = 1e-15);
        let back = pixel_to_bearing(&px, &k);
        assert_abs_diff_eq!(*back, *b, epsilon = 1e-12);
    }

    #[test]
    fn project_behind_camera() {
        let pose = GroundTruthPose::from_target_position(RotationMatrix::identity(), Vector3::new(0., 0., 2.));
        assert!(matches!(
            project(&pose, &PlanarPoint::new(0., 0.), &CameraIntrinsics::default()),
            Err(Error::BehindCamera { .. })
        ));
    }

    #[test]
    fn noise_identity_and_determinism() {
        let px = vec![Vector2::new(10.0, 20.0), Vector2::new(-3.0, 4.5)];
        let zero = perturb_pixels(&px, &NoiseModel { sigma_px: 0.0, seed: 1 }).unwrap();
        assert_eq!(zero, px);
        let a = perturb_pixels(&px, &NoiseModel { sigma_px: 0.5, seed: 7 }).unwrap();
        let b = perturb_pixels(&px, &NoiseModel { sigma_px: 0.5, seed: 7 }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, px);
        assert!(perturb_pixels(&px, &NoiseModel { sigma_px: -1.0, seed: 7 }).is_err());
    }

    #[test]
    fn noise_statistics() {
        let sigma = 0.5;
        let px = vec![Vector2::zeros(); 50_000];
        let out = perturb_pixels(&px, &NoiseModel { sigma_px: sigma, seed: 99 }).unwrap();
        let samples: Vec<f64> = out.iter().flat_map(|p| [p.x, p.y]).collect();
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var.sqrt() - sigma).abs() / sigma < 0.02);
    }

    #[test]
    fn grid_examples() {
        let t = make_grid_target(2, 2, 1.0).unwrap();
        let mut pts: Vec<(f64, f64)> = t.points.iter().map(|p| (p.x, p.y)).collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(pts, vec![(-0.5, -0.5), (-0.5, 0.5), (0.5, -0.5), (0.5, 0.5)]);

        let t = make_grid_target(3, 3, 0.1).unwrap();
        assert_eq!(t.points.len(), 9);
        assert_abs_diff_eq!(t.extent.0, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(t.extent.1, 0.2, epsilon = 1e-15);
        assert!(make_grid_target(1, 4, 1.0).is_err());
        assert!(make_grid_target(2, 2, 0.0).is_err());
    }

    #[test]
    fn fronto_parallel_sampling() {
        let t = make_grid_target(3, 3, 0.1).unwrap();
        let mut rng = rng_from_seed(3);
        let c = PoseConstraints { d_range: (1.0, 2.0), max_tilt: 0.0, lateral_range: 0.0 };
        let pose = random_pose(&mut rng, &c, &t).unwrap();
        assert_abs_diff_eq!(*pose.eta(), Vector3::z(), epsilon = 1e-15);
        assert!((1.0..=2.0).contains(&pose.d()));
    }

    #[test]
    fn pose_sampling_validity_audit() {
        let t = make_grid_target(4, 5, 0.05).unwrap();
        let c = PoseConstraints { d_range: (0.2, 2.0), max_tilt: 1.2, lateral_range: 0.5 };
        let mut rng = rng_from_seed(11);
        for _ in 0..10_000 {
            let pose = random_pose(&mut rng, &c, &t).unwrap();
            assert!(pose.d() > 0.0);
            let obs = project_target(&pose, &t, &CameraIntrinsics::default()).unwrap();
            assert!(obs.bearings.iter().all(|p| pose.eta().dot(p) > 0.0));
        }
    }

    #[test]
    fn pose_sampling_is_deterministic() {
        let t = make_grid_target(3, 3, 0.1).unwrap();
        let c = PoseConstraints { d_range: (0.5, 1.0), max_tilt: 0.5, lateral_range: 0.1 };
        let draw = |seed| {
            let mut rng = rng_from_seed(seed);
            (0..5).map(|_| random_pose(&mut rng, &c, &t).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn pose_sampling_rejects_bad_constraints() {
        let t = make_grid_target(3, 3, 0.1).unwrap();
        let mut rng = rng_from_seed(0);
        let c = PoseConstraints { d_range: (1.0, 2.0), max_tilt: 1.6, lateral_range: 0.0 };
        assert!(random_pose(&mut rng, &c, &t).is_err());
        // Camera hovering just above the target centre: any visible tilt puts
        // part of the grid behind it.
        let c = PoseConstraints { d_range: (1e-9, 1e-9), max_tilt: 1.5, lateral_range: 0.0 };
        assert!(matches!(random_pose(&mut rng, &c, &t), Err(Error::SamplingExhausted { .. })));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, &[0, 0]), derive_seed(1, &[0, 1]));
        assert_ne!(derive_seed(1, &[2]), derive_seed(2, &[2]));
        assert_eq!(derive_seed(9, &[3, 4]), derive_seed(9, &[3, 4]));
    }

    #[test]
    fn target_rejects_degenerate_layouts() {
        let line: Vec<PlanarPoint> = (0..5).map(|i| PlanarPoint::new(i as f64, 0.0)).collect();
        assert_eq!(TargetModel::new(line), Err(Error::NoValidQuad));
        assert!(TargetModel::new(vec![PlanarPoint::zeros(); 3]).is_err());
    }
}
