//! Recovery of the plane distance, camera position and orientation once the
//! plane normal is known, and the full three-stage pipeline.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{
    orthonormalize_with_fixed_third_column, Matrix3d, RotationMatrix, UnitVector3, Vector3,
};
use crate::normal::{
    average_normals_algebraic, solve_eta_eigen, solve_eta_quad, QuadSolution, SmoothedNormal,
};
use crate::quads::{
    select_quads, CorrespondenceSet, PlanarPoint, QuadStrategy, DEFAULT_COLLINEARITY_TOL,
    DEFAULT_MAX_QUADS,
};

const MOMENT_COND_LIMIT: f64 = 1e12;
const GRAZING_TOL: f64 = 1e-9;
const RANK_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalFusion {
    #[default]
    Algebraic,
    Eigen,
    Smooth,
}

impl NormalFusion {
    pub const ALL: [NormalFusion; 3] = [NormalFusion::Algebraic, NormalFusion::Eigen, NormalFusion::Smooth];

    pub fn name(&self) -> &'static str {
        match self {
            NormalFusion::Algebraic => "algebraic",
            NormalFusion::Eigen => "eigen",
            NormalFusion::Smooth => "smooth",
        }
    }
}

impl std::str::FromStr for NormalFusion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "algebraic" => Ok(NormalFusion::Algebraic),
            "eigen" => Ok(NormalFusion::Eigen),
            "smooth" => Ok(NormalFusion::Smooth),
            _ => Err(Error::InvalidInput(format!("unknown fusion method {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceWeighting {
    #[default]
    Uniform,
    /// Each per-point distance is weighted by the point's distance from the
    /// target origin.
    NormWeighted,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub normal_fusion: NormalFusion,
    pub max_m: usize,
    pub quad_strategy: QuadStrategy,
    pub collinearity_tol: f64,
    /// Points closer than this to the target origin (meters) are left out of
    /// the distance average and the rotation fit.
    pub origin_exclusion_tol: f64,
    pub d_weighting: DistanceWeighting,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            normal_fusion: NormalFusion::Algebraic,
            max_m: DEFAULT_MAX_QUADS,
            quad_strategy: QuadStrategy::SpreadFirst,
            collinearity_tol: DEFAULT_COLLINEARITY_TOL,
            origin_exclusion_tol: 1e-9,
            d_weighting: DistanceWeighting::Uniform,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.collinearity_tol > 0.0) || !(self.origin_exclusion_tol > 0.0) {
            return Err(Error::InvalidInput("solver tolerances must be positive".into()));
        }
        if self.max_m == 0 {
            return Err(Error::InvalidInput("max quads must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseSolution {
    /// Target normal in camera coordinates.
    pub eta: UnitVector3,
    /// Distance from the optical center to the target plane, meters.
    pub d: f64,
    /// Camera position, camera basis, meters.
    pub xi: Vector3,
    /// Target-to-camera rotation.
    pub rot: RotationMatrix,
    /// `sum(mu_i p_i / (eta . p_i))`; approximates `-xi / |xi|` in the far field.
    pub r_dir: Vector3,
    pub per_point_d: Vec<f64>,
    pub excluded_indices: Vec<usize>,
    pub quads_used: usize,
}

/// Minimum-norm affine weights with `sum(mu) = 1` and `sum(mu_i x_i) = 0`.
pub fn mu_coefficients(points: &[PlanarPoint]) -> Result<DVector<f64>> {
    let n = points.len();
    let xbar = DMatrix::from_fn(3, n, |r, c| match r {
        0 => points[c].x,
        1 => points[c].y,
        _ => 1.0,
    });
    let moment: Matrix3d = (&xbar * xbar.transpose()).fixed_view::<3, 3>(0, 0).into_owned();
    let eig = SymmetricEigen::new(moment).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond <= MOMENT_COND_LIMIT) {
        return Err(Error::SingularMoment { cond });
    }
    let w = moment.cholesky().ok_or(Error::SingularMoment { cond })?.solve(&Vector3::z());
    Ok(xbar.transpose() * w)
}

fn check_bearing_side(bearings: &[UnitVector3], eta: &UnitVector3) -> Result<Vec<f64>> {
    bearings
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let dot = eta.dot(p);
            if !(dot > GRAZING_TOL) {
                Err(Error::GrazingBearing { index: i, dot })
            } else {
                Ok(dot)
            }
        })
        .collect()
}

/// `r = sum(mu_i p_i / (eta . p_i))`; on exact data `r = -xi / d`.
pub fn direction_r(bearings: &[UnitVector3], mu: &DVector<f64>, eta: &UnitVector3) -> Result<Vector3> {
    if bearings.len() != mu.len() {
        return Err(Error::InvalidInput("bearing and weight counts differ".into()));
    }
    let dots = check_bearing_side(bearings, eta)?;
    Ok(bearings
        .iter()
        .zip(dots.iter())
        .zip(mu.iter())
        .map(|((p, dot), m)| **p * (m / dot))
        .sum())
}

/// `q_i = p_i / (eta . p_i) - r`; on exact data `R^T (x_i; 0) = d q_i`.
pub fn q_vectors(bearings: &[UnitVector3], eta: &UnitVector3, r: &Vector3) -> Result<Vec<Vector3>> {
    let dots = check_bearing_side(bearings, eta)?;
    Ok(bearings.iter().zip(dots).map(|(p, dot)| **p / dot - r).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceEstimate {
    pub d: f64,
    /// Per-point `|x_i| / |q_i|` for the points that were kept.
    pub per_point_d: Vec<f64>,
    pub excluded_indices: Vec<usize>,
}

pub fn distance_d(
    points: &[PlanarPoint],
    q: &[Vector3],
    weighting: DistanceWeighting,
    origin_exclusion_tol: f64,
) -> Result<DistanceEstimate> {
    if points.len() != q.len() {
        return Err(Error::InvalidInput("point and q-vector counts differ".into()));
    }
    let mut per_point_d = Vec::with_capacity(points.len());
    let mut excluded_indices = Vec::new();
    let (mut num, mut den) = (0.0, 0.0);
    for (i, (x, qi)) in points.iter().zip(q).enumerate() {
        let lever = x.norm();
        if lever < origin_exclusion_tol {
            excluded_indices.push(i);
            continue;
        }
        let qn = qi.norm();
        if !(qn > 0.0) {
            return Err(Error::Degenerate("q vector vanished for an off-origin point"));
        }
        let di = lever / qn;
        per_point_d.push(di);
        let w = match weighting {
            DistanceWeighting::Uniform => 1.0,
            DistanceWeighting::NormWeighted => lever,
        };
        num += w * di;
        den += w;
    }
    if per_point_d.is_empty() {
        return Err(Error::AllPointsExcluded);
    }
    Ok(DistanceEstimate { d: num / den, per_point_d, excluded_indices })
}

/// `xi = -d r`.
pub fn position_xi(d: f64, r: &Vector3) -> Vector3 {
    -r * d
}

/// Least-squares `R^T = Y Xbb^+` over the off-origin points, before the
/// projection onto SO(3).
pub fn rotation_transpose_raw(
    points: &[PlanarPoint],
    q: &[Vector3],
    eta: &UnitVector3,
    origin_exclusion_tol: f64,
) -> Result<Matrix3d> {
    if points.len() != q.len() {
        return Err(Error::InvalidInput("point and q-vector counts differ".into()));
    }
    let kept: Vec<usize> = (0..points.len())
        .filter(|&i| points[i].norm() >= origin_exclusion_tol && q[i].norm() > 0.0)
        .collect();
    let cols = kept.len() + 1;
    let mut xbb = DMatrix::zeros(3, cols);
    let mut y = DMatrix::zeros(3, cols);
    for (c, &i) in kept.iter().enumerate() {
        let x = points[i] / points[i].norm();
        xbb[(0, c)] = x.x;
        xbb[(1, c)] = x.y;
        y.set_column(c, &(q[i] / q[i].norm()));
    }
    xbb[(2, cols - 1)] = 1.0;
    y.set_column(cols - 1, &**eta);

    let sv = xbb.clone().svd(false, false).singular_values;
    let sigma_min = if sv.len() < 3 { 0.0 } else { sv.min() };
    if !(sigma_min >= RANK_TOL) {
        return Err(Error::RankDeficient { sigma_min });
    }
    let gram: Matrix3d = (&xbb * xbb.transpose()).fixed_view::<3, 3>(0, 0).into_owned();
    let gram_inv = gram.try_inverse().ok_or(Error::RankDeficient { sigma_min })?;
    let yx: Matrix3d = (&y * xbb.transpose()).fixed_view::<3, 3>(0, 0).into_owned();
    Ok(yx * gram_inv)
}

/// Target-to-camera rotation from the normalized in-plane directions.
pub fn rotation_r(
    points: &[PlanarPoint],
    q: &[Vector3],
    eta: &UnitVector3,
    origin_exclusion_tol: f64,
) -> Result<RotationMatrix> {
    let rt = rotation_transpose_raw(points, q, eta, origin_exclusion_tol)?;
    Ok(orthonormalize_with_fixed_third_column(&rt, eta)?.transpose())
}

/// Per-quad normal estimates for a correspondence set. Quads whose local
/// solve is degenerate are skipped; the first error is returned if none
/// succeeds.
pub fn estimate_quad_normals(
    c: &CorrespondenceSet,
    cfg: &SolverConfig,
) -> Result<Vec<QuadSolution>> {
    let selection = select_quads(c, cfg.max_m, cfg.quad_strategy, cfg.collinearity_tol)?;
    let mut first_err = None;
    let mut out = Vec::with_capacity(selection.m());
    for quad in selection.quads {
        match solve_eta_quad(c, quad) {
            Ok(s) => out.push(s),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match (out.is_empty(), first_err) {
        (true, Some(e)) => Err(e),
        _ => Ok(out),
    }
}

/// Fuses per-quad estimates according to `fusion`. Smooth fusion advances
/// `session` (a fresh one is used if none is given).
pub fn fuse_normals(
    quads: &[QuadSolution],
    fusion: NormalFusion,
    session: Option<&mut SmoothedNormal>,
) -> Result<UnitVector3> {
    let estimates: Vec<_> = quads.iter().map(|q| q.estimate).collect();
    match fusion {
        NormalFusion::Algebraic => average_normals_algebraic(&estimates),
        NormalFusion::Eigen => solve_eta_eigen(quads),
        NormalFusion::Smooth => match session {
            Some(s) => s.update(&estimates),
            None => SmoothedNormal::new().update(&estimates),
        },
    }
}

/// Full pipeline: normal, then distance and position, then orientation.
pub fn solve_pose(
    c: &CorrespondenceSet,
    cfg: &SolverConfig,
    session: Option<&mut SmoothedNormal>,
) -> Result<PoseSolution> {
    cfg.validate()?;
    let quads = estimate_quad_normals(c, cfg)?;
    let eta = fuse_normals(&quads, cfg.normal_fusion, session)?;
    solve_pose_with_normal(c, cfg, eta, quads.len())
}

/// Stages two and three for a given normal estimate.
pub fn solve_pose_with_normal(
    c: &CorrespondenceSet,
    cfg: &SolverConfig,
    eta: UnitVector3,
    quads_used: usize,
) -> Result<PoseSolution> {
    if eta.z <= 0.0 {
        return Err(Error::OrientationSide(format!(
            "optical axis makes an obtuse angle with the target normal (eta_z = {})",
            eta.z
        )));
    }
    if let Some((i, p)) = c.bearings().iter().enumerate().find(|(_, p)| eta.dot(p) <= 0.0) {
        return Err(Error::OrientationSide(format!(
            "bearing {i} points away from the target plane (eta . p = {})",
            eta.dot(p)
        )));
    }

    let mu = mu_coefficients(c.points())?;
    let r_dir = direction_r(c.bearings(), &mu, &eta)?;
    let q = q_vectors(c.bearings(), &eta, &r_dir)?;
    let dist = distance_d(c.points(), &q, cfg.d_weighting, cfg.origin_exclusion_tol)?;
    let xi = position_xi(dist.d, &r_dir);

    let rt = rotation_transpose_raw(c.points(), &q, &eta, cfg.origin_exclusion_tol)?;
    // A mirrored fit means the target is seen from its back side.
    let det = rt.determinant();
    if !(det > 0.0) {
        return Err(Error::OrientationSide(format!(
            "target is observed from behind (in-plane fit has det {det})"
        )));
    }
    let rot = orthonormalize_with_fixed_third_column(&rt, &eta)?.transpose();

    Ok(PoseSolution {
        eta,
        d: dist.d,
        xi,
        rot,
        r_dir,
        per_point_d: dist.per_point_d,
        excluded_indices: dist.excluded_indices,
        quads_used,
    })
}
