//! Two-view homography induced by the target plane, built from a pair of
//! camera poses. Used as an independent consistency check on the solver:
//! bearings of the same target point in two views must satisfy
//! `gamma_i p_i2 = H p_i1`.

use crate::error::{Error, Result};
use crate::geom::{angle_between, Matrix3d, RotationMatrix, UnitVector3, Vector3};
use crate::pose::PoseSolution;
use crate::scene::GroundTruthPose;

const HOMOGRAPHY_DET_TOL: f64 = 1e-12;

/// Anything carrying a target-to-camera rotation and a camera position in the
/// camera basis.
pub trait CameraPose {
    fn rotation(&self) -> &RotationMatrix;
    fn position(&self) -> Vector3;

    /// Camera position expressed in the target basis.
    fn position_in_target(&self) -> Vector3 {
        self.rotation().apply(&self.position())
    }
}

impl CameraPose for PoseSolution {
    fn rotation(&self) -> &RotationMatrix {
        &self.rot
    }

    fn position(&self) -> Vector3 {
        self.xi
    }
}

impl CameraPose for GroundTruthPose {
    fn rotation(&self) -> &RotationMatrix {
        &self.rot
    }

    fn position(&self) -> Vector3 {
        self.xi
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativePose {
    /// Rotation taking camera-1 coordinates to camera-2 coordinates.
    pub r_tilde: RotationMatrix,
    /// Translation expressed in camera 2.
    pub xi_tilde: Vector3,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography(Matrix3d);

impl Homography {
    pub fn new(h: Matrix3d) -> Result<Self> {
        let det = h.determinant();
        if !(det.abs() > HOMOGRAPHY_DET_TOL) {
            return Err(Error::Degenerate("homography is singular"));
        }
        Ok(Homography(h))
    }

    pub fn matrix(&self) -> &Matrix3d {
        &self.0
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    /// `H` or `-H`, whichever has a positive determinant.
    pub fn sign_normalized(&self) -> Self {
        if self.determinant() < 0.0 { Homography(-self.0) } else { *self }
    }
}

/// `R~ = R2^T R1`, `xi~ = R2^T (xi1_t - xi2_t)` with `xi_t = R xi` the camera
/// position in the target basis.
pub fn relative_pose(pose1: &impl CameraPose, pose2: &impl CameraPose) -> RelativePose {
    let r2t = pose2.rotation().transpose();
    RelativePose {
        r_tilde: r2t.compose(pose1.rotation()),
        xi_tilde: r2t.apply(&(pose1.position_in_target() - pose2.position_in_target())),
    }
}

/// `H = R~ + xi~ eta1^T / d1`.
pub fn homography_from_poses(rel: &RelativePose, eta1: &UnitVector3, d1: f64) -> Result<Homography> {
    if !(d1 > 0.0) {
        return Err(Error::InvalidInput(format!("plane distance must be positive, got {d1}")));
    }
    Homography::new(rel.r_tilde.matrix() + rel.xi_tilde * eta1.transpose() / d1)
}

/// Rescales `H` into SL(3): `H det(H)^(-1/3)`.
pub fn normalize_sl3(h: &Homography) -> Result<Homography> {
    let det = h.determinant();
    if !(det > 0.0) {
        return Err(Error::NonPositiveDeterminant { det });
    }
    Ok(Homography(h.0 / det.cbrt()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransferResidual {
    /// Largest angle between `H p1` and `p2` over all pairs, radians.
    pub max_residual: f64,
    /// Per-pair scale with `gamma p2 ~= H p1`, signed by alignment.
    pub gammas: Vec<f64>,
}

pub fn bearing_transfer_residual(
    h: &Homography,
    pairs: &[(UnitVector3, UnitVector3)],
) -> TransferResidual {
    let mut max_residual: f64 = 0.0;
    let gammas = pairs
        .iter()
        .map(|(p1, p2)| {
            let hp = h.0 * **p1;
            max_residual = max_residual.max(angle_between(&hp, p2));
            let sign = if hp.dot(p2) < 0.0 { -1.0 } else { 1.0 };
            sign * hp.norm() / p2.norm()
        })
        .collect();
    TransferResidual { max_residual, gammas }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vector3;
    use approx::assert_abs_diff_eq;

    fn pose(rot: RotationMatrix, camera_in_target: Vector3) -> GroundTruthPose {
        GroundTruthPose::from_target_position(rot, camera_in_target)
    }

    #[test]
    fn identical_poses() {
        let p = pose(RotationMatrix::about_x(0.2), Vector3::new(0.1, 0.3, -2.0));
        let rel = relative_pose(&p, &p);
        assert_abs_diff_eq!(*rel.r_tilde.matrix(), Matrix3d::identity(), epsilon = 1e-15);
        assert_abs_diff_eq!(rel.xi_tilde, Vector3::zeros(), epsilon = 1e-15);
        let h = homography_from_poses(&rel, &p.eta(), p.d()).unwrap();
        assert_abs_diff_eq!(*h.matrix(), Matrix3d::identity(), epsilon = 1e-15);
    }

    #[test]
    fn pure_rotation_about_optical_axis() {
        let psi = 0.7;
        let r1 = RotationMatrix::about_x(0.2);
        let p1 = pose(r1, Vector3::new(0.1, 0.3, -2.0));
        let r2 = r1.compose(&RotationMatrix::about_z(psi));
        let p2 = pose(r2, Vector3::new(0.1, 0.3, -2.0));
        let rel = relative_pose(&p1, &p2);
        assert_abs_diff_eq!(
            *rel.r_tilde.matrix(),
            *RotationMatrix::about_z(psi).transpose().matrix(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(rel.xi_tilde, Vector3::zeros(), epsilon = 1e-15);
        let h = homography_from_poses(&rel, &p1.eta(), p1.d()).unwrap();
        assert_abs_diff_eq!(*h.matrix(), *rel.r_tilde.matrix(), epsilon = 1e-15);
    }

    #[test]
    fn fronto_pair() {
        let p1 = pose(RotationMatrix::identity(), Vector3::new(0., 0., -2.));
        let p2 = pose(RotationMatrix::identity(), Vector3::new(0., 0., -4.));
        let rel = relative_pose(&p1, &p2);
        assert_eq!(*rel.r_tilde.matrix(), Matrix3d::identity());
        assert_eq!(rel.xi_tilde, Vector3::new(0., 0., 2.));
        let h = homography_from_poses(&rel, &p1.eta(), p1.d()).unwrap();
        assert_eq!(*h.matrix(), Matrix3d::from_diagonal(&Vector3::new(1., 1., 2.)));
    }

    #[test]
    fn sl3_examples() {
        let i = Homography::new(Matrix3d::identity()).unwrap();
        assert_eq!(normalize_sl3(&i).unwrap(), i);

        let h = Homography::new(Matrix3d::from_diagonal(&Vector3::new(1., 1., 2.))).unwrap();
        let n = normalize_sl3(&h).unwrap();
        let a = 2f64.powf(-1.0 / 3.0);
        let expected = Matrix3d::from_diagonal(&Vector3::new(a, a, 2f64.powf(2.0 / 3.0)));
        assert_abs_diff_eq!(*n.matrix(), expected, epsilon = 1e-15);
        assert!((n.determinant() - 1.0).abs() < 1e-10);

        let h3 = Homography::new(Matrix3d::identity() * 3.0).unwrap();
        assert_abs_diff_eq!(*normalize_sl3(&h3).unwrap().matrix(), Matrix3d::identity(), epsilon = 1e-15);

        let again = normalize_sl3(&n).unwrap();
        assert_abs_diff_eq!(*again.matrix(), *n.matrix(), epsilon = 1e-12);
    }

    #[test]
    fn sl3_rejects_negative_determinant() {
        let h = Homography::new(-Matrix3d::identity()).unwrap();
        assert!(matches!(normalize_sl3(&h), Err(Error::NonPositiveDeterminant { .. })));
        assert!(normalize_sl3(&h.sign_normalized()).is_ok());
        assert!(Homography::new(Matrix3d::zeros()).is_err());
    }

    #[test]
    fn transfer_identity() {
        let h = Homography::new(Matrix3d::identity()).unwrap();
        let p = UnitVector3::from_direction(Vector3::new(0.1, -0.2, 1.0)).unwrap();
        let res = bearing_transfer_residual(&h, &[(p, p)]);
        assert_eq!(res.max_residual, 0.0);
        assert_abs_diff_eq!(res.gammas[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn homography_rejects_nonpositive_distance() {
        let p = pose(RotationMatrix::identity(), Vector3::new(0., 0., -2.));
        let rel = relative_pose(&p, &p);
        assert!(homography_from_poses(&rel, &UnitVector3::E3, 0.0).is_err());
    }
}
