//! Camera pose from coplanar reference points and their bearings.
//!
//! The solver works in three stages: the target-plane normal is recovered
//! from four-point subsets ([`normal`]), then the plane distance and camera
//! position, and finally the full orientation ([`pose`]). The remaining
//! modules provide the synthetic ground truth ([`scene`]), a plane-induced
//! homography check ([`homography`]), the Monte-Carlo harness ([`bench`]) and
//! the on-disk formats ([`io`]).

// Guards such as `!(x > 0.0)` are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod geom;
pub mod homography;
pub mod io;
pub mod normal;
pub mod pose;
pub mod quads;
pub mod scene;

pub use error::{Error, Result};
pub use geom::{
    geodesic_angle, pixel_to_bearing, rodrigues_exp, rotation_to_euler, CameraIntrinsics,
    EulerAngles, RotationMatrix, UnitVector3, Vector2, Vector3,
};
pub use normal::{NormalEstimate, SmoothedNormal};
pub use pose::{solve_pose, DistanceWeighting, NormalFusion, PoseSolution, SolverConfig};
pub use quads::{CorrespondenceSet, PlanarPoint, QuadStrategy};
pub use scene::{GroundTruthPose, TargetModel};
