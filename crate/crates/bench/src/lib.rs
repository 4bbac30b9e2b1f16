//! Fixtures shared by the criterion benches.

use posekit_core::pose::estimate_quad_normals;
use posekit_core::normal::QuadSolution;
use posekit_core::scene::{
    correspondences_from_pixels, make_grid_target, perturb_pixels_with, project_target, random_pose,
    rng_from_seed, PoseConstraints,
};
use posekit_core::{CameraIntrinsics, CorrespondenceSet, SolverConfig};

/// A `side x side` grid seen from a moderate random pose, with pixel noise.
pub fn grid_frame(side: usize, sigma_px: f64, seed: u64) -> CorrespondenceSet {
    let target = make_grid_target(side, side, 0.05).expect("grid");
    let d = 3.0 * target.diameter();
    let constraints = PoseConstraints { d_range: (d, d), max_tilt: 0.5, lateral_range: 0.2 * d };
    let mut rng = rng_from_seed(seed);
    let pose = random_pose(&mut rng, &constraints, &target).expect("pose");
    let k = CameraIntrinsics::default();
    let obs = project_target(&pose, &target, &k).expect("projection");
    let px = perturb_pixels_with(&obs.pixels, sigma_px, &mut rng).expect("noise");
    correspondences_from_pixels(&target, &px, &k).expect("correspondences")
}

pub fn quads(c: &CorrespondenceSet, max_m: usize) -> Vec<QuadSolution> {
    estimate_quad_normals(c, &SolverConfig { max_m, ..SolverConfig::default() }).expect("quads")
}
