//! Plane-normal estimation from four-point subsets, and the three ways of
//! fusing per-quad estimates: weighted algebraic average, null vector of the
//! stacked constraint matrix, and smooth averaging on the sphere.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geom::{rodrigues_exp, Matrix3d, UnitVector3, Vector3};
use crate::quads::{CorrespondenceSet, PlanarPoint};

const SINGULAR_X_TOL: f64 = 1e-12;
const SINGULAR_B_TOL: f64 = 1e-12;
const ZERO_COEFF_TOL: f64 = 1e-12;
const DEGENERATE_SUM_TOL: f64 = 1e-12;
const EIGEN_GAP_TOL: f64 = 1e-12;

/// One per-quad normal estimate with its confidence weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalEstimate {
    pub eta_hat: UnitVector3,
    pub gamma: f64,
    pub quad: [usize; 4],
}

/// Linear-algebra by-products of a per-quad solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadIntermediates {
    /// Affine weights with `sum(lambda) = 1` and `sum(lambda_i (x_i - x_1)) = 0`.
    pub lambda: Vector3,
    /// Coordinates of `p1` in the basis `[p2 p3 p4]`.
    pub a: Vector3,
    /// `lambda_i / a_i`.
    pub b: Vector3,
    /// `[p2 p3 p4]`.
    pub b_mat: Matrix3d,
    /// `[(x_2 - x_1; 1) (x_3 - x_1; 1) (x_4 - x_1; 1)]`.
    pub x_mat: Matrix3d,
    pub p1: Vector3,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadSolution {
    pub estimate: NormalEstimate,
    pub intermediates: QuadIntermediates,
}

/// Solves `X lambda = e3` for the quad `x1..x4`.
pub fn barycentric_lambda(x: [&PlanarPoint; 4]) -> Result<Vector3> {
    let col = |i: usize| Vector3::new(x[i].x - x[0].x, x[i].y - x[0].y, 1.0);
    let x_mat = Matrix3d::from_columns(&[col(1), col(2), col(3)]);
    lambda_from_x(&x_mat)
}

fn lambda_from_x(x_mat: &Matrix3d) -> Result<Vector3> {
    let det = x_mat.determinant();
    if !(det.abs() >= SINGULAR_X_TOL) {
        return Err(Error::SingularX { det });
    }
    x_mat
        .lu()
        .solve(&Vector3::z())
        .ok_or(Error::SingularX { det })
}

/// Estimates the plane normal from the four correspondences of `quad`; the
/// first index plays the role of the reference point `P1`.
pub fn solve_eta_quad(c: &CorrespondenceSet, quad: [usize; 4]) -> Result<QuadSolution> {
    if quad.iter().any(|&i| i >= c.len()) {
        return Err(Error::InvalidInput(format!("quad {quad:?} out of range")));
    }
    let pts = c.points();
    let brg = c.bearings();
    let x = [&pts[quad[0]], &pts[quad[1]], &pts[quad[2]], &pts[quad[3]]];
    let col = |i: usize| Vector3::new(x[i].x - x[0].x, x[i].y - x[0].y, 1.0);
    let x_mat = Matrix3d::from_columns(&[col(1), col(2), col(3)]);
    let lambda = lambda_from_x(&x_mat)?;

    let p1 = *brg[quad[0]];
    let b_mat = Matrix3d::from_columns(&[*brg[quad[1]], *brg[quad[2]], *brg[quad[3]]]);
    let det_b = b_mat.determinant();
    if !(det_b.abs() >= SINGULAR_B_TOL) {
        return Err(Error::SingularB { det: det_b });
    }
    let a = b_mat.lu().solve(&p1).ok_or(Error::SingularB { det: det_b })?;
    if let Some(i) = a.iter().position(|ai| !(ai.abs() >= ZERO_COEFF_TOL)) {
        return Err(Error::ZeroCoefficient { index: i + 2 });
    }
    let b = lambda.component_div(&a);

    // B^T eta is proportional to b.
    let raw = b_mat
        .transpose()
        .lu()
        .solve(&b)
        .ok_or(Error::SingularB { det: det_b })?;
    let mut eta = UnitVector3::from_direction(raw)?;
    if eta.dot(&p1) < 0.0 {
        eta = UnitVector3::new_unchecked(-eta.into_inner());
    }

    let intermediates = QuadIntermediates { lambda, a, b, b_mat, x_mat, p1 };
    let gamma = confidence_weight(&intermediates);
    Ok(QuadSolution {
        estimate: NormalEstimate { eta_hat: eta, gamma, quad },
        intermediates,
    })
}

/// `gamma = |min_i(a_i) * det(B)|`; favours widely spread quads.
pub fn confidence_weight(q: &QuadIntermediates) -> f64 {
    let min_a = q.a.iter().copied().fold(f64::INFINITY, f64::min);
    (min_a * q.b_mat.determinant()).abs()
}

/// Normalized `sum(gamma_j * eta_j)`.
pub fn average_normals_algebraic(estimates: &[NormalEstimate]) -> Result<UnitVector3> {
    if estimates.is_empty() {
        return Err(Error::InvalidInput("no normal estimates to average".into()));
    }
    let sum: Vector3 = estimates.iter().map(|e| *e.eta_hat * e.gamma).sum();
    if !(sum.norm() >= DEGENERATE_SUM_TOL) {
        return Err(Error::DegenerateSum);
    }
    UnitVector3::from_direction(sum)
}

/// Stacks `gamma_j (B_j^T - b_j p1_j^T)` for every quad.
pub fn constraint_matrix(quads: &[QuadSolution]) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(3 * quads.len(), 3);
    for (j, q) in quads.iter().enumerate() {
        let it = &q.intermediates;
        let block = (it.b_mat.transpose() - it.b * it.p1.transpose()) * q.estimate.gamma;
        d.fixed_view_mut::<3, 3>(3 * j, 0).copy_from(&block);
    }
    d
}

/// Unit eigenvector of `D^T D` for its smallest eigenvalue.
///
/// The sign is chosen so that the mean of `eta . p` over every bearing of the
/// supplied quads is positive.
pub fn solve_eta_eigen(quads: &[QuadSolution]) -> Result<UnitVector3> {
    if quads.is_empty() {
        return Err(Error::InvalidInput("no quads for the eigen method".into()));
    }
    let d = constraint_matrix(quads);
    let dtd: Matrix3d = (d.transpose() * &d).fixed_view::<3, 3>(0, 0).into_owned();
    let eig = SymmetricEigen::new(dtd);

    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let lo = eig.eigenvalues[order[0]];
    let hi = eig.eigenvalues[order[1]];
    let top = eig.eigenvalues[order[2]].abs().max(f64::MIN_POSITIVE);
    if !(hi - lo > EIGEN_GAP_TOL * top) {
        return Err(Error::AmbiguousEigenvector { lo, hi });
    }

    let v = eig.eigenvectors.column(order[0]).into_owned();
    let mut eta = UnitVector3::from_direction(v)?;
    let mean_dot: f64 = quads
        .iter()
        .map(|q| {
            let it = &q.intermediates;
            eta.dot(&it.p1) + (eta.transpose() * it.b_mat).sum()
        })
        .sum();
    if mean_dot < 0.0 {
        eta = UnitVector3::new_unchecked(-eta.into_inner());
    }
    Ok(eta)
}

/// Running normal estimate refined frame by frame on the sphere.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct SmoothedNormal {
    eta: Option<UnitVector3>,
}

impl SmoothedNormal {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_prior(eta: UnitVector3) -> Self {
        SmoothedNormal { eta: Some(eta) }
    }

    pub fn is_initialized(&self) -> bool {
        self.eta.is_some()
    }

    pub fn eta(&self) -> Option<UnitVector3> {
        self.eta
    }

    /// Drops the prior; the next update re-initializes from its estimates.
    pub fn reset(&mut self) {
        self.eta = None;
    }

    /// One smooth-averaging step with all of a frame's estimates.
    ///
    /// An uninitialized session is seeded with the algebraic average instead.
    pub fn update(&mut self, estimates: &[NormalEstimate]) -> Result<UnitVector3> {
        let Some(prior) = self.eta else {
            let eta = average_normals_algebraic(estimates)?;
            self.eta = Some(eta);
            return Ok(eta);
        };
        let total: f64 = estimates.iter().map(|e| e.gamma).sum();
        let scale = 1.0 / total.max(1.0);
        let sigma: Vector3 = estimates
            .iter()
            .map(|e| prior.cross(&e.eta_hat) * (e.gamma * scale))
            .sum();
        let eta = rotate_unit(&sigma, &prior);
        self.eta = Some(eta);
        Ok(eta)
    }

    /// Applies the smooth-averaging step once per estimate, in order.
    pub fn update_sequential(&mut self, estimate: &NormalEstimate) -> Result<UnitVector3> {
        self.update(std::slice::from_ref(estimate))
    }
}

fn rotate_unit(sigma: &Vector3, eta: &UnitVector3) -> UnitVector3 {
    let v = rodrigues_exp(sigma).apply(eta);
    // Re-normalize only to strip rounding; the rotation preserves length.
    UnitVector3::new_unchecked(v / v.norm())
}

/// Functional form of [`SmoothedNormal::update`].
pub fn smooth_update(state: SmoothedNormal, estimates: &[NormalEstimate]) -> Result<SmoothedNormal> {
    let mut s = state;
    s.update(estimates)?;
    Ok(s)
}

/// Functional form of [`SmoothedNormal::update_sequential`].
pub fn smooth_update_sequential(
    state: SmoothedNormal,
    estimate: &NormalEstimate,
) -> Result<SmoothedNormal> {
    let mut s = state;
    s.update_sequential(estimate)?;
    Ok(s)
}

/// `1/2 * sum(gamma_j |eta_j - eta|^2)`, the objective smooth averaging descends.
pub fn spherical_objective(eta: &UnitVector3, estimates: &[NormalEstimate]) -> f64 {
    0.5 * estimates
        .iter()
        .map(|e| e.gamma * (*e.eta_hat - **eta).norm_squared())
        .sum::<f64>()
}
