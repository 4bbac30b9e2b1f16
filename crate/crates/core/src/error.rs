use thiserror::Error;

/// Everything that can go wrong inside the solver, the simulator and the
/// benchmark harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("vector norm {norm} is too far from 1 to be a unit vector")]
    NotUnit { norm: f64 },

    #[error("matrix is not a rotation (orthogonality residual {ortho}, det {det})")]
    NotRotation { ortho: f64, det: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("every 4-point subset contains a collinear triple")]
    NoValidQuad,

    #[error("target-point matrix X is singular (det {det:e}); the quad has a collinear triple")]
    SingularX { det: f64 },

    #[error("bearing matrix B is singular (det {det:e})")]
    SingularB { det: f64 },

    #[error("bearing decomposition coefficient a_{index} is zero")]
    ZeroCoefficient { index: usize },

    #[error("weighted sum of normal estimates vanishes")]
    DegenerateSum,

    #[error("two smallest eigenvalues of D^T D coincide ({lo:e}, {hi:e})")]
    AmbiguousEigenvector { lo: f64, hi: f64 },

    #[error("moment matrix of target points is singular (condition number {cond:e})")]
    SingularMoment { cond: f64 },

    #[error("bearing {index} is grazing the target plane (eta . p = {dot:e})")]
    GrazingBearing { index: usize, dot: f64 },

    #[error("all points lie at the target origin; distance cannot be averaged")]
    AllPointsExcluded,

    #[error("direction matrix is rank deficient (smallest singular value {sigma_min:e})")]
    RankDeficient { sigma_min: f64 },

    #[error("camera is not on the viewing side of the target plane: {0}")]
    OrientationSide(String),

    #[error("homography determinant {det:e} is not positive")]
    NonPositiveDeterminant { det: f64 },

    #[error("point {index} projects behind the camera")]
    BehindCamera { index: usize },

    #[error("pose sampling exhausted after {attempts} rejections")]
    SamplingExhausted { attempts: usize },

    #[error("cannot summarise an empty group of records")]
    EmptyGroup,
}

impl Error {
    /// Stable machine-readable identifier, used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::NotUnit { .. } => "not_unit",
            Error::NotRotation { .. } => "not_rotation",
            Error::Degenerate(_) => "degenerate",
            Error::NoValidQuad => "no_valid_quad",
            Error::SingularX { .. } => "singular_x",
            Error::SingularB { .. } => "singular_b",
            Error::ZeroCoefficient { .. } => "zero_coefficient",
            Error::DegenerateSum => "degenerate_sum",
            Error::AmbiguousEigenvector { .. } => "ambiguous_eigenvector",
            Error::SingularMoment { .. } => "singular_moment",
            Error::GrazingBearing { .. } => "grazing_bearing",
            Error::AllPointsExcluded => "all_points_excluded",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::OrientationSide(_) => "orientation_side",
            Error::NonPositiveDeterminant { .. } => "nonpositive_determinant",
            Error::BehindCamera { .. } => "behind_camera",
            Error::SamplingExhausted { .. } => "sampling_exhausted",
            Error::EmptyGroup => "empty_group",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
