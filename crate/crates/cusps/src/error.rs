use thiserror::Error;

/// Every failure the library can report. Variants map one-to-one onto the
/// machine-readable `kind` strings emitted by the command-line driver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CuspError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("image of the point vanishes under the map")]
    ZeroImage,
    #[error("point lies on the hyperplane at infinity")]
    AtInfinity,
    #[error("matrix has a non-positive diagonal entry")]
    NonPositiveDiagonal,
    #[error("matrix is not invertible")]
    Singular,
    #[error("Weyl vector coefficients are not non-increasing")]
    UnsortedWeyl,
    #[error("Weyl vector has a negative coefficient")]
    NegativeWeyl,
    #[error("point is outside the coordinate chart V(psi)")]
    OutsideChart,
    #[error("direction vector is numerically zero")]
    DegenerateDirection,
    #[error("translation parameters violate psi(X) = 0 (residual {0:e})")]
    KernelViolation(f64),
    #[error("matrix is not in the group (residual {0:e})")]
    NotInGroup(f64),
    #[error("operation not defined when every psi coefficient is nonzero")]
    UnsupportedBranch,
    #[error("point is not in the interior of the domain")]
    NotInterior,
    #[error("point is not on the boundary of the domain")]
    NotOnBoundary,
    #[error("scale factor must be positive")]
    NonPositiveScale,
    #[error("psi outside the supported normalization cases: {0}")]
    UnsupportedPsi(String),
    #[error("psi is zero")]
    ZeroPsi,
    #[error("rotational part is outside O(psi)")]
    RotationalPartOutsidePsi,
    #[error("lattice generators do not span")]
    DegenerateLattice,
    #[error("lattices belong to different psi")]
    MixedPsi,
    #[error("generators are outside the supported shapes: {0}")]
    UnsupportedGroupShape(String),
    #[error("matrix has non-real spectrum")]
    ComplexSpectrum,
    #[error("spectrum has mixed signs")]
    MixedSigns,
    #[error("spectrum does not belong to a cusp holonomy: {0}")]
    DegenerateSpectrum(String),
    #[error("parameters violate y2 >= y1 >= 0")]
    OrderViolation,
    #[error("patch is degenerate")]
    DegeneratePatch,
    #[error("volume computations support n in {{2, 3}}, got {0}")]
    UnsupportedDimension(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl CuspError {
    /// Stable identifier used in JSON error objects.
    pub fn kind(&self) -> &'static str {
        match self {
            CuspError::DimensionMismatch { .. } => "DimensionMismatch",
            CuspError::ZeroImage => "ZeroImage",
            CuspError::AtInfinity => "AtInfinity",
            CuspError::NonPositiveDiagonal => "NonPositiveDiagonal",
            CuspError::Singular => "Singular",
            CuspError::UnsortedWeyl => "UnsortedWeyl",
            CuspError::NegativeWeyl => "NegativeWeyl",
            CuspError::OutsideChart => "OutsideChart",
            CuspError::DegenerateDirection => "DegenerateDirection",
            CuspError::KernelViolation(_) => "KernelViolation",
            CuspError::NotInGroup(_) => "NotInGroup",
            CuspError::UnsupportedBranch => "UnsupportedBranch",
            CuspError::NotInterior => "NotInterior",
            CuspError::NotOnBoundary => "NotOnBoundary",
            CuspError::NonPositiveScale => "NonPositiveScale",
            CuspError::UnsupportedPsi(_) => "UnsupportedPsi",
            CuspError::ZeroPsi => "ZeroPsi",
            CuspError::RotationalPartOutsidePsi => "RotationalPartOutsidePsi",
            CuspError::DegenerateLattice => "DegenerateLattice",
            CuspError::MixedPsi => "MixedPsi",
            CuspError::UnsupportedGroupShape(_) => "UnsupportedGroupShape",
            CuspError::ComplexSpectrum => "ComplexSpectrum",
            CuspError::MixedSigns => "MixedSigns",
            CuspError::DegenerateSpectrum(_) => "DegenerateSpectrum",
            CuspError::OrderViolation => "OrderViolation",
            CuspError::DegeneratePatch => "DegeneratePatch",
            CuspError::UnsupportedDimension(_) => "UnsupportedDimension",
            CuspError::InvalidInput(_) => "InvalidInput",
        }
    }
}

pub type Result<T> = std::result::Result<T, CuspError>;
