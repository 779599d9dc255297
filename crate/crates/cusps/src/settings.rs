use serde::{Deserialize, Serialize};

/// Numeric thresholds shared by every module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Generic equality of floating values and membership slack.
    pub equality: f64,
    /// `|det|` relative to `norm^(n+1)` below which a matrix is singular.
    pub invertibility: f64,
    /// Absolute threshold for treating a Weyl coefficient as zero.
    pub psi_zero: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        DEFAULT_TOL
    }
}

pub const DEFAULT_TOL: Tolerances = Tolerances {
    equality: 1e-9,
    invertibility: 1e-12,
    psi_zero: 1e-12,
};
