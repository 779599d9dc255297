//! Generalized cusps in properly convex projective geometry.
//!
//! The crate is organized bottom-up:
//!
//! * [`projective`]: homogeneous coordinates and triangular exp/log.
//! * [`domain`]: the ψ-domain, its horofunction and chords.
//! * [`groups`]: translation groups, radial flow, `O(ψ)`, element types.
//! * [`metrics`]: Hilbert metric, the flat metric β, second fundamental form.
//! * [`classification`]: lattices, the Θ map, ψ-recovery, low-dimensional forms.
//! * [`volume`]: Busemann densities, cross-sections and cusp volume.

pub mod classification;
pub mod domain;
pub mod error;
pub mod groups;
pub mod metrics;
pub mod projective;
pub mod settings;
pub mod volume;

pub use domain::{Domain, DomainShape, WeylVector};
pub use error::{CuspError, Result};
