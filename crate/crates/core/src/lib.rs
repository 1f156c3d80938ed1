//! Numerical laboratory for the confluence of two Fuchsian singularities into an
//! irregular singular point of Poincaré rank one.
//!
//! The crate transports fundamental solutions of linear complex ODEs along
//! paths, builds monodromy operators of a confluent family, computes Stokes
//! matrices of the limiting irregular equation from its formal normal form,
//! and compares the two: commutators of fractional monodromy powers against
//! Stokes operators, and integer monodromy words against divergence.

pub mod cli;
pub mod error;
pub mod family;
pub mod integrator;
pub mod linalg;
pub mod mobius;
pub mod monodromy;
pub mod stokes;
pub mod xnum;

pub use error::{LabError, Result};
pub use family::{ConfluentFamily, PolyMatrix};

pub use integrator::{CoefficientField, Path, PathSegment, ScaledMatrix, TransferOptions};

pub type C64 = num_complex::Complex64;
pub type CMat = nalgebra::DMatrix<C64>;
