//! Verification engine for equivariant mirror symmetry of the weighted
//! projective line `P(m, n)`.
//!
//! The crate is organised bottom-up: truncated series arithmetic, the mirror
//! Landau-Ginzburg model and its quantum ring, intersection numbers on moduli
//! of curves, spectral data, R-matrices, graph sums, and numerical thimble
//! integrals.

pub mod error;
pub mod graphs;
pub mod intersect;
pub mod model;
pub mod qring;
pub mod rmatrix;
pub mod series;
pub mod spectral;
pub mod thimble;

pub use error::{Error, Result};
pub use intersect::{psi_intersection, IntersectionKey};
pub use model::{CriticalSet, Laurent, Model, ModelParams, SqrtDelta, Superpotential};
pub use series::{Branch, SeriesError, Tolerance, TruncSeries1, TruncSeries2, Var, C64};
