//! Equilibrium and stability of epitaxially strained elastic films with
//! anisotropic surface energy.
//!
//! A film occupies `{0 < y < h(x)}` over a periodic cell, is clamped to a
//! mismatched substrate at `y = 0`, and carries the energy
//! `int W(grad u) + int_{Gamma_h} psi(nu)`. The crate computes elastic
//! equilibria, the second variation of the energy and the associated
//! eigenvalue tests, the flat-film thresholds, and exact checks of the
//! polynomial identity behind the complementing condition.

// Index loops mirror the tensor notation; negated comparisons reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod anisotropy;
pub mod elasticity;
pub mod flat;
pub mod geometry;
pub mod linalg;
pub mod polyident;
pub mod spectral;
pub mod stability;
pub mod tensor;

pub use anisotropy::{Anisotropy, ConvexityConstants};
pub use elasticity::{DisplacementField, ElasticDensity, Mismatch};
pub use geometry::{FilmGrid, Profile};
