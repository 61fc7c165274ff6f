//! Film profiles, the mapped collocation grid on the film, surface
//! geometry of the graph, and the diffeomorphisms between nearby films.

mod diffeo;
mod grid;
mod profile;
mod surface;

use thiserror::Error;

pub use diffeo::{Cutoff, Diffeomorphism};
pub use grid::{FilmGrid, Stencil};
pub use profile::{eval_trig, FourierMode, ModeIndex, Profile, ProfileSpec};
pub use surface::{
    anisotropic_mean_curvature, graph_geometry, graph_normal, surface_divergence, surface_integral,
    tangential_gradient, unnormalized_normal, SurfaceGeometry,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("profiles too far apart for the cutoff map: sup|g - h| = {sup} >= {bound}")]
    NotDiffeomorphic { sup: f64, bound: f64 },
}
