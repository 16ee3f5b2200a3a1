//! Numerical laboratory for Finsler measure spaces.
//!
//! A Finsler measure space is a smooth domain equipped with a possibly
//! non-reversible norm `F(x, V)` on each tangent space together with a
//! measure `dm = e^{phi(x)} dx`. This crate provides:
//!
//! * [`norms`] — norm families (Euclidean, Riemannian, Randers, quartic),
//!   fundamental and Cartan tensors, dual norms, the Legendre transform,
//!   and sampled uniform-convexity/reversibility constants;
//! * [`geometry`] — geodesics, exponential map, non-symmetric distances on
//!   meshes, forward metric balls, flag/Ricci curvature probes, weighted
//!   Ricci bounds, and volume-comparison checks;
//! * [`pde`] — piecewise-linear finite elements for the anisotropic
//!   Dirichlet energy, weighted (non-linear) Laplacians, and a convex
//!   quasi-Newton solver for harmonic functions;
//! * [`verify`] — experiment drivers that measure both sides of gradient,
//!   Harnack, Liouville, Bochner, Poincaré and Sobolev inequalities and
//!   report the observed constants;
//! * [`config`] — declarative structure/scenario descriptions used by the
//!   `finlab` binary.
//!
//! Everything is deterministic for a fixed seed: sampling uses ChaCha
//! streams and all reductions run in a fixed order.

pub mod config;
pub mod expr;
pub mod geometry;
pub mod linalg;
pub mod mesh;
pub mod norms;
pub mod pde;
pub mod report;
pub mod verify;

pub use linalg::{Covector, Point, SymMat, Vector, MAX_DIM};
pub use norms::FinslerStructure;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
