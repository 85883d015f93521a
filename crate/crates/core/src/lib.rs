//! Numerical laboratory for the XY model in a random transverse field
//! with Kac (long but finite range) interactions: mean-field free energy
//! and its minimizers, the averaged self-consistency map, nonlocal
//! magnetization-profile relaxation, disorder coarse-graining, and a
//! lattice heat-bath Monte Carlo with contour extraction.

pub mod circle;
pub mod disorder;
pub mod entropy_est;
pub mod error;
pub mod flow;
pub mod harness;
pub mod kernel;
pub mod lattice;
pub mod mean_field;
pub mod quadrature;
pub mod rng;
pub mod self_consistency;
pub mod vec2;

pub use error::{Error, Result};
pub use mean_field::MFParams;
pub use vec2::Vec2;
