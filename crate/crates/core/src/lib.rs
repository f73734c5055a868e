//! Weighted equilibrium problems for Riesz, Coulomb and logarithmic kernels
//! on the unit ball and on the segment, with a point charge above the
//! conductor as external field.

pub mod balayage;
pub mod ball_riesz;
pub mod coulomb_ball;
pub mod discrete_oracle;
pub mod error;
pub mod geometry;
pub mod iterated_balayage;
pub mod log_segment;
pub mod potentials;
pub mod problem;
pub mod quadrature;
pub mod roots;
pub mod specfun;

pub use error::{Error, Result};
pub use specfun::{RieszParams, SphereConstants};
