//! Numerical laboratory for the fourth-order parabolic equation
//! `∂t u + Δ²u = ∇·F(∇u)` on a periodic box.

pub mod error;
pub mod experiments;
pub mod grid;
pub mod initial;
pub mod kernel;
pub mod norms;
pub mod params;
pub mod quadrature;
pub mod registry;
pub mod snapshot;
pub mod solver;
pub mod trajectory;

pub use error::{Error, Result};
pub use grid::{Field, GridSpec, TensorField};
pub use norms::NormReport;
pub use trajectory::Trajectory;
