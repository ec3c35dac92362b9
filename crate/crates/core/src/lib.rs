//! Flux-constrained Ginzburg-Landau vortex rings on the flat 3-torus.
//!
//! Grid, fields, operators, potentials and the energy layer are generic over
//! the scalar; the aliases below fix it to `f64` or `f32`.

pub mod error;
pub mod scalar;
pub mod torus;

pub mod potentials;
pub mod velocity;
pub mod functional;
pub mod photography;
pub mod solver;
pub mod barycenter;
pub mod isoperimetric;
pub mod cli;

pub use error::{GpxError, Result};
pub use scalar::Scalar;
pub use torus::{ComplexField, Point, RealField, TorusGrid, VecField};
pub use velocity::VelocityField;
pub use potentials::Potential;

pub type Grid64 = TorusGrid<f64>;
pub type Grid32 = TorusGrid<f32>;
pub type Field64 = ComplexField<f64>;
pub type Field32 = ComplexField<f32>;
pub type RealField64 = RealField<f64>;
pub type RealField32 = RealField<f32>;
pub type VecField64 = VecField<f64>;
pub type VecField32 = VecField<f32>;
pub type Velocity64 = VelocityField<f64>;
pub type Velocity32 = VelocityField<f32>;
pub type Potential64 = Potential<f64>;
pub type Potential32 = Potential<f32>;
