//! Periodic grid on the flat 3-torus and its discrete calculus.

pub mod field;
pub mod grid;
pub mod interp;
pub mod io;
pub mod ops;
pub mod reduce;
pub mod spectral;

pub use field::{ComplexField, RealField, VecField};
pub use grid::{Point, TorusGrid};
pub use ops::{ball_integral, curl, diff_central, divergence, gradient, integrate, laplacian, Stencil};
pub use spectral::{poisson_solve, Spectral};
