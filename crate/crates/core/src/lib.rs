//! Numerical laboratory for the coupled thermal phase-field system
//!
//! ```text
//! u_t + l φ_t = Δu + f        in Ω × (0, T)
//! φ_t         = Δφ + F(x,t,φ) + u
//! ∂u/∂ν = ∂φ/∂ν = 0           on ∂Ω
//! ```
//!
//! The crate provides finite-difference discretizations on rectangles, the
//! homotopy (λ-continuation + damped Picard) and semi-implicit stepping solvers
//! for the auxiliary phase problem and the full system, numerical checks of the
//! structural hypotheses on `F`, and monitors for the a-priori, stability,
//! uniqueness and conservation properties of the solutions.

pub mod coupled_solver;
pub mod data;
mod error;
mod fixed_point;
pub mod io;
pub mod linear_parabolic;
pub mod mesh;
pub mod nonlinearity;
pub mod phase_solver;
pub mod verification;

pub use error::{Error, Result};
pub use mesh::{Field, Grid, Trajectory};
pub use nonlinearity::NonlinearityDescriptor;
