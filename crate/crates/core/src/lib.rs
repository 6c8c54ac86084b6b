//! Fractional Cahn-Hilliard system with solid Dirichlet conditions on an
//! interval: P1 discretization of the integral fractional Laplacian, an
//! energy-stable convex-splitting time stepper, stationary-state analysis and
//! long-time convergence diagnostics.

pub mod config;
pub mod diagnostics;
pub mod energy;
pub mod equilibrium;
pub mod error;
pub mod evolution;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod operator;
pub mod potential;
pub mod quadrature;
pub mod verify;

pub use error::{Error, Result};
pub use mesh::{FemVector, FracMesh};
pub use operator::{FracExponents, OperatorSet, Stiffness};
pub use potential::Potential;
