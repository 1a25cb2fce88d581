//! Simulation and verification tools for singular (p,q)-Laplacian problems
//!
//! `u_t - Δ_p u - Δ_q u = ϑ u^{-δ} + f(x, u)` in a box, `u = 0` on its boundary.

pub mod cli;
pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod operators;
pub mod parabolic;

pub use error::{Error, Result};
pub use mesh::{phi_delta, Mesh, MeshSpec};
pub use operators::{Field, Nonlinearity, ProblemParams};
