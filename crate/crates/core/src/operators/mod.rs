//! Discrete operators, fields and problem data.

mod field;
mod growth;
mod nonlinearity;
mod params;
pub(crate) mod pq;

pub use field::Field;
pub use growth::{check_growth_conditions, log_grid, GrowthReport, GrowthViolation};
pub use nonlinearity::{Forcing, ForcingFn, Nonlinearity, PowerLaw, SubhomogFamily};
pub use params::ProblemParams;
pub use pq::{
    apply_p_laplacian, apply_pq_laplacian, energy_j, energy_j_at, grad_integral, nehari_i, nehari_i_at,
    singular_mass, singular_potential,
};
