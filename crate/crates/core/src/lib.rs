//! Newtonian n-body central configurations, the spectrum of the Hessian of
//! the force function, and integrability obstructions derived from it.

pub mod central_config;
pub mod error;
pub mod fourbody;
pub mod galois;
pub mod integrable;
pub mod poly;
pub mod potential;

pub use central_config::{
    euler_quintic, masses_from_rho, moulton_solve, normalize_cc, solve_masses_4body,
    CentralConfiguration, MassLine3, MassLine4,
};
pub use error::{Error, Result};
pub use potential::{
    acceleration, eval_potential, gradient, hessian, hessian_w, third_contract, Configuration,
    HessianW, MassVector,
};
