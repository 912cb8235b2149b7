use serde::Serialize;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq, Serialize)]
#[serde(tag = "kind", content = "details", rename_all = "snake_case")]
pub enum Error {
    #[error("bodies {i} and {j} collide (distance {distance:e})")]
    Collision { i: usize, j: usize, distance: f64 },

    #[error("spectrum is not real (largest imaginary part {max_imag:e})")]
    NonRealSpectrum { max_imag: f64 },

    #[error("degenerate masses: {0}")]
    DegenerateMass(String),

    #[error("rho = {0} lies on the excluded set of the mass parametrization")]
    SingularRho(f64),

    #[error("mass system lost rank at rho1 = {rho1}, rho2 = {rho2}")]
    RankDeficiency { rho1: f64, rho2: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (best residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("configuration is an absolute equilibrium (multiplier {multiplier:e})")]
    AbsoluteEquilibrium { multiplier: f64 },

    #[error("not a central configuration (residual {residual:e})")]
    NotCentral { residual: f64 },

    #[error("invalid eigenvalue index k = {0}")]
    InvalidK(i64),

    #[error("no m3 gives non-negative masses at rho1 = {rho1}, rho2 = {rho2}")]
    EmptyFeasibleSet { rho1: f64, rho2: f64 },

    #[error("integrator failed at t = {t}")]
    StepFailure { t: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// Stable machine-readable tag, used in structured error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Collision { .. } => "collision",
            Error::NonRealSpectrum { .. } => "non_real_spectrum",
            Error::DegenerateMass(_) => "degenerate_mass",
            Error::SingularRho(_) => "singular_rho",
            Error::RankDeficiency { .. } => "rank_deficiency",
            Error::NoConvergence { .. } => "no_convergence",
            Error::AbsoluteEquilibrium { .. } => "absolute_equilibrium",
            Error::NotCentral { .. } => "not_central",
            Error::InvalidK(_) => "invalid_k",
            Error::EmptyFeasibleSet { .. } => "empty_feasible_set",
            Error::StepFailure { .. } => "step_failure",
            Error::InvalidInput(_) => "invalid_input",
        }
    }
}
