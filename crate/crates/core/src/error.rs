use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty interval [{min}, {max}]")]
    EmptyInterval { min: f64, max: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("quadrature did not converge: achieved error {achieved:e} > tolerance {tol:e} at y = {y}")]
    QuadratureNonConvergence { y: f64, achieved: f64, tol: f64 },

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("domain too small: kernel mass outside domain is {outside:e}")]
    DomainTooSmall { outside: f64 },

    #[error("Newton iteration diverged after {iterations} iterations (residual {residual:e})")]
    NewtonDivergence { iterations: usize, residual: f64 },

    #[error("time step collapsed below dt_min = {dt_min:e} at t = {t} (sup|u| = {sup})")]
    StepCollapse { t: f64, dt_min: f64, sup: f64 },

    #[error("singular matrix at pivot {0}")]
    SingularMatrix(usize),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("integration budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("rescaled domain overflow: {0}")]
    DomainOverflow(String),
}
