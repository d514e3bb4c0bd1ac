//! Numerical laboratory for the regularized thin-film equation
//! `u_t = -(phi(u) u_xxx)_x`, its bi-harmonic endpoint `u_t = -u_xxxx`, and the
//! oscillatory-interface ODE.

pub mod banded;
pub mod biharmonic;
pub mod diagnostics;
pub mod error;
pub mod fit;
pub mod grid;
pub mod homotopy;
pub mod initial;
pub mod interface_ode;
pub mod ode;
pub mod params;
pub mod quadrature;
pub mod regularization;
pub mod riemann;
pub mod solver;

pub use biharmonic::{biharmonic_solve, kernel_1d, kernel_radial, kernel_residual, KernelTable};
pub use error::{Error, Result};
pub use grid::{Field, Grid1D, StepRecord, Trajectory};
pub use params::{Mobility, ModelParams};
pub use regularization::{epsilon_of_n, mobility, perturbation_f, Schedule, ScheduleRule};
pub use solver::{simulate, step, Boundary, FaceAverage, RunStatus, Simulation, SolverConfig};
