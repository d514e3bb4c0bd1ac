//! Initial-data constructors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid1D};
use crate::interface_ode::OrbitResult;
use crate::params::ModelParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    /// `height * exp(1 - 1/(1 - r^2))`, `r = (x - center)/width`, zero for `|r| >= 1`.
    SmoothBump { center: f64, width: f64, height: f64 },
    /// `chi_plus |x|^{4/n}` for `x >= 0`, `chi_minus |x|^{4/n}` for `x < 0`.
    Riemann { chi_plus: f64, chi_minus: f64 },
    /// `x^{3/n} phi(ln x)` for `x > 0`, zero otherwise.
    Interface {
        #[serde(skip)]
        orbit: Option<Box<OrbitResult>>,
    },
}

/// The compact bump profile at normalized coordinate `r`.
pub fn bump_profile(r: f64) -> f64 {
    if r.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

pub fn sample_initial_data(kind: &InitialData, grid: Grid1D, params: &ModelParams) -> Result<Field> {
    match kind {
        InitialData::SmoothBump { center, width, height } => {
            if !(*width > 0.0 && width.is_finite()) {
                return Err(Error::InvalidInput(format!("bump width {width} must be positive")));
            }
            if !center.is_finite() || !height.is_finite() {
                return Err(Error::NonFinite("bump parameters".into()));
            }
            Field::from_fn(grid, |x| height * bump_profile((x - center) / width))
        }
        InitialData::Riemann { chi_plus, chi_minus } => {
            params.validate()?;
            let p = 4.0 / params.n;
            Field::from_fn(grid, |x| {
                let chi = if x >= 0.0 { chi_plus } else { chi_minus };
                chi * x.abs().powf(p)
            })
        }
        InitialData::Interface { orbit } => {
            params.validate()?;
            let orbit = orbit
                .as_deref()
                .ok_or_else(|| Error::InvalidInput("interface data requires an orbit".into()))?;
            interface_field(grid, params.n, orbit, 0.0)
        }
    }
}

/// `x^{3/n} phi(ln x + shift)` for `x > 0`, zero otherwise.
pub fn interface_field(grid: Grid1D, n: f64, orbit: &OrbitResult, shift: f64) -> Result<Field> {
    if !orbit.converged {
        return Err(Error::InvalidInput("interface data requires a converged orbit".into()));
    }
    let mu = 3.0 / n;
    let values = grid
        .nodes()
        .map(|x| {
            if x > 0.0 {
                Ok(x.powf(mu) * orbit.phi(x.ln() + shift)?)
            } else {
                Ok(0.0)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Field::new(grid, values, 0.0)
}
