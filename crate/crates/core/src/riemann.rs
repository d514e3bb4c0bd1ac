//! Scaling group, separable blow-up profiles and Riemann-type experiments for
//! `v_t = -(phi(v) v_yyy)_y`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::grid::{Field, Grid1D};
use crate::initial::{sample_initial_data, InitialData};
use crate::interface_ode::OrbitResult;
use crate::params::{Mobility, ModelParams};
use crate::solver::{simulate, Boundary, RunStatus, SolverConfig};

/// `u(x, t) = eps v(x / eps^alpha, t / eps^beta)` with `beta = 4 alpha - n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaleSpec {
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub n: f64,
}

/// Largest rescaled node count or coordinate magnitude accepted.
pub const MAX_RESCALED_EXTENT: f64 = 1e12;

impl RescaleSpec {
    pub fn new(alpha: f64, epsilon: f64, n: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) || !(n > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidInput(format!(
                "rescaling needs eps > 0, n > 0 (eps = {epsilon}, n = {n}, alpha = {alpha})"
            )));
        }
        Ok(Self {
            alpha,
            beta: 4.0 * alpha - n,
            epsilon,
            n,
        })
    }

    /// The spatial exponent leaving time unscaled, `alpha = n/4`.
    pub fn time_invariant(epsilon: f64, n: f64) -> Result<Self> {
        Self::new(n / 4.0, epsilon, n)
    }

    pub fn inverse(&self) -> Result<Self> {
        Self::new(self.alpha, 1.0 / self.epsilon, self.n)
    }

    /// Spatial scale `eps^alpha`.
    pub fn length_scale(&self) -> f64 {
        self.epsilon.powf(self.alpha)
    }

    pub fn time_scale(&self) -> f64 {
        self.epsilon.powf(self.beta)
    }
}

/// `v(y) = u(eps^alpha y) / eps` on the grid `y = x / eps^alpha`.
pub fn rescale(u: &Field, spec: &RescaleSpec) -> Result<Field> {
    let l = spec.length_scale();
    let (a, b) = (u.grid.x_min() / l, u.grid.x_max() / l);
    if !(a.is_finite() && b.is_finite()) || a.abs().max(b.abs()) > MAX_RESCALED_EXTENT {
        return Err(Error::DomainOverflow(format!("rescaled domain [{a:e}, {b:e}]")));
    }
    let grid = Grid1D::new(a, b, u.grid.n_cells())?;
    let values = u.values.iter().map(|v| v / spec.epsilon).collect();
    Field::new(grid, values, u.time / spec.time_scale())
}

/// Cubic Lagrange interpolation on a uniform grid.
fn interpolate(f: &Field, x: f64) -> f64 {
    let g = f.grid;
    let h = g.spacing();
    let m = g.len();
    let s = (x - g.x_min()) / h;
    let i = (s.floor() as isize).clamp(1, m as isize - 3) as usize;
    let t = s - i as f64;
    let (p0, p1, p2, p3) = (f.values[i - 1], f.values[i], f.values[i + 1], f.values[i + 2]);
    let w0 = -t * (t - 1.0) * (t - 2.0) / 6.0;
    let w1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
    let w2 = -(t + 1.0) * t * (t - 2.0) / 2.0;
    let w3 = (t + 1.0) * t * (t - 1.0) / 6.0;
    w0 * p0 + w1 * p1 + w2 * p2 + w3 * p3
}

/// [`rescale`] followed by interpolation onto `target`.
pub fn rescale_onto(u: &Field, spec: &RescaleSpec, target: Grid1D) -> Result<Field> {
    let v = rescale(u, spec)?;
    let slack = 1e-9 * v.grid.spacing();
    if target.x_min() < v.grid.x_min() - slack || target.x_max() > v.grid.x_max() + slack {
        return Err(Error::DomainOverflow(format!(
            "target [{}, {}] exceeds rescaled domain [{}, {}]",
            target.x_min(),
            target.x_max(),
            v.grid.x_min(),
            v.grid.x_max()
        )));
    }
    let values = target.nodes().map(|y| interpolate(&v, y)).collect();
    Field::new(target, values, v.time)
}

/// `P(n, N) = q(q-2)(q+N-2)(q+N)`, `q = 4/n`: the radial monomial `C r^q` gives
/// `div(|rho|^n grad lap rho) = |C|^n C P r^q`.
pub fn separable_polynomial(n: f64, dimension: usize) -> f64 {
    let q = 4.0 / n;
    let nd = dimension as f64;
    q * (q - 2.0) * (q + nd - 2.0) * (q + nd)
}

fn check_separable(n: f64, dimension: usize) -> Result<()> {
    if !(n > 0.0 && n.is_finite()) || dimension == 0 {
        return Err(Error::InvalidInput(format!("n = {n}, N = {dimension}")));
    }
    Ok(())
}

/// Max over probes of `|rho + div(|rho|^n grad lap rho)| / |rho|` for `rho = C|y|^{4/n}`.
pub fn separable_residual(n: f64, dimension: usize, c: f64, y_probe: &[f64]) -> Result<f64> {
    check_separable(n, dimension)?;
    if c == 0.0 || !c.is_finite() {
        return Err(Error::InvalidInput("C must be finite and nonzero".into()));
    }
    if y_probe.iter().any(|&y| y == 0.0 || !y.is_finite()) {
        return Err(Error::InvalidInput("probes must avoid y = 0".into()));
    }
    let q = 4.0 / n;
    let p = separable_polynomial(n, dimension);
    Ok(y_probe
        .iter()
        .map(|&y| {
            let r = y.abs();
            let rho = c * r.powf(q);
            let div = c.abs().powf(n) * c * p * r.powf(q);
            ((rho + div) / rho).abs()
        })
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparableReport {
    pub n: f64,
    pub dimension: usize,
    pub polynomial: f64,
    /// `P = 0`: a derivative in the chain vanishes identically.
    pub degenerate: bool,
    /// Positive root of `C^n P = -1`, when one exists.
    pub c_star: Option<f64>,
}

pub fn separable_constant(n: f64, dimension: usize) -> Result<SeparableReport> {
    check_separable(n, dimension)?;
    let p = separable_polynomial(n, dimension);
    let q = 4.0 / n;
    let degenerate = p.abs() <= 1e-12 * q.powi(4).max(1.0);
    let c_star = (!degenerate && p < 0.0).then(|| (-1.0 / p).powf(1.0 / n));
    Ok(SeparableReport {
        n,
        dimension,
        polynomial: if degenerate { 0.0 } else { p },
        degenerate,
        c_star,
    })
}

/// `div(|rho|^n grad lap rho)` for radial `rho`, by nested centered differences.
pub fn radial_operator_fd(rho: &dyn Fn(f64) -> f64, n: f64, dimension: usize, r: f64) -> f64 {
    let h = 0.02 * r;
    let d1 = |f: &dyn Fn(f64) -> f64, x: f64| {
        (45.0 * (f(x + h) - f(x - h)) - 9.0 * (f(x + 2.0 * h) - f(x - 2.0 * h)) + (f(x + 3.0 * h) - f(x - 3.0 * h)))
            / (60.0 * h)
    };
    let nd = dimension as f64;
    let lap = |x: f64| {
        let g = |y: f64| y.powf(nd - 1.0) * d1(rho, y);
        x.powf(1.0 - nd) * d1(&g, x)
    };
    let flux = |x: f64| x.powf(nd - 1.0) * rho(x).abs().powf(n) * d1(&lap, x);
    r.powf(1.0 - nd) * d1(&flux, r)
}

/// Relative deviation between the symbolic and finite-difference operator on
/// `C r^{4/n}` at the given radii.
pub fn separable_fd_check(n: f64, dimension: usize, c: f64, radii: &[f64]) -> Result<f64> {
    check_separable(n, dimension)?;
    let q = 4.0 / n;
    let p = separable_polynomial(n, dimension);
    let rho = move |r: f64| c * r.powf(q);
    Ok(radii
        .iter()
        .map(|&r| {
            let exact = c.abs().powf(n) * c * p * r.powf(q);
            let fd = radial_operator_fd(&rho, n, dimension, r);
            ((fd - exact) / exact).abs()
        })
        .fold(0.0, f64::max))
}

/// `psi(t) = [n(T - t)]^{-1/n}`.
pub fn separable_psi(n: f64, t_blowup: f64, t: f64) -> f64 {
    (n * (t_blowup - t)).powf(-1.0 / n)
}

/// Max relative mismatch of `psi' = psi^{n+1}` over `times`, with `psi'` from the
/// closed-form derivative.
pub fn psi_residual(n: f64, t_blowup: f64, times: &[f64]) -> f64 {
    times
        .iter()
        .map(|&t| {
            let psi = separable_psi(n, t_blowup, t);
            let dpsi = (n * (t_blowup - t)).powf(-1.0 / n - 1.0);
            ((dpsi - psi.powf(n + 1.0)) / dpsi).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupOptions {
    pub t_max: f64,
    pub dt_initial: f64,
    pub dt_min: f64,
    pub dt_max: f64,
}

impl Default for BlowupOptions {
    fn default() -> Self {
        Self {
            t_max: 10.0,
            dt_initial: 1e-6,
            dt_min: 1e-13,
            dt_max: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupReport {
    pub blew_up: bool,
    /// Abort time, or the horizon when the run completed.
    pub t_estimate: f64,
    /// Fitted `p` in `sup|v| ~ (T - t)^{-p}`.
    pub exponent_fit: Option<f64>,
    pub fit_quality: Option<f64>,
    pub fit_samples: usize,
    pub status: RunStatus,
    pub sup_initial: f64,
    pub sup_final: f64,
    /// The maximum sits on the domain boundary.
    pub unreliable: bool,
    /// `(t, sup|v|)` per step.
    pub history: Vec<(f64, f64)>,
}

/// Riemann data `chi_pm |y|^{4/n}` under `v_t = -((1+v^2)^{n/2} v_yyy)_y`.
pub fn blowup_experiment(n: f64, chi: (f64, f64), domain: Grid1D, ceiling: f64) -> Result<BlowupReport> {
    blowup_experiment_with(n, chi, domain, ceiling, Mobility::Simple, &BlowupOptions::default())
}

pub fn blowup_experiment_with(
    n: f64,
    chi: (f64, f64),
    domain: Grid1D,
    ceiling: f64,
    mobility: Mobility,
    opts: &BlowupOptions,
) -> Result<BlowupReport> {
    let params = match mobility {
        Mobility::Unit => ModelParams {
            n,
            ..ModelParams::unit()
        },
        m => ModelParams::new(n, 1.0, m)?,
    };
    params.validate()?;
    let v0 = sample_initial_data(
        &InitialData::Riemann {
            chi_plus: chi.0,
            chi_minus: chi.1,
        },
        domain,
        &params,
    )?;
    let sup0 = v0.sup_norm();
    if !(ceiling > sup0) {
        return Err(Error::InvalidInput(format!(
            "ceiling {ceiling} must exceed sup|v0| = {sup0}"
        )));
    }
    let cfg = SolverConfig {
        dt_initial: opts.dt_initial,
        dt_min: opts.dt_min,
        dt_max: opts.dt_max,
        boundary: Boundary::DecayClamped,
        blowup_factor: if sup0 > 0.0 { ceiling / sup0 } else { f64::MAX },
        ..SolverConfig::default()
    };
    let sim = simulate(&v0, &params, opts.t_max, &cfg, &[])?;
    let history: Vec<(f64, f64)> = std::iter::once((v0.time, sup0))
        .chain(sim.trajectory.step_log.iter().map(|r| (r.t, r.sup_norm)))
        .collect();
    let last = sim.trajectory.last();
    let argmax = last
        .values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map_or(0, |(i, _)| i);
    let unreliable = sup0 > 0.0 && (argmax == 0 || argmax + 1 == last.values.len());
    let (blew_up, t_estimate) = match sim.status {
        RunStatus::Completed => (false, last.time),
        RunStatus::BlowUp { t, .. } | RunStatus::StepCollapse { t, .. } => (true, t),
    };
    let (mut exponent_fit, mut fit_quality, mut fit_samples) = (None, None, 0);
    if blew_up {
        // Window: exclude the final 10% of time, keep the last decade of growth.
        let cutoff = 0.9 * t_estimate;
        let window: Vec<(f64, f64)> = history.iter().copied().filter(|&(t, _)| t <= cutoff).collect();
        let top = window.iter().map(|p| p.1).fold(0.0, f64::max);
        let pts: Vec<(f64, f64)> = window
            .into_iter()
            .filter(|&(t, s)| s >= 0.1 * top && t < t_estimate && s > 0.0)
            .collect();
        fit_samples = pts.len();
        if pts.len() >= 6 {
            let x: Vec<f64> = pts.iter().map(|p| (t_estimate - p.0).ln()).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
            if let Some(f) = linear_fit(&x, &y) {
                exponent_fit = Some(-f.slope);
                fit_quality = Some(f.r_squared);
            }
        }
    }
    Ok(BlowupReport {
        blew_up,
        t_estimate,
        exponent_fit,
        fit_quality,
        fit_samples,
        status: sim.status,
        sup_initial: sup0,
        sup_final: last.sup_norm(),
        unreliable,
        history,
    })
}

/// Phase of the orbit for the data rescaled at `epsilon`: `(n/3) ln eps`.
pub fn interface_phase(n: f64, epsilon: f64) -> f64 {
    n / 3.0 * epsilon.ln()
}

/// `v0(y) = y^{3/n} phi((n/3) ln eps + ln y)` for `y > 0`, zero otherwise.
pub fn rescaled_interface_data(n: f64, orbit: &OrbitResult, epsilon: f64, domain: Grid1D) -> Result<Field> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!("eps = {epsilon}")));
    }
    crate::initial::interface_field(domain, n, orbit, interface_phase(n, epsilon))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceRow {
    pub epsilon: f64,
    pub window_sup: f64,
    pub blew_up: bool,
    /// `max |v0| / |y|^{3/n}` over the grid.
    pub data_bound: f64,
    pub failure: Option<String>,
}

impl InterfaceRow {
    pub const CSV_HEADER: &'static str = "eps,window_sup,blew_up";

    pub fn csv_row(&self) -> String {
        format!("{:.16e},{:.16e},{}", self.epsilon, self.window_sup, self.blew_up)
    }
}

/// Runs the `(1+v^2)^{n/2}` flow from rescaled interface data for each `eps` and
/// records `sup |v|` over `|y| <= window` up to `t_final`.
pub fn stable_interface_experiment(
    n: f64,
    orbit: &OrbitResult,
    eps_ladder: &[f64],
    domain: Grid1D,
    t_final: f64,
    window: f64,
) -> Result<Vec<InterfaceRow>> {
    if !orbit.converged {
        return Err(Error::InvalidInput("orbit did not converge".into()));
    }
    if (orbit.n - n).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!(
            "orbit computed for n = {}, not {n}",
            orbit.n
        )));
    }
    if eps_ladder.is_empty() || eps_ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("eps ladder must decrease".into()));
    }
    let params = ModelParams::new(n, 1.0, Mobility::Simple)?;
    let cfg = SolverConfig {
        dt_initial: 1e-6,
        dt_min: 1e-12,
        dt_max: 1e-3,
        ..SolverConfig::default()
    };
    let mu = 3.0 / n;
    let snaps: Vec<f64> = (1..=20).map(|k| t_final * k as f64 / 20.0).collect();
    eps_ladder
        .iter()
        .map(|&epsilon| {
            let v0 = rescaled_interface_data(n, orbit, epsilon, domain)?;
            let data_bound = domain
                .nodes()
                .zip(&v0.values)
                .filter(|(y, _)| *y > 0.0)
                .map(|(y, v)| v.abs() / y.powf(mu))
                .fold(0.0, f64::max);
            let in_window = |f: &Field| {
                domain
                    .nodes()
                    .zip(&f.values)
                    .filter(|(y, _)| y.abs() <= window)
                    .map(|(_, v)| v.abs())
                    .fold(0.0, f64::max)
            };
            match simulate(&v0, &params, t_final, &cfg, &snaps) {
                Ok(sim) => {
                    let window_sup = sim.trajectory.snapshots.iter().map(in_window).fold(0.0, f64::max);
                    Ok(InterfaceRow {
                        epsilon,
                        window_sup,
                        blew_up: !sim.is_completed(),
                        data_bound,
                        failure: None,
                    })
                }
                Err(e) => Ok(InterfaceRow {
                    epsilon,
                    window_sup: f64::NAN,
                    blew_up: false,
                    data_bound,
                    failure: Some(e.to_string()),
                }),
            }
        })
        .collect()
}
