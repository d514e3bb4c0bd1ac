//! Conservative implicit finite-difference integrator for
//! `u_t = -(phi(u) u_xxx)_x` in one dimension.
//!
//! Node `i` owns a cell of width `omega_i h` (`omega = 1/2` at clamped ends).
//! With `w = D2 u` (even reflection at clamped ends) the face flux is
//! `q_{i+1/2} = phi_face (w_{i+1} - w_i) / h` and the update is the
//! theta-weighted `omega_i h (u_i' - u_i) = -dt (q_{i+1/2} - q_{i-1/2})`.
//! Clamped ends carry zero flux. The discrete gradient energy
//! `1/2 sum |D+ u|^2 h` is non-increasing for `theta = 1`.

use serde::{Deserialize, Serialize};

use crate::banded::BandMatrix;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid1D, StepRecord, Trajectory};
use crate::params::ModelParams;
use crate::regularization::{mobility_derivative, mobility_value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceAverage {
    Arithmetic,
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Node `n_cells` duplicates node 0.
    Periodic,
    /// Zero-flux ends with even reflection of `u`.
    DecayClamped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt_initial: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub face_average: FaceAverage,
    pub boundary: Boundary,
    pub theta: f64,
    /// Blow-up is flagged when `sup|u|` exceeds `blowup_factor * sup|u0|`.
    pub blowup_factor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt_initial: 1e-4,
            dt_min: 1e-12,
            dt_max: 1e-2,
            newton_tol: 1e-11,
            newton_max_iter: 25,
            face_average: FaceAverage::Arithmetic,
            boundary: Boundary::DecayClamped,
            theta: 1.0,
            blowup_factor: 1e6,
        }
    }
}

impl SolverConfig {
    /// Fixed step `dt` (adaptivity disabled).
    pub fn fixed(dt: f64) -> Self {
        Self {
            dt_initial: dt,
            dt_min: dt,
            dt_max: dt,
            ..Self::default()
        }
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.dt_min > 0.0
            && self.dt_min <= self.dt_initial
            && self.dt_initial <= self.dt_max
            && self.dt_max.is_finite()
            && self.newton_tol > 0.0
            && self.newton_max_iter > 0
            && (0.5..=1.0).contains(&self.theta)
            && self.blowup_factor > 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid solver config {self:?}")))
        }
    }
}

/// What a trajectory was computed with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub params: ModelParams,
    pub face_average: FaceAverage,
    pub boundary: Boundary,
    pub theta: f64,
}

/// The spatial operator: grid, mobility and boundary treatment.
#[derive(Debug, Clone, Copy)]
pub struct Discretization {
    pub grid: Grid1D,
    pub params: ModelParams,
    pub face_average: FaceAverage,
    pub boundary: Boundary,
}

impl Discretization {
    pub fn new(grid: Grid1D, params: ModelParams, face_average: FaceAverage, boundary: Boundary) -> Self {
        Self {
            grid,
            params,
            face_average,
            boundary,
        }
    }

    pub fn from_meta(grid: Grid1D, meta: &RunMeta) -> Self {
        Self::new(grid, meta.params, meta.face_average, meta.boundary)
    }

    /// Number of independent unknowns.
    pub fn unknowns(&self) -> usize {
        match self.boundary {
            Boundary::Periodic => self.grid.n_cells(),
            Boundary::DecayClamped => self.grid.len(),
        }
    }

    /// Number of flux-carrying faces.
    pub fn faces(&self) -> usize {
        match self.boundary {
            Boundary::Periodic => self.grid.n_cells(),
            Boundary::DecayClamped => self.grid.n_cells(),
        }
    }

    #[inline]
    fn right(&self, f: usize) -> usize {
        let m = self.unknowns();
        if f + 1 == m {
            0
        } else {
            f + 1
        }
    }

    /// Cell width factor `omega_i`.
    #[inline]
    pub fn omega(&self, i: usize) -> f64 {
        match self.boundary {
            Boundary::Periodic => 1.0,
            Boundary::DecayClamped => self.grid.trapezoid_weight(i),
        }
    }

    /// Stencil of `w_i = (D2 u)_i` as `(index, coefficient)` pairs.
    fn d2_stencil(&self, i: usize) -> [(usize, f64); 3] {
        let m = self.unknowns();
        let h2 = 1.0 / (self.grid.spacing() * self.grid.spacing());
        match self.boundary {
            Boundary::Periodic => {
                let l = if i == 0 { m - 1 } else { i - 1 };
                let r = if i + 1 == m { 0 } else { i + 1 };
                [(l, h2), (i, -2.0 * h2), (r, h2)]
            }
            Boundary::DecayClamped => {
                if i == 0 {
                    [(1, 2.0 * h2), (0, -2.0 * h2), (0, 0.0)]
                } else if i + 1 == m {
                    [(m - 2, 2.0 * h2), (m - 1, -2.0 * h2), (m - 1, 0.0)]
                } else {
                    [(i - 1, h2), (i, -2.0 * h2), (i + 1, h2)]
                }
            }
        }
    }

    pub fn second_difference(&self, u: &[f64]) -> Vec<f64> {
        (0..self.unknowns())
            .map(|i| self.d2_stencil(i).iter().map(|&(j, c)| c * u[j]).sum())
            .collect()
    }

    #[inline]
    fn face_mobility(&self, a: f64, b: f64) -> (f64, f64, f64) {
        let p = &self.params;
        let (pa, pb) = (mobility_value(a, p), mobility_value(b, p));
        let (da, db) = (mobility_derivative(a, p), mobility_derivative(b, p));
        match self.face_average {
            FaceAverage::Arithmetic => (0.5 * (pa + pb), 0.5 * da, 0.5 * db),
            FaceAverage::Geometric => {
                let m = (pa * pb).sqrt();
                if m == 0.0 {
                    (0.0, 0.0, 0.0)
                } else {
                    (m, 0.5 * pb * da / m, 0.5 * pa * db / m)
                }
            }
        }
    }

    /// Face mobilities and third differences `(w_{f+1} - w_f)/h`.
    pub fn face_terms(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let w = self.second_difference(u);
        let h = self.grid.spacing();
        (0..self.faces())
            .map(|f| {
                let r = self.right(f);
                let (m, _, _) = self.face_mobility(u[f], u[r]);
                (m, (w[r] - w[f]) / h)
            })
            .unzip()
    }

    /// Face fluxes `q_f = phi_face * D3 u`.
    pub fn fluxes(&self, u: &[f64]) -> Vec<f64> {
        let (m, g) = self.face_terms(u);
        m.iter().zip(&g).map(|(a, b)| a * b).collect()
    }

    /// `(q_{i+1/2} - q_{i-1/2}) / (omega_i h)`.
    pub fn divergence(&self, u: &[f64]) -> Vec<f64> {
        let q = self.fluxes(u);
        self.divergence_of(&q)
    }

    fn divergence_of(&self, q: &[f64]) -> Vec<f64> {
        let m = self.unknowns();
        let h = self.grid.spacing();
        (0..m)
            .map(|i| {
                let (qr, ql) = match self.boundary {
                    Boundary::Periodic => (q[i], q[if i == 0 { m - 1 } else { i - 1 }]),
                    Boundary::DecayClamped => (if i + 1 < m { q[i] } else { 0.0 }, if i > 0 { q[i - 1] } else { 0.0 }),
                };
                (qr - ql) / (self.omega(i) * h)
            })
            .collect()
    }

    /// Conserved discrete mass `sum omega_i u_i h`.
    pub fn mass(&self, u: &[f64]) -> f64 {
        let h = self.grid.spacing();
        match self.boundary {
            Boundary::Periodic => u[..self.unknowns()].iter().sum::<f64>() * h,
            Boundary::DecayClamped => self.grid.integrate(u),
        }
    }

    /// `1/2 sum_faces |D+ u|^2 h`.
    pub fn gradient_energy(&self, u: &[f64]) -> f64 {
        let h = self.grid.spacing();
        0.5 * (0..self.faces())
            .map(|f| {
                let d = (u[self.right(f)] - u[f]) / h;
                d * d
            })
            .sum::<f64>()
            * h
    }

    /// `sum_faces phi_face |D3 u|^2 h`.
    pub fn dissipation(&self, u: &[f64]) -> f64 {
        let (m, g) = self.face_terms(u);
        m.iter().zip(&g).map(|(a, b)| a * b * b).sum::<f64>() * self.grid.spacing()
    }

    /// `sum_faces |phi_face D3 u|^2 h`.
    pub fn flux_norm_sq(&self, u: &[f64]) -> f64 {
        self.fluxes(u).iter().map(|q| q * q).sum::<f64>() * self.grid.spacing()
    }

    fn position(&self, i: usize) -> usize {
        match self.boundary {
            Boundary::DecayClamped => i,
            Boundary::Periodic => {
                let m = self.unknowns();
                if 2 * i < m {
                    2 * i
                } else {
                    2 * (m - 1 - i) + 1
                }
            }
        }
    }

    fn bandwidth(&self) -> usize {
        match self.boundary {
            Boundary::DecayClamped => 2,
            Boundary::Periodic => 4,
        }
    }

    /// Jacobian of `divergence` scaled by `scale`, plus the identity, in the
    /// band ordering of this discretization.
    fn assemble(&self, u: &[f64], scale: f64, mat: &mut BandMatrix) {
        mat.clear();
        let m = self.unknowns();
        let h = self.grid.spacing();
        let w = self.second_difference(u);
        for i in 0..m {
            let p = self.position(i);
            mat.add(p, p, 1.0);
        }
        for f in 0..self.faces() {
            let r = self.right(f);
            let (mob, dmf, dmr) = self.face_mobility(u[f], u[r]);
            let g = (w[r] - w[f]) / h;
            // dq/du_k for all k touched by the face.
            let mut entries: [(usize, f64); 8] = [(0, 0.0); 8];
            let mut k = 0;
            for &(j, c) in &self.d2_stencil(r) {
                entries[k] = (j, mob * c / h);
                k += 1;
            }
            for &(j, c) in &self.d2_stencil(f) {
                entries[k] = (j, -mob * c / h);
                k += 1;
            }
            entries[6] = (f, g * dmf);
            entries[7] = (r, g * dmr);
            // q_f enters node f with +1/(omega h) and node r with -1/(omega h).
            let rows = [(f, 1.0), (r, -1.0)];
            for &(row, sign) in &rows {
                let coef = sign * scale / (self.omega(row) * h);
                let pr = self.position(row);
                for &(col, d) in &entries {
                    if d != 0.0 {
                        mat.add(pr, self.position(col), coef * d);
                    }
                }
            }
        }
    }
}

/// Outcome of a single implicit step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub field: Field,
    pub newton_iterations: usize,
    pub residual: f64,
}

/// One theta-implicit step of size `dt`.
pub fn step(state: &Field, dt: f64, params: &ModelParams, config: &SolverConfig) -> Result<StepOutcome> {
    config.validate()?;
    params.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!("dt = {dt}")));
    }
    let disc = Discretization::new(state.grid, *params, config.face_average, config.boundary);
    step_with(&disc, state, dt, config)
}

fn step_with(disc: &Discretization, state: &Field, dt: f64, config: &SolverConfig) -> Result<StepOutcome> {
    let m = disc.unknowns();
    let old = &state.values[..m];
    let theta = config.theta;
    let explicit: Vec<f64> = if theta < 1.0 {
        disc.divergence(old)
            .into_iter()
            .map(|d| (1.0 - theta) * dt * d)
            .collect()
    } else {
        vec![0.0; m]
    };
    let scale = old.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let tol = config.newton_tol * scale;

    let residual = |u: &[f64]| -> Vec<f64> {
        let div = disc.divergence(u);
        (0..m)
            .map(|i| u[i] - old[i] + theta * dt * div[i] + explicit[i])
            .collect()
    };

    let bw = disc.bandwidth();
    let mut mat = BandMatrix::zeros(m, bw, bw);
    let mut u = old.to_vec();
    let mut r = residual(&u);
    let mut rnorm = max_abs(&r);
    let first = rnorm;
    let mut iterations = 0;
    while rnorm > tol {
        if iterations == config.newton_max_iter || !rnorm.is_finite() || rnorm > 1e8 * first.max(tol) {
            return Err(Error::NewtonDivergence {
                iterations,
                residual: rnorm,
            });
        }
        disc.assemble(&u, theta * dt, &mut mat);
        let lu = mat.clone().factorize()?;
        let mut rhs = vec![0.0; m];
        for i in 0..m {
            rhs[disc.position(i)] = -r[i];
        }
        lu.solve(&mut rhs);
        for i in 0..m {
            u[i] += rhs[disc.position(i)];
        }
        iterations += 1;
        r = residual(&u);
        rnorm = max_abs(&r);
    }

    // Final flux-form update from the converged iterate: conservative to rounding.
    let div = disc.divergence(&u);
    let mut values: Vec<f64> = (0..m).map(|i| old[i] - theta * dt * div[i] - explicit[i]).collect();
    if disc.boundary == Boundary::Periodic {
        values.push(values[0]);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NewtonDivergence {
            iterations,
            residual: f64::INFINITY,
        });
    }
    Ok(StepOutcome {
        field: Field {
            grid: state.grid,
            values,
            time: state.time + dt,
        },
        newton_iterations: iterations,
        residual: rnorm,
    })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Why a simulation stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// `sup|u|` exceeded the ceiling.
    BlowUp {
        t: f64,
        sup: f64,
        ceiling: f64,
    },
    /// Newton kept failing with `dt < dt_min`.
    StepCollapse {
        t: f64,
        dt: f64,
        sup: f64,
        residual: f64,
    },
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub trajectory: Trajectory,
    pub status: RunStatus,
}

impl Simulation {
    pub fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    /// The trajectory, or an error describing the abort.
    pub fn into_completed(self) -> Result<Trajectory> {
        match self.status {
            RunStatus::Completed => Ok(self.trajectory),
            RunStatus::BlowUp { t, sup, .. } => Err(Error::StepCollapse { t, dt_min: 0.0, sup }),
            RunStatus::StepCollapse { t, dt, sup, .. } => Err(Error::StepCollapse { t, dt_min: dt, sup }),
        }
    }
}

/// Integrates from `u0` to `t_final`, landing exactly on each requested
/// snapshot time (and on `t_final`). The step grows by 1.5 after Newton
/// converges in at most 3 iterations, shrinks by 0.7 after 6 or more, and is
/// halved on Newton failure.
pub fn simulate(
    u0: &Field,
    params: &ModelParams,
    t_final: f64,
    config: &SolverConfig,
    snap_times: &[f64],
) -> Result<Simulation> {
    config.validate()?;
    params.validate()?;
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidInput(format!("t_final = {t_final}")));
    }
    let mut snaps: Vec<f64> = snap_times
        .iter()
        .map(|&s| u0.time + s)
        .filter(|&s| s > u0.time)
        .collect();
    if snap_times.iter().any(|&s| !(s > 0.0 && s <= t_final)) {
        return Err(Error::InvalidInput("snapshot times must lie in (0, t_final]".into()));
    }
    if snaps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("snapshot times must increase".into()));
    }
    let end = u0.time + t_final;
    if snaps.last().is_none_or(|&s| s < end) {
        snaps.push(end);
    }

    let disc = Discretization::new(u0.grid, *params, config.face_average, config.boundary);
    let mut state = u0.clone();
    if disc.boundary == Boundary::Periodic {
        let n = state.values.len();
        state.values[n - 1] = state.values[0];
    }
    let ceiling = config.blowup_factor * u0.sup_norm().max(f64::MIN_POSITIVE);
    let mut trajectory = Trajectory::new(state.clone());
    trajectory.meta = Some(RunMeta {
        params: *params,
        face_average: config.face_average,
        boundary: config.boundary,
        theta: config.theta,
    });
    let mut dt = config.dt_initial;
    for &target in &snaps {
        while state.time < target {
            let remaining = target - state.time;
            let landing = remaining <= dt * (1.0 + 1e-9);
            let h = if landing { remaining } else { dt };
            match step_with(&disc, &state, h, config) {
                Ok(out) => {
                    let mut field = out.field;
                    if landing {
                        field.time = target;
                    }
                    let sup = field.sup_norm();
                    trajectory.step_log.push(StepRecord {
                        t: field.time,
                        dt: h,
                        newton_iterations: out.newton_iterations,
                        residual: out.residual,
                        dissipation: disc.dissipation(&field.values),
                        gradient_energy: disc.gradient_energy(&field.values),
                        flux_norm_sq: disc.flux_norm_sq(&field.values),
                        sup_norm: sup,
                        mass: disc.mass(&field.values),
                    });
                    state = field;
                    if sup > ceiling {
                        trajectory.snapshots.push(state.clone());
                        return Ok(Simulation {
                            trajectory,
                            status: RunStatus::BlowUp {
                                t: state.time,
                                sup,
                                ceiling,
                            },
                        });
                    }
                    if !landing {
                        if out.newton_iterations <= 3 {
                            dt = (dt * 1.5).min(config.dt_max);
                        } else if out.newton_iterations >= 6 {
                            dt = (dt * 0.7).max(config.dt_min);
                        }
                    }
                }
                Err(e @ (Error::NewtonDivergence { .. } | Error::SingularMatrix(_))) => {
                    let residual = match e {
                        Error::NewtonDivergence { residual, .. } => residual,
                        _ => f64::INFINITY,
                    };
                    if h * 0.5 < config.dt_min {
                        if trajectory.last().time < state.time {
                            trajectory.snapshots.push(state.clone());
                        }
                        return Ok(Simulation {
                            trajectory,
                            status: RunStatus::StepCollapse {
                                t: state.time,
                                dt: h * 0.5,
                                sup: state.sup_norm(),
                                residual,
                            },
                        });
                    }
                    dt = h * 0.5;
                }
                Err(e) => return Err(e),
            }
        }
        trajectory.push(state.clone())?;
    }
    Ok(Simulation {
        trajectory,
        status: RunStatus::Completed,
    })
}
