//! Integral diagnostics: mass, energies, the energy identity, weak-form
//! residuals and oscillation metrics.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::grid::{Field, Trajectory};
use crate::initial::bump_profile;
use crate::params::{Mobility, ModelParams};
use crate::solver::{Discretization, RunMeta};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub time: f64,
    pub mass: f64,
    /// `1/2 int |u_x|^2`.
    pub gradient_energy: f64,
    /// Instantaneous `int phi |u_xxx|^2`.
    pub dissipation_rate: f64,
    /// `int_0^t int phi |u_xxx|^2`.
    pub cumulative_dissipation: f64,
    /// Instantaneous `int |phi u_xxx|^2`.
    pub flux_rate: f64,
    /// `int_0^t int |phi u_xxx|^2`.
    pub flux_norm_sq: f64,
}

impl EnergyReport {
    pub const CSV_HEADER: &'static str = "t,mass,grad_energy,dissipation,flux_norm";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.time, self.mass, self.gradient_energy, self.cumulative_dissipation, self.flux_norm_sq
        )
    }
}

/// Report for `state`; time integrals extend `prior` by the right-endpoint rule,
/// the quadrature matching backward Euler.
pub fn energy_report(state: &Field, disc: &Discretization, prior: Option<&EnergyReport>) -> Result<EnergyReport> {
    if state.grid != disc.grid {
        return Err(Error::InvalidInput(
            "field grid differs from discretization grid".into(),
        ));
    }
    if state.grid.n_cells() < 8 {
        return Err(Error::GridTooCoarse("energy report needs at least 8 cells".into()));
    }
    let u = &state.values;
    let dissipation_rate = disc.dissipation(u);
    let flux_rate = disc.flux_norm_sq(u);
    let (cum_d, cum_f) = match prior {
        None => (0.0, 0.0),
        Some(p) => {
            let dt = state.time - p.time;
            if dt < 0.0 {
                return Err(Error::InvalidInput("energy report time precedes prior".into()));
            }
            (
                p.cumulative_dissipation + dt * dissipation_rate,
                p.flux_norm_sq + dt * flux_rate,
            )
        }
    };
    let report = EnergyReport {
        time: state.time,
        mass: disc.mass(u),
        gradient_energy: disc.gradient_energy(u),
        dissipation_rate,
        cumulative_dissipation: cum_d,
        flux_rate,
        flux_norm_sq: cum_f,
    };
    let all = [
        report.mass,
        report.gradient_energy,
        report.dissipation_rate,
        report.cumulative_dissipation,
        report.flux_norm_sq,
    ];
    if all.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("energy report".into()));
    }
    Ok(report)
}

fn meta_for(traj: &Trajectory, params: &ModelParams) -> Result<RunMeta> {
    let meta = traj
        .meta
        .ok_or_else(|| Error::InvalidInput("trajectory carries no solver metadata".into()))?;
    if meta.params != *params {
        return Err(Error::InvalidInput(format!(
            "params {params:?} differ from trajectory params {:?}",
            meta.params
        )));
    }
    Ok(meta)
}

/// One report per solver step (plus the initial state), with time integrals
/// weighted by the run's `theta`.
pub fn energy_ledger(traj: &Trajectory, params: &ModelParams) -> Result<Vec<EnergyReport>> {
    let meta = meta_for(traj, params)?;
    let disc = Discretization::from_meta(traj.grid(), &meta);
    let first = energy_report(&traj.snapshots[0], &disc, None)?;
    let theta = meta.theta;
    let mut out = vec![first];
    let mut prev = first;
    for rec in &traj.step_log {
        let r = EnergyReport {
            time: rec.t,
            mass: rec.mass,
            gradient_energy: rec.gradient_energy,
            dissipation_rate: rec.dissipation,
            cumulative_dissipation: prev.cumulative_dissipation
                + rec.dt * (theta * rec.dissipation + (1.0 - theta) * prev.dissipation_rate),
            flux_rate: rec.flux_norm_sq,
            flux_norm_sq: prev.flux_norm_sq + rec.dt * (theta * rec.flux_norm_sq + (1.0 - theta) * prev.flux_rate),
        };
        out.push(r);
        prev = r;
    }
    Ok(out)
}

/// `max_k |E(t_k) + int_0^{t_k} D - E(0)|` over solver steps.
pub fn energy_identity_residual(traj: &Trajectory, params: &ModelParams) -> Result<f64> {
    let ledger = energy_ledger(traj, params)?;
    let e0 = ledger[0].gradient_energy;
    Ok(ledger
        .iter()
        .map(|r| (r.gradient_energy + r.cumulative_dissipation - e0).abs())
        .fold(0.0, f64::max))
}

pub fn write_energy_csv<W: Write>(reports: &[EnergyReport], mut w: W) -> io::Result<()> {
    writeln!(w, "{}", EnergyReport::CSV_HEADER)?;
    for r in reports {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunctionKind {
    /// `sin(k (x - x_c)) B_x B_t`.
    SinePacket,
    /// `B_x B_t`.
    BumpProduct,
}

/// Compactly supported space-time test function built from the bump
/// `B(r) = exp(1 - 1/(1 - r^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub kind: TestFunctionKind,
    pub x_center: f64,
    pub x_width: f64,
    pub t_center: f64,
    pub t_width: f64,
    pub wavenumber: f64,
}

fn bump_with_derivative(r: f64) -> (f64, f64) {
    if r.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let b = bump_profile(r);
    let d = 1.0 - r * r;
    (b, -2.0 * r * b / (d * d))
}

impl TestFunction {
    pub fn bump_product(x_center: f64, x_width: f64, t_center: f64, t_width: f64) -> Self {
        Self {
            kind: TestFunctionKind::BumpProduct,
            x_center,
            x_width,
            t_center,
            t_width,
            wavenumber: 0.0,
        }
    }

    pub fn sine_packet(x_center: f64, x_width: f64, t_center: f64, t_width: f64, wavenumber: f64) -> Self {
        Self {
            kind: TestFunctionKind::SinePacket,
            wavenumber,
            ..Self::bump_product(x_center, x_width, t_center, t_width)
        }
    }

    /// `(phi, phi_t, phi_x)`.
    pub fn eval(&self, x: f64, t: f64) -> (f64, f64, f64) {
        let (bx, dbx) = bump_with_derivative((x - self.x_center) / self.x_width);
        let (bt, dbt) = bump_with_derivative((t - self.t_center) / self.t_width);
        let (dbx, dbt) = (dbx / self.x_width, dbt / self.t_width);
        let (s, ds) = match self.kind {
            TestFunctionKind::BumpProduct => (1.0, 0.0),
            TestFunctionKind::SinePacket => {
                let a = self.wavenumber * (x - self.x_center);
                (a.sin(), self.wavenumber * a.cos())
            }
        };
        (s * bx * bt, s * bx * dbt, (ds * bx + s * dbx) * bt)
    }

    fn validate(&self) -> Result<()> {
        if !(self.x_width > 0.0 && self.t_width > 0.0) {
            return Err(Error::InvalidInput("test function widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakFormResidual {
    /// `int int phi_t u + int int phi_x phi(u) u_xxx`.
    pub total: f64,
    /// `|eps^n int int phi_x u_xxx|`.
    pub eps_term: f64,
    /// Mobility term restricted to faces with `|u| <= delta`.
    pub bad_set_term: f64,
}

/// Weak-form identity evaluated on the trajectory snapshots, trapezoid in time.
/// Snapshots should be dense in time for the quadrature to be meaningful.
pub fn weak_form_residual(
    traj: &Trajectory,
    params: &ModelParams,
    test: &TestFunction,
    delta: f64,
) -> Result<WeakFormResidual> {
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!("delta = {delta} must be positive")));
    }
    test.validate()?;
    let meta = meta_for(traj, params)?;
    let grid = traj.grid();
    let (t0, t1) = (traj.snapshots[0].time, traj.last().time);
    if test.x_center - test.x_width < grid.x_min()
        || test.x_center + test.x_width > grid.x_max()
        || test.t_center - test.t_width < t0
        || test.t_center + test.t_width > t1
    {
        return Err(Error::InvalidInput(
            "test function support leaves the trajectory box".into(),
        ));
    }
    let disc = Discretization::from_meta(grid, &meta);
    let h = grid.spacing();
    let floor = match params.mobility {
        Mobility::Homotopy => params.epsilon.powf(params.n),
        _ => 0.0,
    };
    let eps_n = params.epsilon.powf(params.n);
    let per_snapshot = |f: &Field| -> [f64; 3] {
        let u = &f.values;
        let t = f.time;
        let phi_t_u: Vec<f64> = grid.nodes().zip(u).map(|(x, v)| test.eval(x, t).1 * v).collect();
        let a = grid.integrate(&phi_t_u);
        let (mob, g) = disc.face_terms(u);
        let (mut b, mut c, mut d) = (0.0, 0.0, 0.0);
        for (fidx, (m, g)) in mob.iter().zip(&g).enumerate() {
            let xf = grid.x(fidx) + 0.5 * h;
            let px = test.eval(xf, t).2;
            b += px * m * g * h;
            c += px * g * h;
            let uf = 0.5 * (u[fidx] + u[fidx + 1]);
            if uf.abs() <= delta {
                d += px * (m - floor) * g * h;
            }
        }
        [a + b, eps_n * c, d]
    };
    let vals: Vec<[f64; 3]> = traj.snapshots.iter().map(per_snapshot).collect();
    let mut acc = [0.0; 3];
    for k in 1..vals.len() {
        let dt = traj.snapshots[k].time - traj.snapshots[k - 1].time;
        for j in 0..3 {
            acc[j] += 0.5 * dt * (vals[k][j] + vals[k - 1][j]);
        }
    }
    Ok(WeakFormResidual {
        total: acc[0],
        eps_term: acc[1].abs(),
        bad_set_term: acc[2].abs(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationProfile {
    pub time: f64,
    pub sign_changes: usize,
    pub interface_left: f64,
    pub interface_right: f64,
    /// Mean of the available one-sided exponents.
    pub envelope_exponent: Option<f64>,
    pub envelope_left: Option<f64>,
    pub envelope_right: Option<f64>,
}

/// Default significance threshold `1e-9 sup|u|`.
pub fn default_tol(state: &Field) -> f64 {
    (1e-9 * state.sup_norm()).max(f64::MIN_POSITIVE)
}

/// Minimum nodes in a same-sign run for its maximum to count as a resolved extremum.
const MIN_HUMP_NODES: usize = 5;
const ENVELOPE_EXTREMA: usize = 5;

pub fn oscillation_profile(state: &Field, tol: f64) -> Result<OscillationProfile> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tol = {tol} must be positive")));
    }
    let g = state.grid;
    let u = &state.values;
    let significant: Vec<usize> = (0..u.len()).filter(|&i| u[i].abs() > tol).collect();
    if significant.is_empty() {
        return Ok(OscillationProfile {
            time: state.time,
            sign_changes: 0,
            interface_left: f64::NAN,
            interface_right: f64::NAN,
            envelope_exponent: None,
            envelope_left: None,
            envelope_right: None,
        });
    }
    let sign_changes = significant
        .windows(2)
        .filter(|w| (u[w[0]] > 0.0) != (u[w[1]] > 0.0))
        .count();
    let crossing = |i: usize, j: usize| {
        // |u| = tol between nodes i (below) and j (above).
        let (a, b) = (u[i].abs(), u[j].abs());
        let th = ((tol - a) / (b - a)).clamp(0.0, 1.0);
        g.x(i) + th * (g.x(j) - g.x(i))
    };
    let (first, last) = (significant[0], *significant.last().unwrap());
    let interface_left = if first == 0 { g.x(0) } else { crossing(first - 1, first) };
    let interface_right = if last + 1 == u.len() {
        g.x(last)
    } else {
        crossing(last + 1, last)
    };

    // Same-sign runs of significant nodes and their maxima.
    let mut humps: Vec<(f64, f64)> = Vec::new();
    let mut run: Vec<usize> = Vec::new();
    let mut flush = |run: &mut Vec<usize>| {
        if run.len() >= MIN_HUMP_NODES {
            let &k = run.iter().max_by(|&&a, &&b| u[a].abs().total_cmp(&u[b].abs())).unwrap();
            // Interior maximum only: runs touching their ends at a large value are cut.
            if k != run[0] && k != *run.last().unwrap() {
                humps.push((g.x(k), u[k].abs()));
            }
        }
        run.clear();
    };
    for i in 0..u.len() {
        let sig = u[i].abs() > tol;
        if sig && run.last().is_some_and(|&p| p + 1 == i && (u[p] > 0.0) == (u[i] > 0.0)) {
            run.push(i);
        } else {
            flush(&mut run);
            if sig {
                run.push(i);
            }
        }
    }
    flush(&mut run);

    let fit_side = |pts: Vec<(f64, f64)>| -> Option<f64> {
        if pts.len() < 3 {
            return None;
        }
        let (x, y): (Vec<f64>, Vec<f64>) = pts.iter().map(|&(d, a)| (d.ln(), a.ln())).unzip();
        linear_fit(&x, &y).map(|f| f.slope)
    };
    let left: Vec<(f64, f64)> = humps
        .iter()
        .filter(|h| h.0 > interface_left)
        .take(ENVELOPE_EXTREMA)
        .map(|&(x, a)| (x - interface_left, a))
        .collect();
    let right: Vec<(f64, f64)> = humps
        .iter()
        .rev()
        .filter(|h| h.0 < interface_right)
        .take(ENVELOPE_EXTREMA)
        .map(|&(x, a)| (interface_right - x, a))
        .collect();
    let (envelope_left, envelope_right) = (fit_side(left), fit_side(right));
    let envelope_exponent = match (envelope_left, envelope_right) {
        (Some(a), Some(b)) => Some(0.5 * (a + b)),
        (a, b) => a.or(b),
    };
    Ok(OscillationProfile {
        time: state.time,
        sign_changes,
        interface_left,
        interface_right,
        envelope_exponent,
        envelope_left,
        envelope_right,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;
    use crate::interface_ode::{find_periodic_orbit, OrbitMethod};
    use crate::solver::{simulate, Boundary, FaceAverage, SolverConfig};
    use std::f64::consts::{PI, TAU};

    fn periodic_disc(grid: Grid1D) -> Discretization {
        Discretization::new(grid, ModelParams::unit(), FaceAverage::Arithmetic, Boundary::Periodic)
    }

    #[test]
    fn sine_gradient_energy() {
        let g = Grid1D::new(0.0, TAU, 2000).unwrap();
        let f = Field::from_fn(g, f64::sin).unwrap();
        let r = energy_report(&f, &periodic_disc(g), None).unwrap();
        assert!((r.gradient_energy - PI / 2.0).abs() < 1e-5);
        assert!(r.mass.abs() < 1e-12);
    }

    #[test]
    fn zero_field_report() {
        let g = Grid1D::new(-1.0, 1.0, 32).unwrap();
        let disc = Discretization::new(g, ModelParams::unit(), FaceAverage::Arithmetic, Boundary::DecayClamped);
        let r = energy_report(&Field::zeros(g), &disc, None).unwrap();
        assert_eq!(
            [
                r.mass,
                r.gradient_energy,
                r.dissipation_rate,
                r.cumulative_dissipation,
                r.flux_norm_sq
            ],
            [0.0; 5]
        );
    }

    #[test]
    fn fourier_mode_identity_residual_is_closed_form() {
        let n = 64;
        let g = Grid1D::new(0.0, TAU, n).unwrap();
        let u0 = Field::from_fn(g, f64::sin).unwrap();
        let dt = 1e-3;
        let steps = 50;
        let cfg = SolverConfig::fixed(dt).with_boundary(Boundary::Periodic);
        let p = ModelParams::unit();
        let sim = simulate(&u0, &p, dt * steps as f64, &cfg, &[]).unwrap();
        let res = energy_identity_residual(&sim.trajectory, &p).unwrap();
        let h = g.spacing();
        let lambda = (2.0 * (1.0 - h.cos()) / (h * h)).powi(2);
        let e0 = periodic_disc(g).gradient_energy(&u0.values);
        let q = (1.0 + dt * lambda).powi(-2);
        let mut worst = 0.0f64;
        let mut cum = 0.0;
        for k in 1..=steps {
            let ek = e0 * q.powi(k);
            cum += dt * 2.0 * lambda * ek;
            worst = worst.max((ek + cum - e0).abs());
        }
        assert!((res - worst).abs() < 1e-9 * e0, "{res} {worst}");
        assert!(res > 0.0);
    }

    #[test]
    fn zero_data_identity_residual_is_exact() {
        let g = Grid1D::new(-1.0, 1.0, 32).unwrap();
        let p = ModelParams::unit();
        let sim = simulate(&Field::zeros(g), &p, 0.1, &SolverConfig::default(), &[]).unwrap();
        assert_eq!(energy_identity_residual(&sim.trajectory, &p).unwrap(), 0.0);
        let other = ModelParams::new(1.0, 0.1, Mobility::Simple).unwrap();
        assert!(energy_identity_residual(&sim.trajectory, &other).is_err());
    }

    #[test]
    fn test_function_derivatives_are_exact() {
        for tf in [
            TestFunction::bump_product(0.3, 1.2, 0.5, 0.4),
            TestFunction::sine_packet(0.3, 1.2, 0.5, 0.4, 3.0),
        ] {
            for &(x, t) in &[(0.1, 0.45), (0.9, 0.6), (-0.5, 0.3)] {
                let e = 1e-6;
                let (_, pt, px) = tf.eval(x, t);
                let fx = (tf.eval(x + e, t).0 - tf.eval(x - e, t).0) / (2.0 * e);
                let ft = (tf.eval(x, t + e).0 - tf.eval(x, t - e).0) / (2.0 * e);
                assert!((fx - px).abs() < 1e-7 && (ft - pt).abs() < 1e-7);
            }
            assert_eq!(tf.eval(1.6, 0.5).0, 0.0);
            assert_eq!(tf.eval(0.3, 0.95).0, 0.0);
        }
    }

    #[test]
    fn weak_form_zero_and_validation() {
        let g = Grid1D::new(-2.0, 2.0, 40).unwrap();
        let p = ModelParams::new(1.0, 0.1, Mobility::Homotopy).unwrap();
        let snaps: Vec<f64> = (1..=10).map(|k| 0.01 * k as f64).collect();
        let sim = simulate(&Field::zeros(g), &p, 0.1, &SolverConfig::default(), &snaps).unwrap();
        let tf = TestFunction::bump_product(0.0, 1.0, 0.05, 0.04);
        let r = weak_form_residual(&sim.trajectory, &p, &tf, 0.1).unwrap();
        assert_eq!([r.total, r.eps_term, r.bad_set_term], [0.0; 3]);
        assert!(weak_form_residual(&sim.trajectory, &p, &tf, 0.0).is_err());
        let outside = TestFunction::bump_product(0.0, 3.0, 0.05, 0.04);
        assert!(weak_form_residual(&sim.trajectory, &p, &outside, 0.1).is_err());
    }

    #[test]
    fn sine_sign_changes() {
        let g = Grid1D::new(0.0, 4.0 * PI, 400).unwrap();
        let f = Field::from_fn(g, f64::sin).unwrap();
        let o = oscillation_profile(&f, 1e-6).unwrap();
        assert_eq!(o.sign_changes, 3);
        assert!(o.interface_left <= o.interface_right);
        assert!(oscillation_profile(&f, 0.0).is_err());
    }

    #[test]
    fn profile_symmetries() {
        let g = Grid1D::new(-6.0, 6.0, 1200).unwrap();
        let f = Field::from_fn(g, |x| (3.0 * x).sin() * (-x * x / 4.0).exp() * (1.0 + 0.2 * x)).unwrap();
        let neg = Field::from_fn(g, |x| -((3.0 * x).sin() * (-x * x / 4.0).exp() * (1.0 + 0.2 * x))).unwrap();
        let mut refl = f.clone();
        refl.values.reverse();
        let tol = 1e-6;
        let (a, b, c) = (
            oscillation_profile(&f, tol).unwrap(),
            oscillation_profile(&neg, tol).unwrap(),
            oscillation_profile(&refl, tol).unwrap(),
        );
        assert_eq!(a, b);
        assert_eq!(a.sign_changes, c.sign_changes);
        assert!((a.interface_left + c.interface_right).abs() < 1e-9);
        assert!((a.envelope_left.unwrap() - c.envelope_right.unwrap()).abs() < 1e-9);
    }

    #[test]
    fn synthetic_interface_exponent() {
        let o = find_periodic_orbit(1.0, OrbitMethod::ForwardAttractor).unwrap();
        let g = Grid1D::new(-0.5, 1.5, 200_000).unwrap();
        let f = crate::initial::interface_field(g, 1.0, &o, 0.0).unwrap();
        let prof = oscillation_profile(&f, 1e-300).unwrap();
        let e = prof.envelope_left.expect("envelope");
        assert!((e - 3.0).abs() < 0.3, "{e}");
    }
}
