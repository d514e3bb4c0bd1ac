//! Double-limit experiments: convergence of the regularized flow to the
//! bi-harmonic flow as `n -> 0` with `eps = eps(n)`, and the first-order
//! branching correction
//! `phi1(t) = -int_0^t b_x(t-s) * (ln|w(s)| w_xxx(s)) ds`, `w` the bi-harmonic solution.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::biharmonic::{biharmonic_solve, kernel_convolve, KernelTable};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid1D};
use crate::params::{Mobility, ModelParams};
use crate::regularization::EpsilonSource;
use crate::solver::{simulate, SolverConfig};

/// Where the `n = 0` comparison solution comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// Kernel convolution of the initial data.
    Convolution,
    /// The same solver run with unit mobility, so discretization error cancels
    /// to first order in the difference.
    UnitSolver,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomotopyOptions {
    pub solver: SolverConfig,
    pub reference: Reference,
    /// Clamp for `ln|w|`, relative to `sup|u0|`.
    pub clamp_eta_rel: f64,
    /// Quadrature nodes per half of the time integral.
    pub sigma_nodes: usize,
    /// Fraction of nodes at each end excluded from max norms.
    pub trim: f64,
}

impl Default for HomotopyOptions {
    fn default() -> Self {
        Self {
            solver: SolverConfig::fixed(2.5e-4),
            reference: Reference::UnitSolver,
            clamp_eta_rel: 1e-8,
            sigma_nodes: 64,
            trim: 0.05,
        }
    }
}

/// Max norm over nodes, excluding the outer `trim` fraction at each end.
pub fn trimmed_sup(values: &[f64], trim: f64) -> f64 {
    let k = ((values.len() as f64) * trim).floor() as usize;
    values[k..values.len() - k].iter().fold(0.0, |a, v| a.max(v.abs()))
}

fn diff_sup(a: &[f64], b: &[f64], trim: f64) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    trimmed_sup(&d, trim)
}

fn check_ladder(n_ladder: &[f64]) -> Result<()> {
    if n_ladder.is_empty()
        || n_ladder.iter().any(|&n| !(n > 0.0 && n <= 0.5))
        || n_ladder.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::InvalidInput(
            "exponent ladder must be strictly decreasing within (0, 0.5]".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: f64,
    pub epsilon: f64,
    pub err0: f64,
    pub sup: f64,
    /// Set when the solver failed for this entry.
    pub failure: Option<String>,
}

fn regularized_run(u0: &Field, n: f64, epsilon: f64, t_final: f64, cfg: &SolverConfig) -> Result<Field> {
    let params = ModelParams::new(n, epsilon, Mobility::Simple)?;
    let sim = simulate(u0, &params, t_final, cfg, &[])?;
    Ok(sim.into_completed()?.last().clone())
}

fn reference_solution(u0: &Field, t_final: f64, table: &KernelTable, opts: &HomotopyOptions) -> Result<Field> {
    match opts.reference {
        Reference::Convolution => biharmonic_solve(u0, t_final, table),
        Reference::UnitSolver => {
            let sim = simulate(u0, &ModelParams::unit(), t_final, &opts.solver, &[])?;
            Ok(sim.into_completed()?.last().clone())
        }
    }
}

/// `err0(n) = |u_{eps(n),n}(t) - w(t)|_inf` along the ladder.
pub fn homotopy_error_sweep(
    u0: &Field,
    n_ladder: &[f64],
    eps: EpsilonSource<'_>,
    t_final: f64,
    table: &KernelTable,
    opts: &HomotopyOptions,
) -> Result<Vec<SweepRow>> {
    check_ladder(n_ladder)?;
    let reference = reference_solution(u0, t_final, table, opts)?;
    let eps_values = n_ladder.iter().map(|&n| eps.epsilon(n)).collect::<Result<Vec<_>>>()?;
    Ok(n_ladder
        .par_iter()
        .zip(eps_values)
        .map(
            |(&n, epsilon)| match regularized_run(u0, n, epsilon, t_final, &opts.solver) {
                Ok(u) => SweepRow {
                    n,
                    epsilon,
                    err0: diff_sup(&u.values, &reference.values, opts.trim),
                    sup: u.sup_norm(),
                    failure: None,
                },
                Err(e) => SweepRow {
                    n,
                    epsilon,
                    err0: f64::NAN,
                    sup: f64::NAN,
                    failure: Some(e.to_string()),
                },
            },
        )
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phi1Result {
    pub fields: Vec<Field>,
    /// Largest fraction of nodes where `|w| < clamp_eta` over the quadrature.
    pub clamped_fraction: f64,
    pub warning: Option<String>,
}

/// Fraction of clamped nodes above which the logarithm is flagged.
pub const CLAMP_WARN_FRACTION: f64 = 0.05;

/// Convolutions with `t^{1/4}` below `h / RESOLVED_RATIO` are replaced by their
/// `t -> 0` limits.
const RESOLVED_RATIO: f64 = 2.5;

fn third_difference(v: &[f64], h: f64) -> Vec<f64> {
    let m = v.len();
    let mut out = vec![0.0; m];
    for i in 2..m.saturating_sub(2) {
        out[i] = (v[i + 2] - 2.0 * v[i + 1] + 2.0 * v[i - 1] - v[i - 2]) / (2.0 * h * h * h);
    }
    out
}

fn first_difference(v: &[f64], h: f64) -> Vec<f64> {
    let m = v.len();
    let mut out = vec![0.0; m];
    for i in 1..m - 1 {
        out[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
    }
    out
}

/// `(ln max(|w|, eta) * w_xxx, clamped fraction)` for `w(s)`.
fn log_source(u0: &Field, s: f64, table: &KernelTable, eta: f64) -> Result<(Vec<f64>, f64)> {
    let g = u0.grid;
    let h = g.spacing();
    let (w, wxxx) = if s > 0.0 && s.powf(0.25) * RESOLVED_RATIO >= h {
        (
            kernel_convolve(&g, &u0.values, s, table, 0)?.0,
            kernel_convolve(&g, &u0.values, s, table, 3)?.0,
        )
    } else {
        (u0.values.clone(), third_difference(&u0.values, h))
    };
    let clamped = w.iter().filter(|v| v.abs() < eta).count() as f64 / w.len() as f64;
    let src = w
        .iter()
        .zip(&wxxx)
        .map(|(&a, &d)| if d == 0.0 { 0.0 } else { a.abs().max(eta).ln() * d })
        .collect();
    Ok((src, clamped))
}

/// Quadrature nodes `(s, t - s, weight)` for `int_0^t ds`: the half next to
/// `s = t` uses `t - s = (t/2) sigma^4`, the half next to `s = 0` uses
/// `s = (t/2) rho^4`, each with a `k`-node trapezoid rule whose end weights
/// vanish at the graded endpoint.
fn time_nodes(t: f64, k: usize) -> Vec<(f64, f64, f64)> {
    let half = 0.5 * t;
    let mut nodes = Vec::with_capacity(2 * k);
    for j in 1..=k {
        let r = j as f64 / k as f64;
        let jac = 4.0 * half * r.powi(3) / k as f64;
        let w = if j == k { 0.5 * jac } else { jac };
        let d = half * r.powi(4);
        nodes.push((t - d, d, w));
        nodes.push((d, t - d, w));
    }
    nodes
}

fn phi1_at(u0: &Field, t: f64, table: &KernelTable, eta: f64, sigma_nodes: usize) -> Result<(Field, f64)> {
    let g = u0.grid;
    let h = g.spacing();
    let terms: Vec<(Vec<f64>, f64)> = time_nodes(t, sigma_nodes)
        .into_par_iter()
        .map(|(s, tau, weight)| {
            let (src, clamped) = log_source(u0, s, table, eta)?;
            let conv = if tau.powf(0.25) * RESOLVED_RATIO >= h {
                kernel_convolve(&g, &src, tau, table, 1)?.0
            } else {
                first_difference(&src, h)
            };
            Ok((conv.into_iter().map(|v| -weight * v).collect(), clamped))
        })
        .collect::<Result<_>>()?;
    let mut phi = vec![0.0; g.len()];
    let mut worst = 0.0f64;
    for (v, c) in &terms {
        for (p, x) in phi.iter_mut().zip(v) {
            *p += x;
        }
        worst = worst.max(*c);
    }
    Ok((Field::new(g, phi, u0.time + t)?, worst))
}

/// `phi1` at each time of `t_grid` (times measured from `u0.time`).
pub fn branching_correction_phi1(
    u0: &Field,
    t_grid: &[f64],
    table: &KernelTable,
    clamp_eta: f64,
) -> Result<Phi1Result> {
    branching_correction_phi1_with(u0, t_grid, table, clamp_eta, HomotopyOptions::default().sigma_nodes)
}

pub fn branching_correction_phi1_with(
    u0: &Field,
    t_grid: &[f64],
    table: &KernelTable,
    clamp_eta: f64,
    sigma_nodes: usize,
) -> Result<Phi1Result> {
    if !(clamp_eta > 0.0) {
        return Err(Error::InvalidInput(format!("clamp_eta = {clamp_eta} must be positive")));
    }
    if t_grid.is_empty() || t_grid[0] <= 0.0 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("time grid must be positive and increasing".into()));
    }
    if sigma_nodes < 4 {
        return Err(Error::InvalidInput("need at least 4 quadrature nodes".into()));
    }
    let mut fields = Vec::with_capacity(t_grid.len());
    let mut clamped_fraction = 0.0f64;
    for &t in t_grid {
        let (f, c) = phi1_at(u0, t, table, clamp_eta, sigma_nodes)?;
        fields.push(f);
        clamped_fraction = clamped_fraction.max(c);
    }
    let warning = (clamped_fraction > CLAMP_WARN_FRACTION).then(|| {
        format!(
            "ln|w| clamped on {:.1}% of the nodes; the logarithm is poorly resolved",
            100.0 * clamped_fraction
        )
    });
    Ok(Phi1Result {
        fields,
        clamped_fraction,
        warning,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchingReport {
    pub n: f64,
    pub epsilon: f64,
    /// `|u - w|_inf`.
    pub err0: f64,
    /// `|u - w - n phi1|_inf`.
    pub err1: f64,
    /// `err1 / n`.
    pub ratio: f64,
    /// `|phi1|_inf`.
    pub phi1_norm: f64,
}

impl BranchingReport {
    pub const CSV_HEADER: &'static str = "n,epsilon,err0,err1,ratio";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.n, self.epsilon, self.err0, self.err1, self.ratio
        )
    }
}

pub fn write_branching_csv<W: Write>(rows: &[BranchingReport], mut w: W) -> io::Result<()> {
    writeln!(w, "{}", BranchingReport::CSV_HEADER)?;
    for r in rows {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Per ladder entry, the first-order remainder `err1 = |u - w - n phi1|_inf`.
pub fn branching_order_check(
    u0: &Field,
    n_ladder: &[f64],
    eps: EpsilonSource<'_>,
    t_final: f64,
    table: &KernelTable,
    opts: &HomotopyOptions,
) -> Result<Vec<BranchingReport>> {
    check_ladder(n_ladder)?;
    let reference = reference_solution(u0, t_final, table, opts)?;
    let eta = opts.clamp_eta_rel * u0.sup_norm().max(f64::MIN_POSITIVE);
    let phi1 = branching_correction_phi1_with(u0, &[t_final], table, eta, opts.sigma_nodes)?
        .fields
        .remove(0);
    let phi1_norm = trimmed_sup(&phi1.values, opts.trim);
    let eps_values = n_ladder.iter().map(|&n| eps.epsilon(n)).collect::<Result<Vec<_>>>()?;
    n_ladder
        .par_iter()
        .zip(eps_values)
        .map(|(&n, epsilon)| {
            let u = regularized_run(u0, n, epsilon, t_final, &opts.solver)?;
            let err0 = diff_sup(&u.values, &reference.values, opts.trim);
            let rem: Vec<f64> = (0..u.values.len())
                .map(|i| u.values[i] - reference.values[i] - n * phi1.values[i])
                .collect();
            let err1 = trimmed_sup(&rem, opts.trim);
            Ok(BranchingReport {
                n,
                epsilon,
                err0,
                err1,
                ratio: err1 / n,
                phi1_norm,
            })
        })
        .collect()
}

/// Grid for bump data of half-width `width` evolved to `t_final`: wide enough
/// that the kernel tail outside carries less than the convolution tolerance.
pub fn domain_for(width: f64, t_final: f64, cells_per_unit: f64) -> Result<Grid1D> {
    let half = width + 22.0 * t_final.powf(0.25);
    let n = (2.0 * half * cells_per_unit).ceil() as usize;
    Grid1D::new(-half, half, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biharmonic::default_kernel;
    use crate::initial::{sample_initial_data, InitialData};
    use crate::regularization::Schedule;
    use std::sync::OnceLock;

    fn table() -> &'static KernelTable {
        static T: OnceLock<KernelTable> = OnceLock::new();
        T.get_or_init(|| default_kernel().unwrap())
    }

    fn bump(t: f64, cells_per_unit: f64) -> Field {
        let g = domain_for(1.0, t, cells_per_unit).unwrap();
        let kind = InitialData::SmoothBump {
            center: 0.0,
            width: 1.0,
            height: 1.0,
        };
        sample_initial_data(&kind, g, &ModelParams::unit()).unwrap()
    }

    fn diff(a: &[f64], b: &[f64]) -> f64 {
        diff_sup(a, b, 0.05)
    }

    #[test]
    fn zero_data_has_zero_correction() {
        let u0 = Field::zeros(domain_for(1.0, 0.1, 10.0).unwrap());
        let r = branching_correction_phi1(&u0, &[0.05, 0.1], table(), 1e-8).unwrap();
        assert!(r.fields.iter().all(|f| f.values.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn correction_vanishes_as_time_shrinks() {
        let u0 = bump(0.1, 20.0);
        let ts = [1e-10, 1e-8, 1e-6, 1e-4];
        let r = branching_correction_phi1_with(&u0, &ts, table(), 1e-8, 16).unwrap();
        let norms: Vec<f64> = r.fields.iter().map(|f| trimmed_sup(&f.values, 0.05)).collect();
        assert!(norms.windows(2).all(|w| w[0] < w[1]), "{norms:?}");
        assert!(norms[0] < 1e-3 * norms[3], "{norms:?}");
    }

    #[test]
    fn scaling_defect_matches_closed_form() {
        // phi1(l u0) - l phi1(u0) = -l ln(l) t w_xxxx(t) when the clamp scales with l.
        let t = 0.1;
        let u0 = bump(t, 20.0);
        let lambda = 2.0;
        let eta = 1e-8;
        let mut scaled = u0.clone();
        scaled.values.iter_mut().for_each(|v| *v *= lambda);
        let a = branching_correction_phi1(&u0, &[t], table(), eta)
            .unwrap()
            .fields
            .remove(0);
        let b = branching_correction_phi1(&scaled, &[t], table(), lambda * eta)
            .unwrap()
            .fields
            .remove(0);
        let g = u0.grid;
        let w3 = kernel_convolve(&g, &u0.values, t, table(), 3).unwrap().0;
        let w4 = first_difference(&w3, g.spacing());
        let expected: Vec<f64> = w4.iter().map(|v| -lambda * lambda.ln() * t * v).collect();
        let defect: Vec<f64> = (0..g.len()).map(|i| b.values[i] - lambda * a.values[i]).collect();
        let scale = trimmed_sup(&expected, 0.05);
        assert!(scale > 0.05, "correction must not be homogeneous: {scale}");
        assert!(
            diff(&defect, &expected) < 5e-3 * scale,
            "{} {scale}",
            diff(&defect, &expected)
        );
    }

    #[test]
    fn clamp_insensitivity() {
        let t = 0.5;
        let u0 = bump(t, 16.0);
        let eta = 1e-8;
        let base = branching_correction_phi1_with(&u0, &[t], table(), eta, 32).unwrap();
        let norm = trimmed_sup(&base.fields[0].values, 0.05);
        for k in [2.0, 4.0] {
            let r = branching_correction_phi1_with(&u0, &[t], table(), eta / k, 32).unwrap();
            assert!(diff(&r.fields[0].values, &base.fields[0].values) < 0.02 * norm);
        }
    }

    #[test]
    fn quadrature_converges() {
        let t = 0.1;
        let u0 = bump(t, 20.0);
        let f = |k| {
            branching_correction_phi1_with(&u0, &[t], table(), 1e-8, k)
                .unwrap()
                .fields
                .remove(0)
        };
        let (a, b) = (f(32), f(64));
        assert!(diff(&a.values, &b.values) < 3e-3 * trimmed_sup(&b.values, 0.05));
    }

    #[test]
    fn rejects_bad_inputs() {
        let u0 = bump(0.1, 10.0);
        let s = Schedule::exp_inv_sqrt();
        let o = HomotopyOptions::default();
        let e = EpsilonSource::Scheduled(&s);
        assert!(homotopy_error_sweep(&u0, &[0.1, 0.2], e, 0.1, table(), &o).is_err());
        assert!(homotopy_error_sweep(&u0, &[0.8], e, 0.1, table(), &o).is_err());
        assert!(branching_correction_phi1(&u0, &[0.1], table(), 0.0).is_err());
        assert!(branching_correction_phi1(&u0, &[0.1, 0.05], table(), 1e-8).is_err());
    }

    #[test]
    fn reports_are_deterministic_and_consistent() {
        let t = 0.05;
        let u0 = bump(t, 12.0);
        let s = Schedule::exp_inv_sqrt();
        let opts = HomotopyOptions {
            solver: SolverConfig::fixed(1e-3),
            sigma_nodes: 16,
            ..HomotopyOptions::default()
        };
        let run = || branching_order_check(&u0, &[0.2, 0.1], EpsilonSource::Scheduled(&s), t, table(), &opts).unwrap();
        let (a, b) = (run(), run());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.csv_row(), y.csv_row());
            assert!(x.err0 <= x.err1 + x.n * x.phi1_norm);
        }
    }
}
