//! One function per subcommand: config in, output files out.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use tfelab::biharmonic::{default_kernel, kernel_1d, kernel_residual, KernelTable};
use tfelab::diagnostics::{
    energy_identity_residual, energy_ledger, weak_form_residual, write_energy_csv, TestFunction,
};
use tfelab::fit::log_log_slope;
use tfelab::homotopy::{
    branching_order_check, domain_for, homotopy_error_sweep, write_branching_csv, BranchingReport, HomotopyOptions,
};
use tfelab::initial::{sample_initial_data, InitialData};
use tfelab::interface_ode::{
    coefficients, critical_mu, equilibria, equilibrium_positive_exponent, find_periodic_orbit_with,
    heteroclinic_scan_with, OrbitMethod,
};
use tfelab::regularization::EpsilonSource;
use tfelab::riemann::{
    blowup_experiment_with, interface_phase, psi_residual, separable_constant, separable_fd_check, separable_residual,
    stable_interface_experiment, BlowupOptions, InterfaceRow,
};
use tfelab::solver::{Discretization, RunStatus};
use tfelab::{Field, Grid1D, Mobility, ModelParams, Schedule, SolverConfig, Trajectory};

use crate::config::*;
use crate::error::{CliError, CliResult};
use crate::manifest::Outputs;

const ENERGY_MONOTONE_TOL: f64 = 1e-10;

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

pub fn dispatch(cfg: &ExperimentConfig) -> CliResult<Outputs> {
    match cfg {
        ExperimentConfig::Kernel(c) => kernel(c),
        ExperimentConfig::Simulate(c) => simulate(c),
        ExperimentConfig::Homotopy(c) => homotopy(c),
        ExperimentConfig::Branching(c) => branching(c),
        ExperimentConfig::Orbit(c) => orbit(c),
        ExperimentConfig::Scan(c) => scan(c),
        ExperimentConfig::Riemann(c) => riemann(c),
        ExperimentConfig::Sweep(c) => sweep(c),
    }
}

fn decimate(table: &KernelTable, stride: usize) -> CliResult<KernelTable> {
    let g = table.grid;
    let grid = Grid1D::new(g.x_min(), g.x_max(), g.n_cells() / stride)?;
    let take = |v: &[f64]| v.iter().step_by(stride).copied().collect::<Vec<_>>();
    Ok(KernelTable {
        grid,
        values: take(&table.values),
        derivatives: table.derivatives.iter().map(|d| take(d)).collect(),
        ..table.clone()
    })
}

/// Exponent `p` maximizing R^2 of `ln|F|` at extrema against `|y|^p`.
fn free_envelope_exponent(table: &KernelTable, lo: f64, hi: f64) -> Option<(f64, f64, f64)> {
    let score = |p: f64| {
        table
            .envelope_fit_power(lo, hi, p)
            .map_or(f64::NEG_INFINITY, |f| f.r_squared)
    };
    let (mut a, mut b) = (1.0f64, 2.0f64);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (score(c), score(d));
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = score(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = score(d);
        }
    }
    let p = 0.5 * (a + b);
    table.envelope_fit_power(lo, hi, p).map(|f| (p, f.a, f.r_squared))
}

fn kernel(c: &KernelConfig) -> CliResult<Outputs> {
    let table = kernel_1d(Grid1D::new(-c.y_max, c.y_max, c.cells)?, c.quadrature_tol)?;
    let mut residuals = Vec::new();
    for stride in [4, 2, 1] {
        let t = decimate(&table, stride)?;
        residuals.push(json!({
            "cells": t.grid.n_cells(),
            "spacing": t.grid.spacing(),
            "residual": kernel_residual(&t)?,
        }));
    }
    let r: Vec<f64> = residuals
        .iter()
        .map(|v| v["residual"].as_f64().unwrap_or(f64::NAN))
        .collect();
    let [lo, hi] = c.envelope_window;
    let envelope = table.envelope_fit(lo, hi);
    let wide_hi = (0.75 * c.y_max).max(hi);
    let free = free_envelope_exponent(&table, lo, wide_hi);
    let summary = json!({
        "meta": table.meta(),
        "f0": table.values[table.grid.nearest(0.0)],
        "mass_defect": table.mass_defect(),
        "sign_change_radius": c.sign_change_radius,
        "sign_changes": table.sign_changes_within(c.sign_change_radius),
        "envelope_window": c.envelope_window,
        "envelope": envelope,
        "wide_envelope": table.envelope_fit(lo, wide_hi),
        "free_exponent": free.map(|(p, a, r2)| json!({"window": [lo, wide_hi], "power": p, "a": a, "r_squared": r2})),
        "residuals": residuals,
        "residual_orders": [(r[0] / r[1]).log2(), (r[1] / r[2]).log2()],
    });
    let mut out = Outputs::default();
    out.add("kernel.csv", csv_bytes(|w| table.write_csv(w))?);
    out.add_json("kernel.json", &summary);
    out.tolerance("kernel.quadrature_tol", c.quadrature_tol);
    Ok(out)
}

fn initial_field(init: &InitialSection, grid: Grid1D, params: &ModelParams) -> CliResult<Field> {
    Ok(match init {
        InitialSection::SmoothBump { center, width, height } => sample_initial_data(
            &InitialData::SmoothBump {
                center: *center,
                width: *width,
                height: *height,
            },
            grid,
            params,
        )?,
        InitialSection::Riemann { chi_plus, chi_minus } => sample_initial_data(
            &InitialData::Riemann {
                chi_plus: *chi_plus,
                chi_minus: *chi_minus,
            },
            grid,
            params,
        )?,
        InitialSection::Trig { .. } => Field::from_fn(grid, |x| trig_value(init, x, 0.0))?,
    })
}

/// Trigonometric data evolved by `u_t = -u_xxxx`.
fn trig_value(init: &InitialSection, x: f64, t: f64) -> f64 {
    let InitialSection::Trig { offset, sine, cosine } = init else {
        return f64::NAN;
    };
    let decay = |k: f64| (-k.powi(4) * t).exp();
    offset
        + sine.iter().map(|[k, a]| a * decay(*k) * (k * x).sin()).sum::<f64>()
        + cosine.iter().map(|[k, a]| a * decay(*k) * (k * x).cos()).sum::<f64>()
}

fn status_error(status: &RunStatus) -> CliError {
    CliError::numerical(
        "run did not reach t_final",
        serde_json::to_value(status).unwrap_or(serde_json::Value::Null),
    )
}

fn completed(sim: tfelab::Simulation) -> CliResult<Trajectory> {
    match sim.status {
        RunStatus::Completed => Ok(sim.trajectory),
        s => Err(status_error(&s)),
    }
}

fn simulate(c: &SimulateConfig) -> CliResult<Outputs> {
    let params = c.model.params()?;
    let grid = c.domain.grid()?;
    let cfg = c.solver.config()?;
    let u0 = initial_field(&c.initial, grid, &params)?;
    let snaps: Vec<f64> = (1..c.snapshots)
        .map(|k| c.t_final * k as f64 / c.snapshots as f64)
        .collect();

    let (startup, main) = if c.startup_substeps > 0 && cfg.theta < 1.0 {
        let dt = cfg.dt_initial;
        let be = SolverConfig {
            theta: 1.0,
            ..SolverConfig::fixed(dt / c.startup_substeps as f64)
        };
        let start = completed(tfelab::simulate(&u0, &params, dt, &be, &[])?)?;
        let rest: Vec<f64> = snaps.iter().map(|s| s - dt).filter(|s| *s > 0.0).collect();
        let main = completed(tfelab::simulate(start.last(), &params, c.t_final - dt, &cfg, &rest)?)?;
        (Some(start), main)
    } else {
        (
            None,
            completed(tfelab::simulate(&u0, &params, c.t_final, &cfg, &snaps)?)?,
        )
    };

    let mut steps = startup.as_ref().map(|s| s.step_log.clone()).unwrap_or_default();
    steps.extend(main.step_log.iter().copied());
    let mut written = Trajectory::new(u0.clone());
    for s in &main.snapshots[1..] {
        written.push(s.clone())?;
    }
    let disc = Discretization::from_meta(grid, main.meta.as_ref().expect("solver records run metadata"));
    let mass_initial = disc.mass(&u0.values);
    let (mut prev_mass, mut prev_energy) = (mass_initial, disc.gradient_energy(&u0.values));
    let (mut max_mass_change, mut energy_increases) = (0.0f64, 0usize);
    for r in &steps {
        max_mass_change = max_mass_change.max((r.mass - prev_mass).abs());
        if r.gradient_energy > prev_energy + ENERGY_MONOTONE_TOL {
            energy_increases += 1;
        }
        prev_mass = r.mass;
        prev_energy = r.gradient_energy;
    }
    let last = main.last();
    let convolution_linf = if c.compare_convolution {
        let table = default_kernel()?;
        let exact = tfelab::biharmonic_solve(&u0, c.t_final, &table)?;
        Some(sup_diff(&last.values, &exact.values))
    } else {
        None
    };
    let exact_linf =
        (matches!(c.initial, InitialSection::Trig { .. }) && params.mobility == Mobility::Unit).then(|| {
            let exact: Vec<f64> = grid.nodes().map(|x| trig_value(&c.initial, x, c.t_final)).collect();
            sup_diff(&last.values, &exact)
        });
    let ledger = energy_ledger(&main, &params)?;
    let summary = json!({
        "status": "completed",
        "t_final": last.time,
        "steps": steps.len(),
        "startup_steps": startup.as_ref().map_or(0, |s| s.step_log.len()),
        "newton_iterations": steps.iter().map(|r| r.newton_iterations).sum::<usize>(),
        "mass_initial": mass_initial,
        "mass_final": steps.last().map_or(mass_initial, |r| r.mass),
        "max_step_mass_change": max_mass_change,
        "gradient_energy_increases": energy_increases,
        "energy_identity_residual": energy_identity_residual(&main, &params)?,
        "energy_ledger_start": main.snapshots[0].time,
        "sup_final": last.sup_norm(),
        "convolution_linf": convolution_linf,
        "exact_linf": exact_linf,
    });
    let mut out = Outputs::default();
    out.add("trajectory.csv", csv_bytes(|w| written.write_csv(w))?);
    out.add("energy.csv", csv_bytes(|w| write_energy_csv(&ledger, w))?);
    out.add_json("summary.json", &summary);
    out.tolerance("solver.newton_tol", cfg.newton_tol);
    out.tolerance("solver.dt_min", cfg.dt_min);
    out.tolerance("diagnostics.energy_monotone_tol", ENERGY_MONOTONE_TOL);
    Ok(out)
}

struct HomotopySetup {
    u0: Field,
    table: KernelTable,
    opts: HomotopyOptions,
    schedule: Option<Schedule>,
}

impl HomotopySetup {
    fn new(c: &HomotopyConfig, clamp_eta_rel: f64, sigma_nodes: usize) -> CliResult<Self> {
        let grid = domain_for(c.bump_width, c.t_final, c.cells_per_unit)?;
        let u0 = sample_initial_data(
            &InitialData::SmoothBump {
                center: 0.0,
                width: c.bump_width,
                height: c.bump_height,
            },
            grid,
            &ModelParams::unit(),
        )?;
        let opts = HomotopyOptions {
            solver: c.solver.config()?,
            reference: c.reference,
            clamp_eta_rel,
            sigma_nodes,
            trim: c.trim,
        };
        let schedule = match c.fixed_epsilon {
            Some(_) => None,
            None => Some(Schedule::from_key(&c.schedule)?),
        };
        Ok(Self {
            u0,
            table: default_kernel()?,
            opts,
            schedule,
        })
    }

    fn source<'a>(&'a self, c: &HomotopyConfig) -> EpsilonSource<'a> {
        match (&self.schedule, c.fixed_epsilon) {
            (Some(s), _) => EpsilonSource::Scheduled(s),
            (None, e) => EpsilonSource::Fixed(e.unwrap_or(1.0)),
        }
    }

    fn tolerances(&self, out: &mut Outputs) {
        out.tolerance("solver.newton_tol", self.opts.solver.newton_tol);
        out.tolerance("homotopy.trim", self.opts.trim);
        out.tolerance("homotopy.clamp_eta_rel", self.opts.clamp_eta_rel);
    }
}

fn epsilon_label(c: &HomotopyConfig, s: &HomotopySetup) -> String {
    match (&s.schedule, c.fixed_epsilon) {
        (Some(sch), _) => sch.description().to_string(),
        (None, e) => format!("fixed eps = {}", e.unwrap_or(1.0)),
    }
}

fn homotopy(c: &HomotopyConfig) -> CliResult<Outputs> {
    let setup = HomotopySetup::new(c, 1e-8, 64)?;
    let rows = homotopy_error_sweep(
        &setup.u0,
        &c.ladder,
        setup.source(c),
        c.t_final,
        &setup.table,
        &setup.opts,
    )?;
    if let Some(bad) = rows.iter().find(|r| r.failure.is_some()) {
        return Err(CliError::numerical(
            format!("solver failed at n = {}", bad.n),
            serde_json::to_value(&rows).unwrap_or_default(),
        ));
    }
    let err0: Vec<f64> = rows.iter().map(|r| r.err0).collect();
    let mut csv = String::from("n,epsilon,err0,sup\n");
    for r in &rows {
        let _ = writeln!(csv, "{:.16e},{:.16e},{:.16e},{:.16e}", r.n, r.epsilon, r.err0, r.sup);
    }
    let summary = json!({
        "epsilon": epsilon_label(c, &setup),
        "t_final": c.t_final,
        "grid": setup.u0.grid,
        "norm": "grid max norm excluding the outer trim fraction of nodes",
        "err0_strictly_decreasing": strictly_decreasing(&err0),
        "final_over_first": err0[err0.len() - 1] / err0[0],
        "rows": rows,
    });
    let mut out = Outputs::default();
    out.add("sweep.csv", csv.into_bytes());
    out.add_json("summary.json", &summary);
    setup.tolerances(&mut out);
    Ok(out)
}

fn branching(c: &BranchingConfig) -> CliResult<Outputs> {
    let h = &c.homotopy;
    let setup = HomotopySetup::new(h, c.clamp_eta_rel, c.sigma_nodes)?;
    let rows = branching_order_check(
        &setup.u0,
        &h.ladder,
        setup.source(h),
        h.t_final,
        &setup.table,
        &setup.opts,
    )?;
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let last = rows[rows.len() - 1];
    let mut summary = json!({
        "epsilon": epsilon_label(h, &setup),
        "t_final": h.t_final,
        "grid": setup.u0.grid,
        "phi1_norm": last.phi1_norm,
        "ratio_strictly_decreasing": strictly_decreasing(&ratios),
        "err0_over_n_at_smallest_n": last.err0 / last.n,
        "expansion_relative_gap": (last.err0 / last.n - last.phi1_norm).abs() / last.phi1_norm,
        "rows": rows,
    });
    let mut out = Outputs::default();
    out.add("branching.csv", csv_bytes(|w| write_branching_csv(&rows, w))?);
    if let Some(e) = c.control_epsilon {
        let control: Vec<BranchingReport> = branching_order_check(
            &setup.u0,
            &h.ladder,
            EpsilonSource::Fixed(e),
            h.t_final,
            &setup.table,
            &setup.opts,
        )?;
        let cr: Vec<f64> = control.iter().map(|r| r.ratio).collect();
        let k = cr.len();
        let last_decrease = if k >= 2 { 1.0 - cr[k - 1] / cr[k - 2] } else { f64::NAN };
        let over_scheduled = cr[k - 1] / ratios[k - 1];
        summary["control"] = json!({
            "epsilon": e,
            "last_step_relative_decrease": last_decrease,
            "ratio_over_scheduled_at_smallest_n": over_scheduled,
            "stagnates": last_decrease < 0.15 && over_scheduled >= 2.0,
            "rows": control,
        });
        out.add("control.csv", csv_bytes(|w| write_branching_csv(&control, w))?);
    }
    out.add_json("summary.json", &summary);
    setup.tolerances(&mut out);
    out.tolerance("branching.stagnation_decrease", 0.15);
    out.tolerance("branching.stagnation_factor", 2.0);
    Ok(out)
}

fn orbit(c: &OrbitConfig) -> CliResult<Outputs> {
    let opts = c.integrator.options()?;
    let orbit = find_periodic_orbit_with(c.n, c.method, &opts)?;
    let summary = json!({
        "n": orbit.n,
        "mu": orbit.mu,
        "coefficients": coefficients(c.n),
        "converged": orbit.converged,
        "period": orbit.period,
        "amplitude": orbit.amplitude,
        "residual": orbit.converged.then(|| orbit.residual()),
        "method_meta": orbit.method_meta,
        "equilibria": equilibria(c.n)?,
        "equilibrium_positive_exponent": equilibrium_positive_exponent(c.n),
    });
    let mut out = Outputs::default();
    out.add("orbit.csv", csv_bytes(|w| orbit.write_csv(w))?);
    out.add_json("orbit.json", &summary);
    out.tolerance("orbit.rtol", opts.rtol);
    out.tolerance("orbit.atol_rel", opts.atol_rel);
    out.tolerance("orbit.return_tol", opts.return_tol);
    Ok(out)
}

fn scan(c: &ScanConfig) -> CliResult<Outputs> {
    let opts = c.integrator.options()?;
    let result = heteroclinic_scan_with(c.n_range[0], c.n_range[1], c.steps, &opts)?;
    let ([mu_minus, mu_plus], [n_minus, n_plus]) = critical_mu();
    let mut csv = String::from("n,converged,period,amplitude\n");
    for r in &result.period_table {
        let _ = writeln!(
            csv,
            "{:.16e},{},{:.16e},{:.16e}",
            r.n, r.converged, r.period, r.amplitude
        );
    }
    let summary = json!({
        "n_h_estimate": result.n_h_estimate,
        "bracket": result.bracket,
        "fit": result.fit,
        "critical": {"mu_minus": mu_minus, "mu_plus": mu_plus, "n_minus": n_minus, "n_plus": n_plus},
        "period_table": result.period_table,
    });
    let mut out = Outputs::default();
    out.add("scan.csv", csv.into_bytes());
    out.add_json("scan.json", &summary);
    out.tolerance("orbit.rtol", opts.rtol);
    out.tolerance("orbit.return_tol", opts.return_tol);
    Ok(out)
}

#[derive(Serialize)]
struct SeparableRow {
    dimension: usize,
    polynomial: f64,
    degenerate: bool,
    c_star: Option<f64>,
    residual_at_c_star: Option<f64>,
    fd_relative_deviation: f64,
}

fn riemann(c: &RiemannConfig) -> CliResult<Outputs> {
    let n = c.n;
    let mut separable = Vec::new();
    for &d in &c.separable.dimensions {
        let r = separable_constant(n, d)?;
        let probe_c = r.c_star.unwrap_or(1.0);
        separable.push(SeparableRow {
            dimension: d,
            polynomial: r.polynomial,
            degenerate: r.degenerate,
            c_star: r.c_star,
            residual_at_c_star: r
                .c_star
                .map(|cs| separable_residual(n, d, cs, &c.separable.probes))
                .transpose()?,
            fd_relative_deviation: separable_fd_check(n, d, probe_c, &c.separable.probes)?,
        });
    }
    let tb = c.separable.t_blowup;
    let psi_times: Vec<f64> = (0..20).map(|k| tb * k as f64 / 20.0).collect();

    let b = &c.blowup;
    let opts = BlowupOptions {
        t_max: b.t_max,
        dt_initial: b.dt_initial,
        dt_min: b.dt_min,
        dt_max: b.dt_max,
    };
    let report = blowup_experiment_with(
        n,
        (b.chi[0], b.chi[1]),
        b.domain.grid()?,
        b.ceiling,
        Mobility::Simple,
        &opts,
    )?;
    let mut history = String::from("t,sup\n");
    for (t, s) in &report.history {
        let _ = writeln!(history, "{t:.16e},{s:.16e}");
    }

    let orbit_opts = c.integrator.options()?;
    let orbit = find_periodic_orbit_with(n, OrbitMethod::ForwardAttractor, &orbit_opts)?;
    let i = &c.interface;
    let rows: Vec<InterfaceRow> = if orbit.converged {
        stable_interface_experiment(n, &orbit, &i.eps_ladder, i.domain.grid()?, i.t_final, i.window)?
    } else {
        Vec::new()
    };
    let sups: Vec<f64> = rows.iter().map(|r| r.window_sup).collect();
    let hi = sups.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = sups.iter().copied().fold(f64::INFINITY, f64::min);
    let mut csv = String::from(InterfaceRow::CSV_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    let summary = json!({
        "n": n,
        "separable": {
            "rows": separable,
            "psi_t_blowup": tb,
            "psi_residual": psi_residual(n, tb, &psi_times),
        },
        "blowup": {
            "chi": b.chi,
            "blew_up": report.blew_up,
            "t_estimate": report.t_estimate,
            "exponent_fit": report.exponent_fit,
            "fit_quality": report.fit_quality,
            "fit_samples": report.fit_samples,
            "expected_exponent": 1.0 / n,
            "status": report.status,
            "sup_initial": report.sup_initial,
            "sup_final": report.sup_final,
            "unreliable": report.unreliable,
        },
        "interface": {
            "orbit_converged": orbit.converged,
            "orbit_period": orbit.period,
            "orbit_amplitude": orbit.amplitude,
            "o1_term": 0.0,
            "phases": i.eps_ladder.iter().map(|&e| interface_phase(n, e)).collect::<Vec<_>>(),
            "data_bounds": rows.iter().map(|r| r.data_bound).collect::<Vec<_>>(),
            "failures": rows.iter().map(|r| r.failure.clone()).collect::<Vec<_>>(),
            "window": i.window,
            "window_sup_ratio": if rows.is_empty() { f64::NAN } else { hi / lo },
            "blow_up_flags": rows.iter().filter(|r| r.blew_up).count(),
        },
    });
    let mut out = Outputs::default();
    out.add("blowup_history.csv", history.into_bytes());
    out.add("interface.csv", csv.into_bytes());
    out.add_json("riemann.json", &summary);
    out.tolerance("riemann.ceiling", b.ceiling);
    out.tolerance("riemann.dt_min", b.dt_min);
    out.tolerance("orbit.return_tol", orbit_opts.return_tol);
    Ok(out)
}

fn sweep(c: &SweepConfig) -> CliResult<Outputs> {
    let grid = c.domain.grid()?;
    let cfg = c.solver.config()?;
    let tf = &c.test_function;
    let test = TestFunction {
        kind: tf.kind,
        x_center: tf.x_center,
        x_width: tf.x_width,
        t_center: tf.t_center,
        t_width: tf.t_width,
        wavenumber: tf.wavenumber,
    };
    let snaps: Vec<f64> = (1..c.snapshots)
        .map(|k| c.t_final * k as f64 / c.snapshots as f64)
        .collect();
    let smallest = c.eps_ladder[c.eps_ladder.len() - 1];
    let runs: Vec<CliResult<Vec<[f64; 5]>>> = c
        .eps_ladder
        .par_iter()
        .map(|&eps| {
            let params = ModelParams::new(c.n, eps, Mobility::Homotopy)?;
            let u0 = initial_field(&c.initial, grid, &params)?;
            let traj = completed(tfelab::simulate(&u0, &params, c.t_final, &cfg, &snaps)?)?;
            let deltas: Vec<f64> = if eps == smallest {
                c.delta_ladder.clone()
            } else {
                vec![eps]
            };
            deltas
                .iter()
                .map(|&delta| {
                    let w = weak_form_residual(&traj, &params, &test, delta)?;
                    Ok([eps, delta, w.total, w.eps_term, w.bad_set_term])
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for r in runs {
        rows.extend(r?);
    }
    let coupled: Vec<&[f64; 5]> = rows.iter().filter(|r| r[1] == r[0]).collect();
    let eps_fit = log_log_slope(
        &coupled.iter().map(|r| r[0]).collect::<Vec<_>>(),
        &coupled.iter().map(|r| r[3]).collect::<Vec<_>>(),
    );
    let bad: Vec<&[f64; 5]> = rows.iter().filter(|r| r[0] == smallest).collect();
    let bad_fit = log_log_slope(
        &bad.iter().map(|r| r[1]).collect::<Vec<_>>(),
        &bad.iter().map(|r| r[4]).collect::<Vec<_>>(),
    );
    let mut csv = String::from("eps,delta,total,eps_term,bad_set_term\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r[0], r[1], r[2], r[3], r[4]
        );
    }
    let summary = json!({
        "n": c.n,
        "mobility": "homotopy",
        "eps_term_slope": eps_fit,
        "bad_set_exponent": bad_fit,
        "bad_set_exponent_floor": c.n / 2.0 - 0.1,
        "bad_set_eps": smallest,
        "max_abs_total": rows.iter().map(|r| r[2].abs()).fold(0.0, f64::max),
    });
    let mut out = Outputs::default();
    out.add("weakform.csv", csv.into_bytes());
    out.add_json("summary.json", &summary);
    out.tolerance("solver.newton_tol", cfg.newton_tol);
    Ok(out)
}
