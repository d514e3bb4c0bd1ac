use tfelab::biharmonic::default_kernel;
use tfelab::diagnostics::{default_tol, oscillation_profile};
use tfelab::homotopy::domain_for;
use tfelab::initial::{sample_initial_data, InitialData};
use tfelab::interface_ode::{find_periodic_orbit, OrbitMethod};
use tfelab::riemann::{rescaled_interface_data, stable_interface_experiment};
use tfelab::*;

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// Backward-Euler start followed by Crank-Nicolson.
fn smoothed_cn(u0: &Field, p: &ModelParams, t: f64, dt: f64) -> Field {
    let be = SolverConfig::fixed(dt / 4.0);
    let start = simulate(u0, p, dt, &be, &[]).unwrap().into_completed().unwrap();
    let cn = SolverConfig::fixed(dt).with_theta(0.5);
    let end = simulate(start.last(), p, t - dt, &cn, &[])
        .unwrap()
        .into_completed()
        .unwrap();
    end.last().clone()
}

#[test]
fn unit_solver_converges_to_convolution() {
    let table = default_kernel().unwrap();
    let p = ModelParams::unit();
    let t = 1.0;
    let errs: Vec<f64> = [5.0, 10.0, 20.0]
        .iter()
        .map(|&cpu| {
            let g = domain_for(1.0, t, cpu).unwrap();
            let u0 = sample_initial_data(
                &InitialData::SmoothBump {
                    center: 0.0,
                    width: 1.0,
                    height: 1.0,
                },
                g,
                &p,
            )
            .unwrap();
            let num = smoothed_cn(&u0, &p, t, 2e-3);
            let exact = biharmonic_solve(&u0, t, &table).unwrap();
            sup_diff(&num.values, &exact.values)
        })
        .collect();
    for w in errs.windows(2) {
        assert!((w[0] / w[1]).log2() >= 1.8, "{errs:?}");
    }
}

#[test]
fn periodic_sine_matches_fourier_decay() {
    let g = Grid1D::new(0.0, 2.0 * std::f64::consts::PI, 128).unwrap();
    let u0 = Field::from_fn(g, f64::sin).unwrap();
    let cfg = SolverConfig::fixed(2.5e-4)
        .with_theta(0.5)
        .with_boundary(Boundary::Periodic);
    let sim = simulate(&u0, &ModelParams::unit(), 0.1, &cfg, &[]).unwrap();
    let exact: Vec<f64> = g.nodes().map(|x| (-0.1f64).exp() * x.sin()).collect();
    assert!(sup_diff(&sim.trajectory.last().values, &exact) < 1e-4);
}

#[test]
fn interface_data_carries_the_orbit_envelope() {
    let orbit = find_periodic_orbit(1.0, OrbitMethod::ForwardAttractor).unwrap();
    assert!(orbit.converged);
    let g = Grid1D::new(-1.0, 4.0, 500).unwrap();
    let v0 = rescaled_interface_data(1.0, &orbit, 1e-2, g).unwrap();
    let bound = g
        .nodes()
        .zip(&v0.values)
        .filter(|(y, _)| *y > 0.0)
        .map(|(y, v)| v.abs() / y.powi(3))
        .fold(0.0, f64::max);
    assert!(bound <= 1.01 * orbit.amplitude);
    let shifted = rescaled_interface_data(1.0, &orbit, 1e-2 * (-3.0 * orbit.period).exp(), g).unwrap();
    assert!(sup_diff(&v0.values, &shifted.values) <= 1e-10);
    let profile = oscillation_profile(&v0, default_tol(&v0)).unwrap();
    assert!(profile.sign_changes >= 2);
}

#[test]
fn interface_flow_stays_bounded_across_eps() {
    let orbit = find_periodic_orbit(1.0, OrbitMethod::ForwardAttractor).unwrap();
    let g = Grid1D::new(-4.0, 4.0, 200).unwrap();
    let rows = stable_interface_experiment(1.0, &orbit, &[1e-1, 1e-2, 1e-3], g, 0.5, 1.0).unwrap();
    assert!(rows.iter().all(|r| !r.blew_up && r.failure.is_none()));
    let hi = rows.iter().map(|r| r.window_sup).fold(0.0, f64::max);
    let lo = rows.iter().map(|r| r.window_sup).fold(f64::INFINITY, f64::min);
    assert!(hi / lo < 3.0, "{rows:?}");
}
