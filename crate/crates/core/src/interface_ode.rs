//! The oscillatory-interface ODE
//! `phi''' + 3(mu-1) phi'' + (3mu^2-6mu+2) phi' + mu(mu-1)(mu-2) phi + |phi|^{-n} phi = 0`,
//! `mu = 3/n`, whose periodic solutions describe sign changes near an interface
//! `u ~ x^mu phi(ln x)`.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::grid::linspace;
use crate::ode::{DenseStep, Dopri5, Dopri5Options};

pub type State = [f64; 3];

/// `mu = 3/n`.
pub fn mu(n: f64) -> f64 {
    3.0 / n
}

/// Coefficients `[3(mu-1), 3mu^2-6mu+2, mu(mu-1)(mu-2)]`.
pub fn coefficients(n: f64) -> [f64; 3] {
    let m = mu(n);
    [3.0 * (m - 1.0), 3.0 * m * m - 6.0 * m + 2.0, m * (m - 1.0) * (m - 2.0)]
}

/// Roots `mu_pm = (3 ± sqrt 3)/3` of `3mu^2 - 6mu + 2` and the exponents `n = 3/mu`
/// where the damping coefficient of `phi'` vanishes.
pub fn critical_mu() -> ([f64; 2], [f64; 2]) {
    let (a, b, c) = (3.0f64, -6.0f64, 2.0f64);
    let disc = (b * b - 4.0 * a * c).sqrt();
    let mp = (-b + disc) / (2.0 * a);
    let mm = c / (a * mp);
    ([mm, mp], [3.0 / mm, 3.0 / mp])
}

fn check_n(n: f64) -> Result<()> {
    if n > 0.0 && n < 3.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("exponent n = {n} outside (0, 3)")))
    }
}

#[inline]
fn singular_term(phi: f64, n: f64, zero_reg: f64) -> f64 {
    if zero_reg == 0.0 {
        phi.signum() * phi.abs().powf(1.0 - n) * if phi == 0.0 { 0.0 } else { 1.0 }
    } else {
        phi * (phi * phi + zero_reg * zero_reg).powf(-0.5 * n)
    }
}

/// Right-hand side of the first-order system for `(phi, phi', phi'')`.
pub fn eqlc_rhs(state: State, n: f64, zero_reg: f64) -> Result<State> {
    check_n(n)?;
    if zero_reg < 0.0 || !zero_reg.is_finite() {
        return Err(Error::InvalidInput(format!("zero_reg = {zero_reg}")));
    }
    if state.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("interface ODE state".into()));
    }
    if zero_reg == 0.0 && n >= 1.0 && state[0] == 0.0 {
        return Err(Error::InvalidInput(format!(
            "singular term undefined at phi = 0 for n = {n} without regularization"
        )));
    }
    Ok(rhs_unchecked(state, coefficients(n), n, zero_reg))
}

#[inline]
fn rhs_unchecked(s: State, c: [f64; 3], n: f64, zero_reg: f64) -> State {
    let third = -(c[0] * s[2] + c[1] * s[1] + c[2] * s[0] + singular_term(s[0], n, zero_reg));
    [s[1], s[2], third]
}

/// Nonzero constant solutions, as `[-phi_+, phi_+]`, or empty.
pub fn equilibria(n: f64) -> Result<Vec<f64>> {
    check_n(n)?;
    let c0 = coefficients(n)[2];
    if c0 >= 0.0 {
        return Ok(Vec::new());
    }
    // Newton on g(L) = -n L - ln(-c0) for L = ln|phi|, then polish on the original
    // balance |phi|^{-n} + c0 = 0.
    let mut l = 0.0f64;
    for _ in 0..100 {
        let g = -n * l - (-c0).ln();
        l -= g / -n;
        if g.abs() < 1e-15 {
            break;
        }
    }
    let mut p = l.exp();
    for _ in 0..5 {
        let g = p.powf(-n) + c0;
        let dg = -n * p.powf(-n - 1.0);
        p -= g / dg;
    }
    let r = eqlc_rhs([p, 0.0, 0.0], n, 0.0)?;
    if r[2].abs() >= 1e-12 * (1.0 + c0.abs() * p) {
        return Err(Error::InvalidInput(format!("equilibrium residual {} at n = {n}", r[2])));
    }
    Ok(vec![-p, p])
}

/// `[mu(mu-1)(2-mu)]^{1/n}`, the positive-exponent variant of the equilibrium
/// formula, for comparison with [`equilibria`].
pub fn equilibrium_positive_exponent(n: f64) -> Option<f64> {
    let c0 = coefficients(n)[2];
    (c0 < 0.0).then(|| (-c0).powf(1.0 / n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrbitMethod {
    ForwardAttractor,
    Shooting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitOptions {
    pub rtol: f64,
    pub atol_rel: f64,
    /// Relative agreement of successive section returns.
    pub return_tol: f64,
    pub max_returns: usize,
    /// Maximum integration length in `s` for the attractor search.
    pub max_s: f64,
    pub max_steps: usize,
    /// Regularization relative to amplitude (used for `n >= 1`).
    pub zero_reg_rel: f64,
    pub samples: usize,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol_rel: 1e-14,
            return_tol: 1e-9,
            max_returns: 4000,
            max_s: 5e4,
            max_steps: 20_000_000,
            zero_reg_rel: 1e-8,
            samples: 512,
        }
    }
}

/// Why a search finished and what it cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitMeta {
    pub method: OrbitMethod,
    pub zero_reg: f64,
    pub returns: usize,
    pub integration_steps: usize,
    /// Relative change between the last two section returns (attractor) or the
    /// final Newton residual (shooting).
    pub last_change: f64,
    /// Max residual of the ODE along the sampled orbit, relative to the state scale.
    pub ode_residual: f64,
    pub closure_error: f64,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitResult {
    pub n: f64,
    pub mu: f64,
    pub period: f64,
    /// `(s, phi, phi', phi'')` over one period, starting on the section.
    pub samples: Vec<[f64; 4]>,
    pub amplitude: f64,
    pub converged: bool,
    pub method_meta: OrbitMeta,
}

impl OrbitResult {
    fn failed(n: f64, method: OrbitMethod, zero_reg: f64, returns: usize, steps: usize, outcome: String) -> Self {
        Self {
            n,
            mu: mu(n),
            period: f64::NAN,
            samples: Vec::new(),
            amplitude: f64::NAN,
            converged: false,
            method_meta: OrbitMeta {
                method,
                zero_reg,
                returns,
                integration_steps: steps,
                last_change: f64::NAN,
                ode_residual: f64::NAN,
                closure_error: f64::NAN,
                outcome,
            },
        }
    }

    /// `phi(s)` by periodic cubic Hermite interpolation of the samples.
    pub fn phi(&self, s: f64) -> Result<f64> {
        self.interp(s, 0)
    }

    /// `phi'(s)`.
    pub fn dphi(&self, s: f64) -> Result<f64> {
        self.interp(s, 1)
    }

    fn interp(&self, s: f64, k: usize) -> Result<f64> {
        if !self.converged || self.samples.len() < 2 {
            return Err(Error::InvalidInput("orbit has no converged samples".into()));
        }
        let t = s.rem_euclid(self.period);
        let ds = self.period / (self.samples.len() - 1) as f64;
        let i = ((t / ds).floor() as usize).min(self.samples.len() - 2);
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        let th = (t - a[0]) / ds;
        let (h00, h10, h01, h11) = (
            2.0 * th.powi(3) - 3.0 * th * th + 1.0,
            th.powi(3) - 2.0 * th * th + th,
            -2.0 * th.powi(3) + 3.0 * th * th,
            th.powi(3) - th * th,
        );
        Ok(h00 * a[1 + k] + h10 * ds * a[2 + k] + h01 * b[1 + k] + h11 * ds * b[2 + k])
    }

    /// The reflected orbit `(-phi, -phi', -phi'')`.
    pub fn reflected(&self) -> Self {
        let mut out = self.clone();
        for s in &mut out.samples {
            s[1] = -s[1];
            s[2] = -s[2];
            s[3] = -s[3];
        }
        out
    }

    /// One-step flow defect of the samples, relative to the state scale.
    pub fn residual(&self) -> f64 {
        orbit_residual(&self.samples, self.n, self.method_meta.zero_reg)
    }

    /// Writes `s,phi,dphi,ddphi`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "s,phi,dphi,ddphi")?;
        for s in &self.samples {
            writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", s[0], s[1], s[2], s[3])?;
        }
        Ok(())
    }
}

/// Max over consecutive samples of the defect between the sampled state and the
/// flow of the previous sample over one sample spacing, relative to the largest
/// sampled component.
fn orbit_residual(samples: &[[f64; 4]], n: f64, zero_reg: f64) -> f64 {
    if samples.len() < 2 {
        return f64::INFINITY;
    }
    let scale = samples
        .iter()
        .flat_map(|s| s[1..].iter().map(|v| v.abs()))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let opts = OrbitOptions {
        rtol: 1e-13,
        atol_rel: 1e-15,
        ..OrbitOptions::default()
    };
    let mut worst = 0.0f64;
    for w in samples.windows(2) {
        let Ok(mut ig) = integrator(n, zero_reg, scale, [w[0][1], w[0][2], w[0][3]], &opts) else {
            return f64::INFINITY;
        };
        let Ok(y) = ig.advance_to(w[1][0] - w[0][0]) else {
            return f64::INFINITY;
        };
        for k in 0..3 {
            worst = worst.max((y[k] - w[1][1 + k]).abs());
        }
    }
    worst / scale
}

fn initial_scale(n: f64) -> f64 {
    let c = coefficients(n);
    (1.0 + c.iter().map(|v| v.abs()).sum::<f64>()).powf(-1.0 / n)
}

struct Crossing {
    s: f64,
    state: State,
}

/// Upward crossings of `phi = 0` within one dense step.
fn section_crossing(d: &DenseStep<3>) -> Option<Crossing> {
    let (a, b) = (d.start()[0], d.end()[0]);
    if !(a < 0.0 && b >= 0.0) {
        return None;
    }
    let (mut lo, mut hi) = (d.t0, d.t1);
    let (mut flo, mut fhi) = (a, b);
    // Illinois regula falsi on the dense interpolant.
    let mut side = 0;
    for _ in 0..200 {
        let m = hi - fhi * (hi - lo) / (fhi - flo);
        let fm = d.eval(m)[0];
        if fm == 0.0 || (hi - lo) < 1e-15 * hi.abs().max(1.0) {
            lo = m;
            hi = m;
            break;
        }
        if fm < 0.0 {
            lo = m;
            flo = fm;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = m;
            fhi = fm;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    let s = 0.5 * (lo + hi);
    let mut state = d.eval(s);
    state[0] = 0.0;
    Some(Crossing { s, state })
}

fn integrator(
    n: f64,
    zero_reg: f64,
    scale: f64,
    y0: State,
    opts: &OrbitOptions,
) -> Result<Dopri5<impl FnMut(f64, &State) -> Result<State>, 3>> {
    let c = coefficients(n);
    let f = move |_s: f64, y: &State| {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("interface ODE state".into()));
        }
        Ok(rhs_unchecked(*y, c, n, zero_reg))
    };
    Dopri5::new(
        f,
        0.0,
        y0,
        Dopri5Options {
            rtol: opts.rtol,
            atol: opts.atol_rel * scale,
            h_init: 1e-3,
            h_max: 0.05,
            max_steps: opts.max_steps,
        },
    )
}

fn rel_change(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = a.iter().chain(b).map(|x| x.abs()).fold(0.0, f64::max);
    num / den.max(f64::MIN_POSITIVE)
}

enum Search {
    Found {
        start: State,
        period: f64,
        returns: usize,
        change: f64,
        steps: usize,
    },
    Failed {
        returns: usize,
        steps: usize,
        outcome: String,
    },
}

/// Follows the flow from `y0` until consecutive section returns agree.
fn attract(n: f64, zero_reg: f64, scale: f64, y0: State, opts: &OrbitOptions) -> Result<Search> {
    let mut ig = integrator(n, zero_reg, scale, y0, opts)?;
    let mut prev: Option<(f64, State)> = None;
    let mut prev_key: Option<[f64; 3]> = None;
    let mut returns = 0;
    let mut s_last_cross = 0.0;
    let divergence = 1e8 * scale.max(1.0);
    let equilibria = equilibria(n)?;
    while ig.t() < opts.max_s {
        let d = match ig.step() {
            Ok(d) => d,
            Err(Error::BudgetExceeded(m)) => {
                return Ok(Search::Failed {
                    returns,
                    steps: ig.steps(),
                    outcome: m,
                })
            }
            Err(e @ (Error::NonFinite(_) | Error::StepCollapse { .. })) => {
                return Ok(Search::Failed {
                    returns,
                    steps: ig.steps(),
                    outcome: format!("integration failed: {e}"),
                })
            }
            Err(e) => return Err(e),
        };
        let y = ig.y();
        if y.iter().any(|v| v.abs() > divergence) {
            return Ok(Search::Failed {
                returns,
                steps: ig.steps(),
                outcome: format!("trajectory diverged at s = {:.3}", ig.t()),
            });
        }
        if let Some(c) = section_crossing(&d) {
            returns += 1;
            s_last_cross = c.s;
            if let Some((s_prev, _)) = prev {
                let period = c.s - s_prev;
                let key = [c.state[1], c.state[2], period];
                if let Some(pk) = prev_key {
                    let change = rel_change(&pk, &key);
                    if change < opts.return_tol {
                        return Ok(Search::Found {
                            start: c.state,
                            period,
                            returns,
                            change,
                            steps: ig.steps(),
                        });
                    }
                }
                prev_key = Some(key);
            }
            prev = Some((c.s, c.state));
            if returns >= opts.max_returns {
                return Ok(Search::Failed {
                    returns,
                    steps: ig.steps(),
                    outcome: "section returns did not settle".into(),
                });
            }
        } else if ig.t() - s_last_cross > 200.0 {
            let settled = equilibria
                .iter()
                .any(|&e| (y[0] - e).abs() < 1e-6 * e.abs() && y[1].abs() + y[2].abs() < 1e-6 * e.abs());
            return Ok(Search::Failed {
                returns,
                steps: ig.steps(),
                outcome: if settled {
                    "converged to a constant equilibrium".into()
                } else {
                    "no section crossing".into()
                },
            });
        }
    }
    Ok(Search::Failed {
        returns,
        steps: ig.steps(),
        outcome: format!("no periodic orbit within s <= {}", opts.max_s),
    })
}

/// Integrates one period from `start` and samples it uniformly.
fn sample_period(
    n: f64,
    zero_reg: f64,
    scale: f64,
    start: State,
    period: f64,
    opts: &OrbitOptions,
) -> Result<(Vec<[f64; 4]>, State, usize)> {
    let mut ig = integrator(n, zero_reg, scale, start, opts)?;
    let m = opts.samples.max(8);
    let ds = period / m as f64;
    let mut samples = Vec::with_capacity(m + 1);
    samples.push([0.0, start[0], start[1], start[2]]);
    for k in 1..=m {
        let s = if k == m { period } else { k as f64 * ds };
        let y = ig.advance_to(s)?;
        samples.push([s, y[0], y[1], y[2]]);
    }
    Ok((samples, ig.y(), ig.steps()))
}

fn finish(
    n: f64,
    method: OrbitMethod,
    zero_reg: f64,
    scale: f64,
    start: State,
    period: f64,
    returns: usize,
    change: f64,
    steps: usize,
    opts: &OrbitOptions,
) -> Result<OrbitResult> {
    let (samples, end, more) = sample_period(n, zero_reg, scale, start, period, opts)?;
    let closure = rel_change(&start, &end);
    let amplitude = samples.iter().map(|s| s[1].abs()).fold(0.0, f64::max);
    let sign_change = samples.iter().any(|s| s[1] > 0.0) && samples.iter().any(|s| s[1] < 0.0);
    let ode_residual = orbit_residual(&samples, n, zero_reg);
    let converged = closure <= 1e-6 && sign_change;
    Ok(OrbitResult {
        n,
        mu: mu(n),
        period,
        samples,
        amplitude,
        converged,
        method_meta: OrbitMeta {
            method,
            zero_reg,
            returns,
            integration_steps: steps + more,
            last_change: change,
            ode_residual,
            closure_error: closure,
            outcome: if converged {
                "periodic orbit".into()
            } else {
                "orbit failed closure or sign check".into()
            },
        },
    })
}

/// Locates the periodic solution by following the attracting flow, optionally
/// refined by shooting. Never errors on non-convergence: check `converged`.
pub fn find_periodic_orbit(n: f64, method: OrbitMethod) -> Result<OrbitResult> {
    find_periodic_orbit_with(n, method, &OrbitOptions::default())
}

pub fn find_periodic_orbit_with(n: f64, method: OrbitMethod, opts: &OrbitOptions) -> Result<OrbitResult> {
    check_n(n)?;
    let attractor = attractor_orbit(n, opts)?;
    match method {
        OrbitMethod::ForwardAttractor => Ok(attractor),
        OrbitMethod::Shooting if !attractor.converged => Ok(OrbitResult {
            method_meta: OrbitMeta {
                method: OrbitMethod::Shooting,
                ..attractor.method_meta
            },
            ..attractor
        }),
        OrbitMethod::Shooting => {
            let s = &attractor.samples[0];
            // Perturbed guess so shooting is an independent solve.
            let guess = [s[2] * 1.01, s[3] * 0.99, attractor.period * 1.005];
            shoot(n, attractor.method_meta.zero_reg, attractor.amplitude, guess, opts)
        }
    }
}

fn attractor_orbit(n: f64, opts: &OrbitOptions) -> Result<OrbitResult> {
    let method = OrbitMethod::ForwardAttractor;
    let s0 = initial_scale(n);
    let reg_for = |amp: f64| if n >= 1.0 { opts.zero_reg_rel * amp } else { 0.0 };
    let mut zero_reg = reg_for(s0);
    let first = attract(n, zero_reg, s0, [s0, 0.0, 0.0], opts)?;
    let (start, _period, mut returns, mut steps) = match first {
        Search::Found {
            start,
            period,
            returns,
            steps,
            ..
        } => (start, period, returns, steps),
        Search::Failed {
            returns,
            steps,
            outcome,
        } => return Ok(OrbitResult::failed(n, method, zero_reg, returns, steps, outcome)),
    };
    // Re-converge with the regularization tied to the orbit amplitude.
    let amp = start[1].abs().max(start[2].abs()).max(f64::MIN_POSITIVE);
    let (samples, _, _) = sample_period(n, zero_reg, amp, start, _period, opts)?;
    let amp = samples.iter().map(|s| s[1].abs()).fold(0.0, f64::max);
    zero_reg = reg_for(amp);
    match attract(n, zero_reg, amp, start, opts)? {
        Search::Found {
            start,
            period,
            returns: r,
            change,
            steps: st,
        } => {
            returns += r;
            steps += st;
            finish(n, method, zero_reg, amp, start, period, returns, change, steps, opts)
        }
        Search::Failed {
            returns: r,
            steps: st,
            outcome,
        } => Ok(OrbitResult::failed(
            n,
            method,
            zero_reg,
            returns + r,
            steps + st,
            outcome,
        )),
    }
}

/// Newton on `(phi'(0), phi''(0), T)` with `phi(0) = 0`.
fn shoot(n: f64, zero_reg: f64, amp: f64, guess: [f64; 3], opts: &OrbitOptions) -> Result<OrbitResult> {
    let method = OrbitMethod::Shooting;
    let flow = |p: &[f64; 3]| -> Result<([f64; 3], usize)> {
        if !(p[2] > 0.0) {
            return Err(Error::InvalidInput("non-positive period".into()));
        }
        let mut ig = integrator(n, zero_reg, amp, [0.0, p[0], p[1]], opts)?;
        let y = ig.advance_to(p[2])?;
        Ok(([y[0], y[1] - p[0], y[2] - p[1]], ig.steps()))
    };
    let mut p = guess;
    let mut steps = 0;
    let scale = |p: &[f64; 3]| p[0].abs().max(p[1].abs()).max(f64::MIN_POSITIVE);
    let mut last = f64::INFINITY;
    for it in 0..40 {
        let (g, st) = match flow(&p) {
            Ok(v) => v,
            Err(e) => {
                return Ok(OrbitResult::failed(
                    n,
                    method,
                    zero_reg,
                    it,
                    steps,
                    format!("shooting: {e}"),
                ))
            }
        };
        steps += st;
        last = g.iter().map(|v| v.abs()).fold(0.0, f64::max) / scale(&p);
        if last < 1e-10 {
            return finish(n, method, zero_reg, amp, [0.0, p[0], p[1]], p[2], it, last, steps, opts);
        }
        let mut jac = [[0.0; 3]; 3];
        for j in 0..3 {
            let h = 1e-7 * p[j].abs().max(if j == 2 { 1.0 } else { scale(&p) });
            let mut q = p;
            q[j] += h;
            let (gp, st) = match flow(&q) {
                Ok(v) => v,
                Err(e) => {
                    return Ok(OrbitResult::failed(
                        n,
                        method,
                        zero_reg,
                        it,
                        steps,
                        format!("shooting: {e}"),
                    ))
                }
            };
            steps += st;
            for i in 0..3 {
                jac[i][j] = (gp[i] - g[i]) / h;
            }
        }
        let Some(dp) = solve3(jac, [-g[0], -g[1], -g[2]]) else {
            return Ok(OrbitResult::failed(
                n,
                method,
                zero_reg,
                it,
                steps,
                "singular shooting Jacobian".into(),
            ));
        };
        for j in 0..3 {
            p[j] += dp[j];
        }
    }
    Ok(OrbitResult::failed(
        n,
        method,
        zero_reg,
        40,
        steps,
        format!("shooting did not converge (residual {last:.3e})"),
    ))
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let mut x = [0.0; 3];
    for (j, xj) in x.iter_mut().enumerate() {
        let mut m = a;
        for i in 0..3 {
            m[i][j] = b[i];
        }
        *xj = det(&m) / d;
    }
    Some(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub n: f64,
    pub converged: bool,
    pub period: f64,
    pub amplitude: f64,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodFit {
    /// Fitted divergence point of `period = A - B ln(n_h - n)`.
    pub n_h: f64,
    pub a: f64,
    pub b: f64,
    pub r_squared: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    /// Fit value when available, otherwise the bracket midpoint.
    pub n_h_estimate: f64,
    /// `[last converged n, first failed n]` above the converged run.
    pub bracket: Option<[f64; 2]>,
    pub fit: Option<PeriodFit>,
    pub period_table: Vec<ScanRow>,
}

/// Scans orbit existence over `steps` equispaced exponents in `[lo, hi]`.
pub fn heteroclinic_scan(lo: f64, hi: f64, steps: usize) -> Result<ScanResult> {
    heteroclinic_scan_with(lo, hi, steps, &OrbitOptions::default())
}

pub fn heteroclinic_scan_with(lo: f64, hi: f64, steps: usize, opts: &OrbitOptions) -> Result<ScanResult> {
    if !(1.5 < lo && lo < hi && hi < 2.0) || steps < 8 {
        return Err(Error::InvalidInput(format!(
            "scan range [{lo}, {hi}] must lie in (1.5, 2.0) with at least 8 steps"
        )));
    }
    let ns = linspace(lo, hi, steps);
    let period_table: Vec<ScanRow> = ns
        .par_iter()
        .map(|&n| {
            find_periodic_orbit_with(n, OrbitMethod::ForwardAttractor, opts).map(|o| ScanRow {
                n,
                converged: o.converged,
                period: o.period,
                amplitude: o.amplitude,
                outcome: o.method_meta.outcome,
            })
        })
        .collect::<Result<_>>()?;
    let first_fail = period_table.iter().position(|r| !r.converged);
    let bracket = match first_fail {
        Some(k) if k > 0 => Some([period_table[k - 1].n, period_table[k].n]),
        _ => None,
    };
    let converged: Vec<&ScanRow> = period_table[..first_fail.unwrap_or(period_table.len())]
        .iter()
        .collect();
    let fit = if converged.len() >= 4 {
        let upper = bracket.map_or(hi + (hi - lo), |b| b[1]);
        fit_period_divergence(&converged, upper)
    } else {
        None
    };
    let n_h_estimate = match (&fit, bracket) {
        (Some(f), _) => f.n_h,
        (None, Some(b)) => 0.5 * (b[0] + b[1]),
        (None, None) => f64::NAN,
    };
    Ok(ScanResult {
        n_h_estimate,
        bracket,
        fit,
        period_table,
    })
}

fn fit_at(rows: &[&ScanRow], nh: f64) -> Option<crate::fit::LinearFit> {
    let x: Vec<f64> = rows.iter().map(|r| -(nh - r.n).ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.period).collect();
    linear_fit(&x, &y)
}

/// Chooses `n_h` in `(last converged n, upper]` maximizing the `R^2` of the
/// linear fit of period against `-ln(n_h - n)`.
fn fit_period_divergence(rows: &[&ScanRow], upper: f64) -> Option<PeriodFit> {
    let last = rows.last()?.n;
    let span = upper - last;
    let score = |t: f64| fit_at(rows, last + span * t).map_or(f64::NEG_INFINITY, |f| f.r_squared);
    // Coarse log-spaced search followed by golden-section refinement.
    let grid: Vec<f64> = (0..=200).map(|k| 10f64.powf(-6.0 + 6.0 * k as f64 / 200.0)).collect();
    let (mut best, _) = grid
        .iter()
        .map(|&t| (t, score(t)))
        .fold((1.0, f64::NEG_INFINITY), |acc, v| if v.1 > acc.1 { v } else { acc });
    let (mut a, mut b) = (best / 1.04, (best * 1.04).min(1.0));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if score(c) > score(d) {
            b = d;
        } else {
            a = c;
        }
    }
    best = 0.5 * (a + b);
    let n_h = last + span * best;
    let f = fit_at(rows, n_h)?;
    Some(PeriodFit {
        n_h,
        a: f.intercept,
        b: f.slope,
        r_squared: f.r_squared,
        points: rows.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficients_at_unit_exponent() {
        assert_eq!(coefficients(1.0), [6.0, 11.0, 6.0]);
    }

    #[test]
    fn singular_term_value() {
        let r = eqlc_rhs([0.5, 0.0, 0.0], 2.0, 0.0).unwrap();
        let c = coefficients(2.0);
        assert!((r[2] + c[2] * 0.5 + 2.0).abs() < 1e-15);
        assert!(eqlc_rhs([0.0, 1.0, 0.0], 1.0, 0.0).is_err());
        assert!(eqlc_rhs([0.0, 1.0, 0.0], 1.0, 1e-8).is_ok());
    }

    #[test]
    fn continuity_through_zero_for_small_n() {
        let mut prev = f64::INFINITY;
        for k in 1..12 {
            let phi = 10f64.powi(-k);
            let v = eqlc_rhs([phi, 0.0, 0.0], 0.5, 0.0).unwrap()[2].abs();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-5);
        assert_eq!(eqlc_rhs([0.0, 0.0, 0.0], 0.5, 0.0).unwrap()[2], 0.0);
    }

    #[test]
    fn equilibria_cases() {
        assert!(equilibria(1.0).unwrap().is_empty());
        let e = equilibria(2.0).unwrap();
        assert!((e[1] - 0.375f64.powf(-0.5)).abs() < 1e-12);
        assert_eq!(e[0], -e[1]);
        for n in [1.6, 1.75, 2.0, 2.5] {
            for p in equilibria(n).unwrap() {
                let r = eqlc_rhs([p, 0.0, 0.0], n, 0.0).unwrap();
                assert!(r.iter().all(|v| v.abs() < 1e-12), "{n} {r:?}");
            }
        }
        let printed = equilibrium_positive_exponent(2.0).unwrap();
        assert!((printed - 0.375f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn critical_constants() {
        let ([mm, mp], [nm, np]) = critical_mu();
        let s3 = 3f64.sqrt();
        assert!((mp - (3.0 + s3) / 3.0).abs() < 1e-14);
        assert!((mm - (3.0 - s3) / 3.0).abs() < 1e-14);
        assert!((np - 9.0 / (3.0 + s3)).abs() < 1e-14);
        assert!((nm - 9.0 / (3.0 - s3)).abs() < 1e-13);
    }

    #[test]
    fn orbit_at_unit_exponent() {
        let o = find_periodic_orbit(1.0, OrbitMethod::ForwardAttractor).unwrap();
        assert!(o.converged, "{:?}", o.method_meta);
        assert!((o.period - 1.92485).abs() < 1e-3, "{}", o.period);
        assert!(o.method_meta.closure_error < 1e-6);
        assert!(o.residual() < 1e-6, "{}", o.residual());
        let r = o.reflected();
        assert!(r.residual() < 1e-6);
    }

    #[test]
    fn shooting_agrees_with_attractor() {
        let a = find_periodic_orbit(1.0, OrbitMethod::ForwardAttractor).unwrap();
        let s = find_periodic_orbit(1.0, OrbitMethod::Shooting).unwrap();
        assert!(s.converged, "{:?}", s.method_meta);
        assert!((a.period - s.period).abs() < 1e-5 * a.period);
        assert!((a.amplitude - s.amplitude).abs() < 1e-4 * a.amplitude);
    }

    #[test]
    fn no_orbit_beyond_bifurcation() {
        let o = find_periodic_orbit(1.9, OrbitMethod::ForwardAttractor).unwrap();
        assert!(!o.converged);
        assert!(o.phi(0.0).is_err());
    }

    #[test]
    fn scan_rejects_bad_ranges() {
        assert!(heteroclinic_scan(1.4, 1.9, 12).is_err());
        assert!(heteroclinic_scan(1.6, 1.9, 4).is_err());
    }
}
