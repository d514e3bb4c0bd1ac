//! Mobility families, the perturbation `F_{n,eps}` and regularization schedules
//! `eps(n)` coupling the two limits `eps -> 0`, `n -> 0`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Mobility, ModelParams};

/// Exponent ladder on which schedules are validated.
pub const SCHEDULE_LADDER: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

/// Mobility coefficient `phi(u)` for the given family.
///
/// The degenerate family is evaluated as `(u^2)^(n/2)` with no floor, so it is
/// zero at `u = 0`.
pub fn mobility(u: f64, params: &ModelParams) -> Result<f64> {
    if u.is_nan() {
        return Err(Error::NonFinite("mobility argument".into()));
    }
    Ok(mobility_value(u, params))
}

#[inline]
pub(crate) fn mobility_value(u: f64, p: &ModelParams) -> f64 {
    let half_n = 0.5 * p.n;
    match p.mobility {
        Mobility::Unit => 1.0,
        Mobility::Degenerate => (u * u).powf(half_n),
        Mobility::Simple => (p.epsilon * p.epsilon + u * u).powf(half_n),
        Mobility::Homotopy => p.epsilon.powf(p.n) + (1.0 - p.epsilon) * (p.epsilon * p.epsilon + u * u).powf(half_n),
    }
}

/// `d phi / du`. For the degenerate family the derivative at `u = 0` is taken
/// as zero (it is infinite for `n < 1`).
#[inline]
pub(crate) fn mobility_derivative(u: f64, p: &ModelParams) -> f64 {
    let half_n = 0.5 * p.n;
    let base = |e2: f64| {
        let s = e2 + u * u;
        if s == 0.0 {
            0.0
        } else {
            p.n * u * s.powf(half_n - 1.0)
        }
    };
    match p.mobility {
        Mobility::Unit => 0.0,
        Mobility::Degenerate => base(0.0),
        Mobility::Simple => base(p.epsilon * p.epsilon),
        Mobility::Homotopy => (1.0 - p.epsilon) * base(p.epsilon * p.epsilon),
    }
}

/// `F_{n,eps}(u) = 1 - (eps^2 + u^2)^(n/2)`.
pub fn perturbation_f(u: f64, eps: f64, n: f64) -> Result<f64> {
    if !(u.is_finite() && eps.is_finite() && n.is_finite()) {
        return Err(Error::NonFinite("perturbation_f argument".into()));
    }
    Ok(1.0 - (eps * eps + u * u).powf(0.5 * n))
}

/// How `eps(n)` is chosen for each exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleRule {
    /// `eps = exp(-1/sqrt(n))`, so `n |ln eps| = sqrt(n)`.
    ExpInvSqrt,
    /// `eps = n^p`.
    Power(f64),
    /// Piecewise log-log interpolation of `(n, eps)` pairs.
    CustomTable(Vec<(f64, f64)>),
}

/// A validated regularization schedule with `n |ln eps(n)| -> 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    rule: ScheduleRule,
    description: String,
}

impl Schedule {
    pub fn new(rule: ScheduleRule) -> Result<Self> {
        let description = match &rule {
            ScheduleRule::ExpInvSqrt => "eps(n) = exp(-1/sqrt(n))".to_string(),
            ScheduleRule::Power(p) => format!("eps(n) = n^{p}"),
            ScheduleRule::CustomTable(rows) => format!("tabulated eps(n), {} rows", rows.len()),
        };
        let s = Self { rule, description };
        s.validate()?;
        Ok(s)
    }

    pub fn exp_inv_sqrt() -> Self {
        Self::new(ScheduleRule::ExpInvSqrt).expect("default schedule is admissible")
    }

    /// Parses `exp_inv_sqrt`, `power:<p>` or `table:<path>` (a file of
    /// `n,eps` rows; `#` comments and a non-numeric header are skipped).
    pub fn from_key(key: &str) -> Result<Self> {
        if key == "exp_inv_sqrt" {
            return Self::new(ScheduleRule::ExpInvSqrt);
        }
        if let Some(p) = key.strip_prefix("power:") {
            let p: f64 = p
                .trim()
                .parse()
                .map_err(|_| Error::InvalidSchedule(format!("bad power in {key:?}")))?;
            return Self::new(ScheduleRule::Power(p));
        }
        if let Some(path) = key.strip_prefix("table:") {
            return Self::new(ScheduleRule::CustomTable(read_table(Path::new(path))?));
        }
        Err(Error::InvalidSchedule(format!("unknown schedule key {key:?}")))
    }

    pub fn rule(&self) -> &ScheduleRule {
        &self.rule
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    fn eval(&self, n: f64) -> Result<f64> {
        match &self.rule {
            ScheduleRule::ExpInvSqrt => Ok((-1.0 / n.sqrt()).exp()),
            ScheduleRule::Power(p) => Ok(n.powf(*p)),
            ScheduleRule::CustomTable(rows) => interpolate_table(rows, n),
        }
    }

    fn validate(&self) -> Result<()> {
        if let ScheduleRule::Power(p) = self.rule {
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::InvalidSchedule(format!("power p = {p} must be > 0")));
            }
        }
        if let ScheduleRule::CustomTable(rows) = &self.rule {
            if rows.len() < 2 {
                return Err(Error::InvalidSchedule("table needs at least two rows".into()));
            }
            if rows.iter().any(|&(n, e)| !(n > 0.0 && n <= 1.0 && e > 0.0 && e <= 1.0)) {
                return Err(Error::InvalidSchedule("table entries must lie in (0, 1]".into()));
            }
        }
        let mut prev = f64::INFINITY;
        for &n in &SCHEDULE_LADDER {
            let eps = self.eval(n)?;
            if !(eps > 0.0 && eps <= 1.0) {
                return Err(Error::InvalidSchedule(format!("eps({n}) = {eps} outside (0, 1]")));
            }
            let g = n * eps.ln().abs();
            if !(g < prev) {
                return Err(Error::InvalidSchedule(format!(
                    "n |ln eps(n)| does not decrease on the ladder: {g} at n = {n} (previous {prev})"
                )));
            }
            prev = g;
        }
        Ok(())
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.description)
    }
}

fn read_table(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidSchedule(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split(',').map(str::trim);
        let parsed = (it.next().map(str::parse::<f64>), it.next().map(str::parse::<f64>));
        match parsed {
            (Some(Ok(n)), Some(Ok(e))) => rows.push((n, e)),
            _ if lineno == 0 => continue,
            _ => {
                return Err(Error::InvalidSchedule(format!(
                    "{}:{}: expected `n,eps`",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    Ok(rows)
}

fn interpolate_table(rows: &[(f64, f64)], n: f64) -> Result<f64> {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (lo, hi) = (sorted[0].0, sorted[sorted.len() - 1].0);
    if n < lo * (1.0 - 1e-12) || n > hi * (1.0 + 1e-12) {
        return Err(Error::InvalidSchedule(format!(
            "n = {n} outside table range [{lo}, {hi}]"
        )));
    }
    let k = sorted.windows(2).position(|w| n <= w[1].0).unwrap_or(sorted.len() - 2);
    let ((n0, e0), (n1, e1)) = (sorted[k], sorted[k + 1]);
    let s = (n.ln() - n0.ln()) / (n1.ln() - n0.ln());
    Ok((e0.ln() + s * (e1.ln() - e0.ln())).exp())
}

/// `eps(n)` for `n in (0, 1]`.
pub fn epsilon_of_n(schedule: &Schedule, n: f64) -> Result<f64> {
    if !(n > 0.0 && n <= 1.0) {
        return Err(Error::InvalidInput(format!("n = {n} outside (0, 1]")));
    }
    schedule.eval(n)
}

/// Source of `eps` for [`log_expansion_check`].
#[derive(Debug, Clone, Copy)]
pub enum EpsilonSource<'a> {
    Fixed(f64),
    Scheduled(&'a Schedule),
}

impl EpsilonSource<'_> {
    pub fn epsilon(&self, n: f64) -> Result<f64> {
        match self {
            EpsilonSource::Fixed(e) => Ok(*e),
            EpsilonSource::Scheduled(s) => epsilon_of_n(s, n),
        }
    }
}

/// One row of [`log_expansion_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogExpansionRow {
    pub n: f64,
    pub epsilon: f64,
    /// `F_{n,eps}(u) / [-(n/2) ln(eps^2 + u^2)]`; `None` when the logarithm vanishes.
    pub ratio: Option<f64>,
    /// Set when `eps^2 + u^2 = 1`, where both sides are exactly zero.
    pub exact_match: bool,
}

/// Ratio of `F_{n,eps}(u)` to its first-order logarithmic expansion for each `n`.
pub fn log_expansion_check(u: f64, eps: EpsilonSource<'_>, n_sequence: &[f64]) -> Result<Vec<LogExpansionRow>> {
    if n_sequence.iter().any(|&n| !(n > 0.0)) {
        return Err(Error::InvalidInput("exponents must be positive".into()));
    }
    if n_sequence.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("exponent sequence must decrease".into()));
    }
    n_sequence
        .iter()
        .map(|&n| {
            let epsilon = eps.epsilon(n)?;
            let s = epsilon * epsilon + u * u;
            let log_term = -0.5 * n * s.ln();
            if log_term == 0.0 {
                return Ok(LogExpansionRow {
                    n,
                    epsilon,
                    ratio: None,
                    exact_match: true,
                });
            }
            // 1 - s^(n/2) = -expm1((n/2) ln s), accurate for small n.
            let f = -(0.5 * n * s.ln()).exp_m1();
            Ok(LogExpansionRow {
                n,
                epsilon,
                ratio: Some(f / log_term),
                exact_match: false,
            })
        })
        .collect()
}
