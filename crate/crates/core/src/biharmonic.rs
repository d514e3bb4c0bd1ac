//! The bi-harmonic endpoint `u_t = -u_xxxx`: the rescaled kernel `F(y)` of the
//! fundamental solution `b(x,t) = t^(-N/4) F(x t^(-1/4))`, tabulated from its
//! Fourier representation, and the convolution solution `b(t) * u0`.

use std::f64::consts::{LN_10, PI};
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::grid::{Field, Grid1D};
use crate::quadrature::composite_gl;

/// Frequency cutoff where `exp(-xi^4) < 1e-18`.
pub fn xi_max() -> f64 {
    (18.0 * LN_10).powf(0.25)
}

/// Window of `|y|` used for the envelope fit stored with each table.
pub const ENVELOPE_WINDOW: (f64, f64) = (2.0, 8.0);

/// Highest derivative order tabulated for 1D kernels.
const MAX_ORDER: usize = 4;

/// Least-squares fit of `ln |F|` at local extrema against `|y|^(4/3)`:
/// `|F(y)| ~ prefactor * exp(-a |y|^(4/3))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub a: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub extrema: usize,
}

/// Tabulated kernel `F` on a `y` (1D) or `r` (radial) grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTable {
    pub dimension: usize,
    pub grid: Grid1D,
    pub values: Vec<f64>,
    /// `F', F'', F''', F''''` on the same nodes; empty for radial tables.
    pub derivatives: Vec<Vec<f64>>,
    /// Discrete `N`-volume integral of `F` over the table.
    pub normalization: f64,
    pub envelope: Option<EnvelopeFit>,
    pub quadrature_tol: f64,
    pub max_quadrature_error: f64,
}

/// Metadata written next to a kernel CSV.
#[derive(Debug, Clone, Serialize)]
pub struct KernelMeta {
    pub dimension: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub n_cells: usize,
    pub normalization: f64,
    pub envelope: Option<EnvelopeFit>,
    pub quadrature_tol: f64,
    pub max_quadrature_error: f64,
    pub xi_max: f64,
}

/// `(1/pi) int_0^xi_max xi^k exp(-xi^4) cos(xi y + k pi/2) d xi`, i.e. the
/// `k`-th derivative of the 1D kernel, with an error estimate from panel
/// doubling plus the truncated tail.
fn fourier_derivative(y: f64, order: usize, tol: f64) -> Result<(f64, f64)> {
    let xm = xi_max();
    let integrand = |xi: f64| {
        let (s, c) = (xi * y).sin_cos();
        let trig = match order % 4 {
            0 => c,
            1 => -s,
            2 => -c,
            _ => s,
        };
        xi.powi(order as i32) * (-xi.powi(4)).exp() * trig
    };
    let tail = xm.powi(order as i32 - 3) * (-xm.powi(4)).exp() / (4.0 * PI);
    radial_panels(integrand, y, tol, tail).map(|(v, e)| (v / PI, e))
}

fn radial_panels(f: impl Fn(f64) -> f64, y: f64, tol: f64, tail: f64) -> Result<(f64, f64)> {
    let xm = xi_max();
    let mut panels = 4 + (xm * y.abs() / PI).ceil() as usize;
    let mut coarse = composite_gl(&f, 0.0, xm, panels);
    loop {
        let fine = composite_gl(&f, 0.0, xm, 2 * panels);
        let err = (fine - coarse).abs() + tail;
        if err <= tol {
            return Ok((fine, err));
        }
        if panels >= 1 << 14 {
            return Err(Error::QuadratureNonConvergence { y, achieved: err, tol });
        }
        panels *= 2;
        coarse = fine;
    }
}

/// Bessel `J0` by the midpoint rule on its periodic integral representation.
pub(crate) fn bessel_j0(z: f64) -> f64 {
    let m = 16 + z.abs().ceil() as usize;
    let h = PI / m as f64;
    let s: f64 = (0..m).map(|j| (z * ((j as f64 + 0.5) * h).sin()).cos()).sum();
    s / m as f64
}

/// Builds the 1D kernel table on a grid symmetric about 0.
pub fn kernel_1d(y_grid: Grid1D, quadrature_tol: f64) -> Result<KernelTable> {
    if !y_grid.is_symmetric() {
        return Err(Error::InvalidInput("kernel grid must be symmetric about 0".into()));
    }
    if !(quadrature_tol > 0.0) {
        return Err(Error::InvalidInput("quadrature_tol must be positive".into()));
    }
    let nodes: Vec<f64> = y_grid.nodes().collect();
    let columns: Vec<Vec<(f64, f64)>> = (0..=MAX_ORDER)
        .map(|order| {
            nodes
                .par_iter()
                .map(|&y| fourier_derivative(y, order, quadrature_tol))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let max_err = columns.iter().flatten().fold(0.0f64, |m, &(_, e)| m.max(e));
    let mut columns: Vec<Vec<f64>> = columns
        .into_iter()
        .map(|c| c.into_iter().map(|(v, _)| v).collect())
        .collect();
    // Exact even/odd symmetry of the cosine transform.
    let last = nodes.len() - 1;
    for (order, col) in columns.iter_mut().enumerate() {
        let parity = if order % 2 == 0 { 1.0 } else { -1.0 };
        for i in 0..nodes.len() / 2 {
            col[last - i] = parity * col[i];
        }
        if nodes.len() % 2 == 1 && order % 2 == 1 {
            col[nodes.len() / 2] = 0.0;
        }
    }
    let values = columns.remove(0);
    let normalization = y_grid.integrate(&values);
    let mut table = KernelTable {
        dimension: 1,
        grid: y_grid,
        values,
        derivatives: columns,
        normalization,
        envelope: None,
        quadrature_tol,
        max_quadrature_error: max_err,
    };
    table.envelope = table.envelope_fit(ENVELOPE_WINDOW.0, ENVELOPE_WINDOW.1);
    Ok(table)
}

/// Radial profile `F(|y|)` of the `N`-dimensional kernel on `r_grid` starting at 0.
pub fn kernel_radial(dimension: usize, r_grid: Grid1D, quadrature_tol: f64) -> Result<KernelTable> {
    if !(1..=3).contains(&dimension) {
        return Err(Error::InvalidInput(format!("dimension {dimension} not in 1..=3")));
    }
    if r_grid.x_min() != 0.0 {
        return Err(Error::InvalidInput("radial grid must start at r = 0".into()));
    }
    if !(quadrature_tol > 0.0) {
        return Err(Error::InvalidInput("quadrature_tol must be positive".into()));
    }
    let xm = xi_max();
    let nodes: Vec<f64> = r_grid.nodes().collect();
    let results: Vec<(f64, f64)> = nodes
        .par_iter()
        .map(|&r| -> Result<(f64, f64)> {
            match dimension {
                1 => fourier_derivative(r, 0, quadrature_tol),
                2 => {
                    let f = |k: f64| (-k.powi(4)).exp() * bessel_j0(k * r) * k;
                    let tail = (-xm.powi(4)).exp() / (4.0 * xm.powi(2));
                    radial_panels(f, r, quadrature_tol, tail).map(|(v, e)| (v / (2.0 * PI), e))
                }
                _ => {
                    let f = |k: f64| {
                        let z = k * r;
                        let sinc = if z.abs() < 1e-4 { 1.0 - z * z / 6.0 } else { z.sin() / z };
                        (-k.powi(4)).exp() * sinc * k * k
                    };
                    let tail = (-xm.powi(4)).exp() / (4.0 * xm);
                    radial_panels(f, r, quadrature_tol, tail).map(|(v, e)| (v / (2.0 * PI * PI), e))
                }
            }
        })
        .collect::<Result<_>>()?;
    let max_err = results.iter().fold(0.0f64, |m, &(_, e)| m.max(e));
    let values: Vec<f64> = results.into_iter().map(|(v, _)| v).collect();
    let normalization = radial_volume_integral(dimension, &r_grid, &values);
    let mut table = KernelTable {
        dimension,
        grid: r_grid,
        values,
        derivatives: Vec::new(),
        normalization,
        envelope: None,
        quadrature_tol,
        max_quadrature_error: max_err,
    };
    table.envelope = table.envelope_fit(ENVELOPE_WINDOW.0, ENVELOPE_WINDOW.1);
    Ok(table)
}

/// `|S^{N-1}| int_0^R F(r) r^(N-1) dr` by the trapezoid rule with the leading
/// Euler-Maclaurin endpoint correction at `r = 0` (nonzero only for `N = 2`).
fn radial_volume_integral(dimension: usize, grid: &Grid1D, values: &[f64]) -> f64 {
    let g: Vec<f64> = grid
        .nodes()
        .zip(values)
        .map(|(r, f)| f * r.powi(dimension as i32 - 1))
        .collect();
    let mut integral = grid.integrate(&g);
    if dimension == 2 {
        let h = grid.spacing();
        integral += h * h / 12.0 * values[0];
    }
    let sphere = match dimension {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 4.0 * PI,
    };
    sphere * integral
}

impl KernelTable {
    pub fn y_nodes(&self) -> Vec<f64> {
        self.grid.nodes().collect()
    }

    pub fn mass_defect(&self) -> f64 {
        (self.normalization - 1.0).abs()
    }

    /// Column for derivative `order` (0 = `F`).
    pub fn column(&self, order: usize) -> Option<&[f64]> {
        match order {
            0 => Some(&self.values),
            k => self.derivatives.get(k - 1).map(Vec::as_slice),
        }
    }

    /// `F^(order)(y)` by cubic Hermite interpolation; zero outside the table.
    /// Requires a 1D table and `order <= 3`.
    pub fn eval(&self, y: f64, order: usize) -> f64 {
        debug_assert!(self.dimension == 1 && order < MAX_ORDER);
        let g = &self.grid;
        if y < g.x_min() || y > g.x_max() {
            return 0.0;
        }
        let f = &self.column(order).expect("1D table has derivative columns");
        let df = &self.derivatives[order];
        let h = g.spacing();
        let s = (y - g.x_min()) / h;
        let i = (s.floor() as usize).min(g.n_cells() - 1);
        let t = s - i as f64;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * f[i] + h10 * h * df[i] + h01 * f[i + 1] + h11 * h * df[i + 1]
    }

    /// Envelope fit over local extrema of `|F|` with `lo <= |y| <= hi`.
    /// `None` with fewer than two distinct extremal radii.
    pub fn envelope_fit(&self, lo: f64, hi: f64) -> Option<EnvelopeFit> {
        self.envelope_fit_power(lo, hi, 4.0 / 3.0)
    }

    /// As [`envelope_fit`](Self::envelope_fit) against `|y|^power`.
    pub fn envelope_fit_power(&self, lo: f64, hi: f64, power: f64) -> Option<EnvelopeFit> {
        let (xs, ys) = self.extrema_in(lo, hi);
        let mut radii: Vec<f64> = xs.iter().map(|x| x.abs()).collect();
        radii.sort_by(f64::total_cmp);
        radii.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        if radii.len() < 2 {
            return None;
        }
        let px: Vec<f64> = xs.iter().map(|x| x.abs().powf(power)).collect();
        let py: Vec<f64> = ys.iter().map(|v| v.abs().ln()).collect();
        let fit = linear_fit(&px, &py)?;
        Some(EnvelopeFit {
            a: -fit.slope,
            prefactor: fit.intercept.exp(),
            r_squared: fit.r_squared,
            extrema: xs.len(),
        })
    }

    /// Positions and values of interior local maxima of `|F|`, refined by a
    /// parabola through three nodes.
    fn extrema_in(&self, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
        let v = &self.values;
        let h = self.grid.spacing();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for i in 1..v.len() - 1 {
            let (a, b, c) = (v[i - 1].abs(), v[i].abs(), v[i + 1].abs());
            if b > a && b >= c && b > 0.0 {
                let denom = v[i - 1] - 2.0 * v[i] + v[i + 1];
                let off = if denom != 0.0 {
                    0.5 * (v[i - 1] - v[i + 1]) / denom
                } else {
                    0.0
                };
                let x = self.grid.x(i) + off * h;
                let val = v[i] - 0.25 * (v[i - 1] - v[i + 1]) * off;
                if (lo..=hi).contains(&x.abs()) {
                    xs.push(x);
                    ys.push(val);
                }
            }
        }
        (xs, ys)
    }

    /// Sign changes of `F` on `|y| <= radius`.
    pub fn sign_changes_within(&self, radius: f64) -> usize {
        let pts: Vec<f64> = self
            .grid
            .nodes()
            .zip(&self.values)
            .filter(|(y, _)| y.abs() <= radius)
            .map(|(_, &f)| f)
            .filter(|f| *f != 0.0)
            .collect();
        pts.windows(2).filter(|w| w[0].signum() != w[1].signum()).count()
    }

    pub fn meta(&self) -> KernelMeta {
        KernelMeta {
            dimension: self.dimension,
            y_min: self.grid.x_min(),
            y_max: self.grid.x_max(),
            n_cells: self.grid.n_cells(),
            normalization: self.normalization,
            envelope: self.envelope,
            quadrature_tol: self.quadrature_tol,
            max_quadrature_error: self.max_quadrature_error,
            xi_max: xi_max(),
        }
    }

    /// `y,F` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "y,F")?;
        for (y, f) in self.grid.nodes().zip(&self.values) {
            writeln!(w, "{y:.16e},{f:.16e}")?;
        }
        Ok(())
    }
}

/// Default table: `|y| <= 40`, spacing 0.01, where `|F| < 1e-15` at the ends.
pub fn default_kernel() -> Result<KernelTable> {
    kernel_1d(Grid1D::new(-40.0, 40.0, 8000)?, 1e-13)
}

/// Max-norm over interior nodes of the centred third difference of `F` minus
/// `y F / 4`, i.e. the residual of the once-integrated profile equation.
pub fn kernel_residual(table: &KernelTable) -> Result<f64> {
    if table.dimension != 1 {
        return Err(Error::InvalidInput("kernel_residual needs a 1D table".into()));
    }
    if table.grid.n_cells() < 16 {
        return Err(Error::GridTooCoarse(format!(
            "{} cells; need at least 16",
            table.grid.n_cells()
        )));
    }
    let f = &table.values;
    let h = table.grid.spacing();
    let inv = 1.0 / (2.0 * h * h * h);
    let mut worst = 0.0f64;
    for i in 2..f.len() - 2 {
        let d3 = (f[i + 2] - 2.0 * f[i + 1] + 2.0 * f[i - 1] - f[i - 2]) * inv;
        worst = worst.max((d3 - 0.25 * table.grid.x(i) * f[i]).abs());
    }
    Ok(worst)
}

/// Diagnostics returned with a convolution solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvolutionReport {
    /// `|1 - sum_k b(k h, t) h|` over the offsets representable on the grid.
    pub kernel_mass_defect: f64,
    /// `max(|u0(x_min)|, |u0(x_max)|)`; values above `1e-12` truncate the data.
    pub boundary_magnitude: f64,
}

pub const KERNEL_MASS_TOL: f64 = 1e-6;
pub const BOUNDARY_DECAY_TOL: f64 = 1e-12;

/// `d^order/dx^order (b(t) * u)` on the grid of `values`, by a direct
/// trapezoid-weighted sum with kernel samples interpolated from `table`.
pub fn kernel_convolve(
    grid: &Grid1D,
    values: &[f64],
    t: f64,
    table: &KernelTable,
    order: usize,
) -> Result<(Vec<f64>, f64)> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!("time t = {t} must be positive")));
    }
    if table.dimension != 1 || table.derivatives.len() < MAX_ORDER {
        return Err(Error::InvalidInput("convolution needs a 1D kernel table".into()));
    }
    if order >= MAX_ORDER {
        return Err(Error::InvalidInput(format!("derivative order {order} > 3")));
    }
    let m = grid.len();
    let h = grid.spacing();
    let scale = t.powf(-0.25);
    let amp = scale.powi(order as i32 + 1);
    let kern: Vec<f64> = (0..m).map(|k| amp * table.eval(k as f64 * h * scale, order)).collect();
    let mass_defect = if order == 0 {
        let s: f64 = kern[1..].iter().sum::<f64>() * 2.0 + kern[0];
        (1.0 - s * h).abs()
    } else {
        0.0
    };
    let parity = if order.is_multiple_of(2) { 1.0 } else { -1.0 };
    let weighted: Vec<f64> = values
        .iter()
        .enumerate()
        .map(|(j, u)| u * grid.trapezoid_weight(j) * h)
        .collect();
    let out: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for (j, w) in weighted.iter().enumerate() {
                if *w == 0.0 {
                    continue;
                }
                acc += if i >= j {
                    kern[i - j] * w
                } else {
                    parity * kern[j - i] * w
                };
            }
            acc
        })
        .collect();
    Ok((out, mass_defect))
}

/// `b(t) * u0` with diagnostics.
pub fn biharmonic_solve_report(u0: &Field, t: f64, table: &KernelTable) -> Result<(Field, ConvolutionReport)> {
    let (values, defect) = kernel_convolve(&u0.grid, &u0.values, t, table, 0)?;
    if defect > KERNEL_MASS_TOL {
        let reach = u0.grid.length() * t.powf(-0.25);
        return Err(if reach < table.grid.x_max() && t.powf(0.25) < u0.grid.spacing() {
            Error::GridTooCoarse(format!(
                "kernel width t^(1/4) = {} below spacing {}",
                t.powf(0.25),
                u0.grid.spacing()
            ))
        } else {
            Error::DomainTooSmall { outside: defect }
        });
    }
    let n = u0.values.len();
    let report = ConvolutionReport {
        kernel_mass_defect: defect,
        boundary_magnitude: u0.values[0].abs().max(u0.values[n - 1].abs()),
    };
    let field = Field::new(u0.grid, values, u0.time + t)?;
    Ok((field, report))
}

/// Solution of `u_t = -u_xxxx` after time `t` from `u0`.
pub fn biharmonic_solve(u0: &Field, t: f64, table: &KernelTable) -> Result<Field> {
    biharmonic_solve_report(u0, t, table).map(|(f, _)| f)
}
