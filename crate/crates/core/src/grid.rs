//! Uniform 1D grids, fields sampled on them, and time histories.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of cells accepted by [`Grid1D::new`].
pub const MIN_CELLS: usize = 8;

/// A uniform grid with `n_cells + 1` nodes `x_i = x_min + i * spacing`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    x_min: f64,
    x_max: f64,
    n_cells: usize,
    spacing: f64,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n_cells: usize) -> Result<Self> {
        if !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::NonFinite(format!("grid bounds [{x_min}, {x_max}]")));
        }
        if x_min >= x_max {
            return Err(Error::EmptyInterval { min: x_min, max: x_max });
        }
        if n_cells < MIN_CELLS {
            return Err(Error::InvalidInput(format!("n_cells = {n_cells} < {MIN_CELLS}")));
        }
        Ok(Self {
            x_min,
            x_max,
            n_cells,
            spacing: (x_max - x_min) / n_cells as f64,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.n_cells + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.spacing
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.x(i))
    }

    /// Trapezoid weight of node `i` (in units of `spacing`).
    #[inline]
    pub fn trapezoid_weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.n_cells {
            0.5
        } else {
            1.0
        }
    }

    /// Trapezoid rule for node values on this grid.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        let n = self.n_cells;
        let interior: f64 = values[1..n].iter().sum();
        (interior + 0.5 * (values[0] + values[n])) * self.spacing
    }

    /// True when the grid is symmetric about the origin up to rounding.
    pub fn is_symmetric(&self) -> bool {
        (self.x_min + self.x_max).abs() <= 1e-12 * self.x_max.abs().max(1.0)
    }

    /// Index of the node nearest to `x` (clamped to the grid).
    pub fn nearest(&self, x: f64) -> usize {
        let s = ((x - self.x_min) / self.spacing).round();
        s.clamp(0.0, self.n_cells as f64) as usize
    }
}

/// Node values of `u` on a grid at a given time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub grid: Grid1D,
    pub values: Vec<f64>,
    pub time: f64,
}

impl Field {
    pub fn new(grid: Grid1D, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "field has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field value at node {i}")));
        }
        if !(time.is_finite() && time >= 0.0) {
            return Err(Error::InvalidInput(format!("field time {time}")));
        }
        Ok(Self { grid, values, time })
    }

    pub fn zeros(grid: Grid1D) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
            time: 0.0,
        }
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().map(f).collect(), 0.0)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Discrete mass by the trapezoid rule.
    pub fn mass(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Writes `x,u` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,u")?;
        for (i, u) in self.values.iter().enumerate() {
            writeln!(w, "{:.16e},{:.16e}", self.grid.x(i), u)?;
        }
        Ok(())
    }
}

/// Per-step solver record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Time at the end of the step.
    pub t: f64,
    pub dt: f64,
    pub newton_iterations: usize,
    pub residual: f64,
    /// Discrete dissipation rate `sum_faces m |D3 u|^2 h` at the new state.
    pub dissipation: f64,
    /// Discrete gradient energy `1/2 sum |D+ u|^2 h` at the new state.
    pub gradient_energy: f64,
    /// `sum_faces |phi_face D3 u|^2 h` at the new state.
    pub flux_norm_sq: f64,
    /// `sup|u|` at the new state.
    pub sup_norm: f64,
    /// Discrete mass at the new state.
    pub mass: f64,
}

/// Time history of a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub snapshots: Vec<Field>,
    pub step_log: Vec<StepRecord>,
    /// Model and discretization the trajectory was produced with.
    #[serde(default)]
    pub meta: Option<crate::solver::RunMeta>,
}

impl Trajectory {
    pub fn new(first: Field) -> Self {
        Self {
            snapshots: vec![first],
            step_log: Vec::new(),
            meta: None,
        }
    }

    pub fn grid(&self) -> Grid1D {
        self.snapshots[0].grid
    }

    pub fn last(&self) -> &Field {
        self.snapshots.last().expect("trajectory always has a snapshot")
    }

    pub fn push(&mut self, field: Field) -> Result<()> {
        let last = self.last();
        if field.grid != last.grid {
            return Err(Error::InvalidInput("snapshot grid mismatch".into()));
        }
        if field.time <= last.time {
            return Err(Error::InvalidInput(format!(
                "snapshot time {} not after {}",
                field.time, last.time
            )));
        }
        self.snapshots.push(field);
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|f| f.time).collect()
    }

    /// Long-format `t,x,u` CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,x,u")?;
        for snap in &self.snapshots {
            for (i, u) in snap.values.iter().enumerate() {
                writeln!(w, "{:.16e},{:.16e},{:.16e}", snap.time, snap.grid.x(i), u)?;
            }
        }
        Ok(())
    }
}

/// Uniformly spaced points on `[a, b]` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}
