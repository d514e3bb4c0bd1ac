//! Dormand–Prince 5(4) integrator with continuous (dense) output.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5Options {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    /// Accepted plus rejected steps allowed over the lifetime of the integrator.
    pub max_steps: usize,
}

impl Default for Dopri5Options {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            h_init: 1e-4,
            h_max: f64::INFINITY,
            max_steps: 5_000_000,
        }
    }
}

/// Interpolant over one accepted step.
#[derive(Debug, Clone, Copy)]
pub struct DenseStep<const D: usize> {
    pub t0: f64,
    pub t1: f64,
    r: [[f64; D]; 5],
}

impl<const D: usize> DenseStep<D> {
    pub fn eval(&self, t: f64) -> [f64; D] {
        let h = self.t1 - self.t0;
        let th = (t - self.t0) / h;
        let th1 = 1.0 - th;
        let mut out = [0.0; D];
        for (i, o) in out.iter_mut().enumerate() {
            let r = |k: usize| self.r[k][i];
            *o = r(0) + th * (r(1) + th1 * (r(2) + th * (r(3) + th1 * r(4))));
        }
        out
    }

    pub fn start(&self) -> [f64; D] {
        self.r[0]
    }

    pub fn end(&self) -> [f64; D] {
        let mut out = [0.0; D];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.r[0][i] + self.r[1][i];
        }
        out
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

pub struct Dopri5<F, const D: usize> {
    f: F,
    t: f64,
    y: [f64; D],
    k1: [f64; D],
    h: f64,
    opts: Dopri5Options,
    steps: usize,
}

fn axpy<const D: usize>(y: &[f64; D], h: f64, terms: &[(f64, &[f64; D])]) -> [f64; D] {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        *o += h * s;
    }
    out
}

impl<F, const D: usize> Dopri5<F, D>
where
    F: FnMut(f64, &[f64; D]) -> Result<[f64; D]>,
{
    pub fn new(mut f: F, t0: f64, y0: [f64; D], opts: Dopri5Options) -> Result<Self> {
        if !(opts.rtol > 0.0 && opts.atol > 0.0 && opts.h_init > 0.0) {
            return Err(Error::InvalidInput("integrator tolerances must be positive".into()));
        }
        let k1 = f(t0, &y0)?;
        Ok(Self {
            f,
            t: t0,
            y: y0,
            k1,
            h: opts.h_init.min(opts.h_max),
            opts,
            steps: 0,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> [f64; D] {
        self.y
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Takes one accepted step, returning its interpolant.
    pub fn step(&mut self) -> Result<DenseStep<D>> {
        loop {
            if self.steps >= self.opts.max_steps {
                return Err(Error::BudgetExceeded(format!(
                    "integrator exceeded {} steps at t = {}",
                    self.opts.max_steps, self.t
                )));
            }
            self.steps += 1;
            let h = self.h;
            if !(h.abs() > 1e-14 * self.t.abs().max(1.0)) {
                return Err(Error::StepCollapse {
                    t: self.t,
                    dt_min: h,
                    sup: self.y.iter().fold(0.0f64, |a, v| a.max(v.abs())),
                });
            }
            let (t, y, k1) = (self.t, self.y, self.k1);
            let f = &mut self.f;
            let k2 = f(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]))?;
            let k3 = f(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]))?;
            let k4 = f(t + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
            let k5 = f(
                t + C5 * h,
                &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            )?;
            let k6 = f(
                t + h,
                &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            )?;
            let y1 = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            let k7 = f(t + h, &y1)?;
            let mut err = 0.0;
            for i in 0..D {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.opts.atol + self.opts.rtol * y[i].abs().max(y1[i].abs());
                err += (e / sc).powi(2);
            }
            let err = (err / D as f64).sqrt();
            if !err.is_finite() {
                self.h *= 0.1;
                continue;
            }
            let fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 10.0);
            if err <= 1.0 {
                let mut r = [[0.0; D]; 5];
                for i in 0..D {
                    let ydiff = y1[i] - y[i];
                    let bspl = h * k1[i] - ydiff;
                    r[0][i] = y[i];
                    r[1][i] = ydiff;
                    r[2][i] = bspl;
                    r[3][i] = ydiff - h * k7[i] - bspl;
                    r[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                }
                let dense = DenseStep { t0: t, t1: t + h, r };
                self.t = t + h;
                self.y = y1;
                self.k1 = k7;
                self.h = (h * fac).min(self.opts.h_max);
                return Ok(dense);
            }
            self.h = h * fac.min(1.0);
        }
    }

    /// Integrates exactly to `t_end`.
    pub fn advance_to(&mut self, t_end: f64) -> Result<[f64; D]> {
        while self.t < t_end {
            if self.t + self.h > t_end {
                self.h = t_end - self.t;
            }
            self.step()?;
        }
        Ok(self.y)
    }
}
