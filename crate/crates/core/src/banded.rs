//! Banded LU factorization with partial pivoting.

use crate::error::{Error, Result};

/// Square matrix with `kl` sub- and `ku` super-diagonals, stored row-wise with
/// room for the `kl` extra super-diagonals produced by row interchanges.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku + self.kl);
        i * self.width + (j + self.kl - i)
    }

    /// Adds `v` at `(i, j)`; panics outside the declared band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(j + self.kl >= i && j <= i + self.ku, "entry ({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// `y = A x` (before factorization).
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// Factorizes in place.
    pub fn factorize(mut self) -> Result<BandLu> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut pivots = vec![0usize; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for r in k + 1..=last {
                let v = self.data[self.idx(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::SingularMatrix(k));
            }
            pivots[k] = p;
            let right = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=right {
                    let (a, b) = (self.idx(k, j), self.idx(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(k, k)];
            for r in k + 1..=last {
                let rk = self.idx(r, k);
                let l = self.data[rk] / pivot;
                self.data[rk] = l;
                if l != 0.0 {
                    for j in k + 1..=right {
                        let kj = self.data[self.idx(k, j)];
                        let rj = self.idx(r, j);
                        self.data[rj] -= l * kj;
                    }
                }
            }
        }
        Ok(BandLu { m: self, pivots })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
    pivots: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, b: &mut [f64]) {
        let (n, kl, ku) = (self.m.n, self.m.kl, self.m.ku);
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let last = (k + kl).min(n - 1);
            let bk = b[k];
            for r in k + 1..=last {
                b[r] -= self.m.data[self.m.idx(r, k)] * bk;
            }
        }
        for k in (0..n).rev() {
            let right = (k + kl + ku).min(n - 1);
            let mut s = b[k];
            for j in k + 1..=right {
                s -= self.m.data[self.m.idx(k, j)] * b[j];
            }
            b[k] = s / self.m.data[self.m.idx(k, k)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for r in k + 1..n {
                let l = a[r][k] / a[k][k];
                for j in k..n {
                    a[r][j] -= l * a[k][j];
                }
                b[r] -= l * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
            x[k] = (b[k] - s) / a[k][k];
        }
        x
    }

    proptest! {
        #[test]
        fn matches_dense_elimination(
            n in 6usize..40,
            kl in 0usize..4,
            ku in 0usize..4,
            seed in proptest::collection::vec(-1.0..1.0f64, 40 * 9 + 40),
        ) {
            let mut m = BandMatrix::zeros(n, kl, ku);
            let mut dense = vec![vec![0.0; n]; n];
            let mut s = seed.iter().cycle();
            for i in 0..n {
                for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                    let v = *s.next().unwrap() + if i == j { 0.1 } else { 0.0 };
                    m.add(i, j, v);
                    dense[i][j] = v;
                }
            }
            let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
            let expect = dense_solve(dense, b.clone());
            let lu = m.clone().factorize().unwrap();
            let mut x = b.clone();
            lu.solve(&mut x);
            let r = m.mul_vec(&x);
            let scale = expect.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            for i in 0..n {
                prop_assert!((x[i] - expect[i]).abs() <= 1e-8 * scale);
                prop_assert!((r[i] - b[i]).abs() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn needs_pivoting() {
        // Zero leading diagonal forces a row swap.
        let mut m = BandMatrix::zeros(3, 1, 1);
        m.add(0, 1, 1.0);
        m.add(1, 0, 1.0);
        m.add(1, 2, 1.0);
        m.add(2, 1, 1.0);
        m.add(2, 2, 1.0);
        let lu = m.factorize().unwrap();
        let mut b = vec![2.0, 4.0, 5.0];
        lu.solve(&mut b);
        assert_eq!(b, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn singular_is_reported() {
        let m = BandMatrix::zeros(4, 1, 1);
        assert!(matches!(m.factorize(), Err(Error::SingularMatrix(0))));
    }
}
