//! Banded complex matrices and LU without pivoting.
//!
//! The matrices factored here are `I − (h/2)G` with `G` skew-Hermitian, whose
//! Hermitian part is the identity, so elimination without pivoting is stable.

use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// `n × n` matrix with entries only for `|i − j| ≤ b`.
#[derive(Clone, Debug, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    b: usize,
    data: Vec<Complex64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, b: usize) -> Self {
        Self { n, b, data: vec![ZERO; n * (2 * b + 1)] }
    }

    pub fn identity(n: usize, b: usize) -> Self {
        let mut m = Self::zeros(n, b);
        for i in 0..n {
            m.set(i, i, Complex64::new(1.0, 0.0));
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.b
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (2 * self.b + 1) + (j + self.b - i)
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i.abs_diff(j) <= self.b
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        if self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            ZERO
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside the band");
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    /// `a·I + c·self`.
    pub fn shifted(&self, a: f64, c: Complex64) -> Self {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v *= c;
        }
        for i in 0..self.n {
            let k = out.idx(i, i);
            out.data[k] += a;
        }
        out
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![ZERO; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        let (n, b) = (self.n, self.b);
        let w = 2 * b + 1;
        for i in 0..n {
            let lo = i.saturating_sub(b);
            let hi = (i + b).min(n - 1);
            let row = &self.data[i * w + (lo + b - i)..i * w + (hi + b - i) + 1];
            y[i] = row.iter().zip(&x[lo..=hi]).fold(ZERO, |acc, (a, xj)| acc + a * xj);
        }
    }

    /// In-place LU factorization without pivoting.
    pub fn factor(mut self) -> Result<BandedLu> {
        let (n, b) = (self.n, self.b);
        for k in 0..n {
            let pivot = self.data[self.idx(k, k)];
            if pivot.norm() < 1e-300 || !pivot.is_finite() {
                return Err(Error::StepFailure { t: f64::NAN });
            }
            let hi = (k + b).min(n - 1);
            for i in k + 1..=hi {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                for j in k + 1..=hi {
                    let kj = self.data[self.idx(k, j)];
                    let ij = self.idx(i, j);
                    self.data[ij] -= l * kj;
                }
            }
        }
        let inv_diag = (0..n).map(|i| 1.0 / self.data[self.idx(i, i)]).collect();
        Ok(BandedLu { m: self, inv_diag })
    }
}

/// Packed `L` (unit lower) and `U` factors.
#[derive(Clone, Debug, PartialEq)]
pub struct BandedLu {
    m: BandedMatrix,
    inv_diag: Vec<Complex64>,
}

impl BandedLu {
    pub fn solve_in_place(&self, x: &mut [Complex64]) {
        let (n, b) = (self.m.n, self.m.b);
        if b == 1 {
            return self.solve_tridiagonal(x);
        }
        let w = 2 * b + 1;
        let d = &self.m.data;
        for i in 0..n {
            let lo = i.saturating_sub(b);
            let row = &d[i * w + (lo + b - i)..i * w + b];
            let acc = row.iter().zip(&x[lo..i]).fold(x[i], |acc, (l, xj)| acc - l * xj);
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let hi = (i + b).min(n - 1);
            let row = &d[i * w + b + 1..i * w + b + 1 + (hi - i)];
            let acc = row.iter().zip(&x[i + 1..=hi]).fold(x[i], |acc, (u, xj)| acc - u * xj);
            x[i] = acc * self.inv_diag[i];
        }
    }

    fn solve_tridiagonal(&self, x: &mut [Complex64]) {
        let n = self.m.n;
        let d = &self.m.data[..3 * n];
        let x = &mut x[..n];
        let inv = &self.inv_diag[..n];
        let mut prev = x[0];
        for i in 1..n {
            prev = x[i] - d[3 * i] * prev;
            x[i] = prev;
        }
        let mut next = x[n - 1] * inv[n - 1];
        x[n - 1] = next;
        for i in (0..n - 1).rev() {
            next = (x[i] - d[3 * i + 2] * next) * inv[i];
            x[i] = next;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_solve() {
        let n = 7;
        let mut a = BandedMatrix::zeros(n, 1);
        for i in 0..n {
            a.set(i, i, Complex64::new(4.0, 1.0));
            if i > 0 {
                a.set(i, i - 1, Complex64::new(-1.0, 0.5));
            }
            if i + 1 < n {
                a.set(i, i + 1, Complex64::new(0.3, -1.0));
            }
        }
        let x: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0 - i as f64)).collect();
        let mut y = a.matvec(&x);
        a.factor().unwrap().solve_in_place(&mut y);
        for i in 0..n {
            assert!((y[i] - x[i]).norm() < 1e-13);
        }
    }
}
