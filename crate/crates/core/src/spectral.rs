//! Truncated Fourier representation of functions on the circle and the
//! two-torus.
//!
//! Convention shared by every module:
//!
//! ```text
//! u(x)    = Σ_k u_k e^{ikx},            u_k = (1/2π) ∫ u(x) e^{-ikx} dx
//! V(t, x) = Σ_{k,l} v_{k,l} e^{i(kx + lt)}
//! ```
//!
//! Norms are normalized so that `‖u‖_{L²}² = Σ |u_k|² = (1/2π) ∫ |u|²`.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * PI;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized in-place FFT. `inverse` uses the `e^{+2πijk/n}` kernel.
pub(crate) fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    if buf.len() <= 1 {
        return;
    }
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        let plan = if inverse {
            p.plan_fft_inverse(buf.len())
        } else {
            p.plan_fft_forward(buf.len())
        };
        plan.process(buf);
    });
}

/// Smallest 5-smooth integer ≥ `n`.
pub(crate) fn good_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

#[inline]
fn wrap(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}

/// Equispaced grid `x_j = 2πj/n`.
pub fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|j| TWO_PI * j as f64 / n as f64).collect()
}

/// Reduce an angle to `[0, 2π)`.
pub fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TWO_PI);
    if r >= TWO_PI {
        0.0
    } else {
        r
    }
}

/// Serialized form of a single Fourier mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub k: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<i64>,
    pub re: f64,
    pub im: f64,
}

/// Function on T stored as coefficients `u_k`, `|k| ≤ K`.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusField {
    cutoff: usize,
    coeffs: Vec<Complex64>,
    real: bool,
}

impl TorusField {
    pub fn zeros(cutoff: usize) -> Self {
        Self { cutoff, coeffs: vec![ZERO; 2 * cutoff + 1], real: true }
    }

    pub fn constant(value: f64, cutoff: usize) -> Self {
        let mut f = Self::zeros(cutoff);
        f.coeffs[cutoff] = Complex64::new(value, 0.0);
        f
    }

    /// General (not necessarily real) field from its coefficient vector.
    pub fn from_coeffs(cutoff: usize, coeffs: Vec<Complex64>) -> Self {
        assert_eq!(coeffs.len(), 2 * cutoff + 1, "coefficient length must be 2K+1");
        let real = detect_real_1d(&coeffs);
        Self { cutoff, coeffs, real }
    }

    /// Real field: the coefficients are projected onto the conjugate-symmetric subspace.
    pub fn real_from_coeffs(cutoff: usize, coeffs: Vec<Complex64>) -> Self {
        assert_eq!(coeffs.len(), 2 * cutoff + 1, "coefficient length must be 2K+1");
        let mut f = Self { cutoff, coeffs, real: true };
        f.symmetrize();
        f
    }

    /// Field from a sparse list of modes; modes outside the cutoff are ignored.
    pub fn from_modes(cutoff: usize, modes: &[(i64, Complex64)]) -> Self {
        let mut coeffs = vec![ZERO; 2 * cutoff + 1];
        for &(k, c) in modes {
            if k.unsigned_abs() as usize <= cutoff {
                coeffs[(k + cutoff as i64) as usize] += c;
            }
        }
        Self::from_coeffs(cutoff, coeffs)
    }

    /// Trigonometric interpolant of `f` at `2K+1` points.
    pub fn from_real_fn(cutoff: usize, f: impl Fn(f64) -> f64) -> Self {
        let n = 2 * cutoff + 1;
        let samples: Vec<f64> = grid(n).into_iter().map(f).collect();
        Self::from_real_samples(&samples).expect("odd grid")
    }

    pub fn from_complex_fn(cutoff: usize, f: impl Fn(f64) -> Complex64) -> Self {
        let n = 2 * cutoff + 1;
        let samples: Vec<Complex64> = grid(n).into_iter().map(f).collect();
        Self::from_samples(&samples).expect("odd grid")
    }

    /// Exact trigonometric interpolant of samples at `2K+1` equispaced points.
    pub fn from_samples(samples: &[Complex64]) -> Result<Self> {
        let n = samples.len();
        if n < 3 || n % 2 == 0 {
            return Err(Error::InvalidGrid(format!("sample count {n} must be odd and ≥ 3")));
        }
        let cutoff = (n - 1) / 2;
        let coeffs = coefficients_from_grid(samples, cutoff);
        Ok(Self::from_coeffs(cutoff, coeffs))
    }

    pub fn from_real_samples(samples: &[f64]) -> Result<Self> {
        let c: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let mut f = Self::from_samples(&c)?;
        f.real = true;
        f.symmetrize();
        Ok(f)
    }

    /// Coefficients `|k| ≤ cutoff` of samples on an arbitrary grid of size `n ≥ 2·cutoff+1`,
    /// together with the L² mass of the discarded modes.
    pub fn project_samples(samples: &[Complex64], cutoff: usize) -> Result<(Self, f64)> {
        let n = samples.len();
        if n < 2 * cutoff + 1 {
            return Err(Error::InvalidGrid(format!("{n} samples cannot resolve cutoff {cutoff}")));
        }
        let mut buf = samples.to_vec();
        fft_in_place(&mut buf, false);
        let scale = 1.0 / n as f64;
        let mut coeffs = vec![ZERO; 2 * cutoff + 1];
        let mut kept = 0.0;
        for k in -(cutoff as i64)..=cutoff as i64 {
            let c = buf[wrap(k, n)] * scale;
            kept += c.norm_sqr();
            coeffs[(k + cutoff as i64) as usize] = c;
        }
        let total: f64 = buf.iter().map(|c| c.norm_sqr()).sum::<f64>() * scale * scale;
        let tail = (total - kept).max(0.0).sqrt();
        Ok((Self::from_coeffs(cutoff, coeffs), tail))
    }

    pub fn project_real_samples(samples: &[f64], cutoff: usize) -> Result<(Self, f64)> {
        let c: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let (mut f, tail) = Self::project_samples(&c, cutoff)?;
        f.real = true;
        f.symmetrize();
        Ok((f, tail))
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    /// Coefficient `u_k`; zero outside the cutoff.
    pub fn coeff(&self, k: i64) -> Complex64 {
        if k.unsigned_abs() as usize > self.cutoff {
            ZERO
        } else {
            self.coeffs[(k + self.cutoff as i64) as usize]
        }
    }

    pub fn mean(&self) -> f64 {
        self.coeffs[self.cutoff].re
    }

    /// Values at `n ≥ 2K+1` equispaced points.
    pub fn to_samples(&self, n: usize) -> Result<Vec<Complex64>> {
        if n < 2 * self.cutoff + 1 {
            return Err(Error::InvalidGrid(format!(
                "{n} points cannot represent cutoff {}",
                self.cutoff
            )));
        }
        let mut buf = vec![ZERO; n];
        for (i, &c) in self.coeffs.iter().enumerate() {
            buf[wrap(i as i64 - self.cutoff as i64, n)] = c;
        }
        fft_in_place(&mut buf, true);
        Ok(buf)
    }

    pub fn to_real_samples(&self, n: usize) -> Result<Vec<f64>> {
        Ok(self.to_samples(n)?.into_iter().map(|c| c.re).collect())
    }

    /// Point evaluation of the trigonometric polynomial (Horner in `e^{ix}`).
    pub fn eval(&self, x: f64) -> Complex64 {
        let z = Complex64::cis(x);
        let mut acc = ZERO;
        for &c in self.coeffs.iter().rev() {
            acc = acc * z + c;
        }
        acc * Complex64::cis(-(self.cutoff as f64) * x)
    }

    pub fn eval_real(&self, x: f64) -> f64 {
        self.eval(x).re
    }

    pub fn derivative(&self) -> Self {
        let k0 = self.cutoff as i64;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| c * Complex64::new(0.0, (i as i64 - k0) as f64))
            .collect();
        Self { cutoff: self.cutoff, coeffs, real: self.real }
    }

    /// Same function at a different cutoff (zero-padded or truncated).
    pub fn resized(&self, cutoff: usize) -> Self {
        let mut out = Self::zeros(cutoff);
        out.real = self.real;
        let kk = cutoff.min(self.cutoff) as i64;
        for k in -kk..=kk {
            out.coeffs[(k + cutoff as i64) as usize] = self.coeff(k);
        }
        out
    }

    /// Pointwise product at the exact cutoff `K₁+K₂`.
    pub fn mul(&self, other: &Self) -> Self {
        self.mul_truncated(other, self.cutoff + other.cutoff).0
    }

    /// Pointwise product re-truncated to `cutoff`; returns the discarded L² tail.
    pub fn mul_truncated(&self, other: &Self, cutoff: usize) -> (Self, f64) {
        let band = self.cutoff + other.cutoff;
        let n = good_size(2 * (2 * band + 1)).max(2 * cutoff + 1);
        let a = self.to_samples(n).expect("oversampled grid");
        let b = other.to_samples(n).expect("oversampled grid");
        let prod: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        let (mut f, tail) = Self::project_samples(&prod, cutoff).expect("grid resolves cutoff");
        if self.real && other.real {
            f.real = true;
            f.symmetrize();
        }
        (f, tail)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.combine(other, 1.0, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.combine(other, 1.0, -1.0)
    }

    /// `a·self + b·other` at the larger cutoff.
    pub fn combine(&self, other: &Self, a: f64, b: f64) -> Self {
        let cutoff = self.cutoff.max(other.cutoff);
        let mut out = Self::zeros(cutoff);
        for k in -(cutoff as i64)..=cutoff as i64 {
            out.coeffs[(k + cutoff as i64) as usize] = self.coeff(k) * a + other.coeff(k) * b;
        }
        out.real = self.real && other.real;
        out
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            cutoff: self.cutoff,
            coeffs: self.coeffs.iter().map(|&c| c * a).collect(),
            real: self.real,
        }
    }

    pub fn add_constant(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.coeffs[self.cutoff] += c;
        out
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn sobolev_norm(&self, s: f64) -> f64 {
        sobolev_norm_of(&self.coeffs, self.cutoff, s)
    }

    /// Largest coefficient-wise difference.
    pub fn max_coeff_diff(&self, other: &Self) -> f64 {
        let cutoff = self.cutoff.max(other.cutoff) as i64;
        (-cutoff..=cutoff)
            .map(|k| (self.coeff(k) - other.coeff(k)).norm())
            .fold(0.0, f64::max)
    }

    /// Max of `|f|` over `n` equispaced points.
    pub fn sup_norm(&self, n: usize) -> f64 {
        let n = n.max(2 * self.cutoff + 1);
        self.to_samples(n).unwrap().iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn to_modes(&self) -> Vec<Mode> {
        let k0 = self.cutoff as i64;
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.norm() > 0.0)
            .map(|(i, c)| Mode { k: i as i64 - k0, l: None, re: c.re, im: c.im })
            .collect()
    }

    fn symmetrize(&mut self) {
        let k0 = self.cutoff;
        for k in 0..=k0 {
            let a = self.coeffs[k0 + k];
            let b = self.coeffs[k0 - k];
            let c = (a + b.conj()) * 0.5;
            self.coeffs[k0 + k] = c;
            self.coeffs[k0 - k] = c.conj();
        }
    }
}

fn detect_real_1d(coeffs: &[Complex64]) -> bool {
    let n = coeffs.len();
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let tol = 1e-13 * scale.max(f64::MIN_POSITIVE);
    (0..n).all(|i| (coeffs[i] - coeffs[n - 1 - i].conj()).norm() <= tol)
}

fn coefficients_from_grid(samples: &[Complex64], cutoff: usize) -> Vec<Complex64> {
    let n = samples.len();
    let mut buf = samples.to_vec();
    fft_in_place(&mut buf, false);
    let scale = 1.0 / n as f64;
    (-(cutoff as i64)..=cutoff as i64).map(|k| buf[wrap(k, n)] * scale).collect()
}

pub(crate) fn sobolev_norm_of(coeffs: &[Complex64], cutoff: usize, s: f64) -> f64 {
    let k0 = cutoff as i64;
    coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let k = (i as i64 - k0) as f64;
            (1.0 + k * k).powf(s) * c.norm_sqr()
        })
        .sum::<f64>()
        .sqrt()
}

/// PDE state: complex coefficients of `u(t, ·)` with a time stamp.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    field: TorusField,
    time: f64,
}

impl StateVector {
    pub fn new(field: TorusField, time: f64) -> Self {
        Self { field, time }
    }

    pub fn from_coeffs(cutoff: usize, coeffs: Vec<Complex64>, time: f64) -> Self {
        Self { field: TorusField::from_coeffs(cutoff, coeffs), time }
    }

    /// `e^{ikx}` at time 0.
    pub fn plane_wave(k: i64, cutoff: usize) -> Self {
        Self::new(TorusField::from_modes(cutoff, &[(k, Complex64::new(1.0, 0.0))]), 0.0)
    }

    pub fn field(&self) -> &TorusField {
        &self.field
    }

    pub fn coeffs(&self) -> &[Complex64] {
        self.field.coeffs()
    }

    pub fn cutoff(&self) -> usize {
        self.field.cutoff()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn l2_norm(&self) -> f64 {
        self.field.l2_norm()
    }

    pub fn sobolev_norm(&self, s: f64) -> f64 {
        self.field.sobolev_norm(s)
    }

    pub fn resized(&self, cutoff: usize) -> Self {
        Self { field: self.field.resized(cutoff), time: self.time }
    }

    /// L² distance to another state (cutoffs may differ).
    pub fn l2_distance(&self, other: &Self) -> f64 {
        let cutoff = self.cutoff().max(other.cutoff()) as i64;
        (-cutoff..=cutoff)
            .map(|k| (self.field.coeff(k) - other.field.coeff(k)).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Fraction of `‖u‖²` carried by modes `|k| > threshold`.
    pub fn tail_fraction(&self, threshold: usize) -> f64 {
        let k0 = self.cutoff() as i64;
        let mut tail = 0.0;
        let mut total = 0.0;
        for (i, c) in self.coeffs().iter().enumerate() {
            let e = c.norm_sqr();
            total += e;
            if (i as i64 - k0).unsigned_abs() as usize > threshold {
                tail += e;
            }
        }
        if total > 0.0 {
            tail / total
        } else {
            0.0
        }
    }
}

/// Function on T² with coefficients `v_{k,l}`, `|k| ≤ K_x`, `|l| ≤ K_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeField {
    kx: usize,
    kt: usize,
    coeffs: Vec<Complex64>,
    real: bool,
}

impl SpaceTimeField {
    pub fn zeros(kx: usize, kt: usize) -> Self {
        Self { kx, kt, coeffs: vec![ZERO; (2 * kx + 1) * (2 * kt + 1)], real: true }
    }

    pub fn constant(value: f64, kx: usize, kt: usize) -> Self {
        let mut f = Self::zeros(kx, kt);
        let i = f.index(0, 0);
        f.coeffs[i] = Complex64::new(value, 0.0);
        f
    }

    /// Field from sparse modes `(k, l, v_{k,l})`; modes outside the cutoffs are ignored.
    pub fn from_modes(kx: usize, kt: usize, modes: &[(i64, i64, Complex64)]) -> Self {
        let mut f = Self::zeros(kx, kt);
        for &(k, l, c) in modes {
            if f.contains(k, l) {
                let i = f.index(k, l);
                f.coeffs[i] += c;
            }
        }
        f.real = detect_real_2d(&f.coeffs);
        f
    }

    /// Smallest cutoffs that hold all given modes.
    pub fn from_modes_auto(modes: &[(i64, i64, Complex64)]) -> Self {
        let kx = modes.iter().map(|m| m.0.unsigned_abs() as usize).max().unwrap_or(0);
        let kt = modes.iter().map(|m| m.1.unsigned_abs() as usize).max().unwrap_or(0);
        Self::from_modes(kx, kt, modes)
    }

    pub fn from_coeffs(kx: usize, kt: usize, coeffs: Vec<Complex64>) -> Self {
        assert_eq!(coeffs.len(), (2 * kx + 1) * (2 * kt + 1));
        let real = detect_real_2d(&coeffs);
        Self { kx, kt, coeffs, real }
    }

    /// `f(x + m t)` for a function `f` on T: modes `(k, m k)`.
    pub fn lift_translated(f: &TorusField, m: i64, kt: usize) -> Self {
        let kx = f.cutoff();
        let mut out = Self::zeros(kx, kt);
        for k in -(kx as i64)..=kx as i64 {
            if out.contains(k, m * k) {
                let i = out.index(k, m * k);
                out.coeffs[i] = f.coeff(k);
            }
        }
        out.real = f.is_real();
        out
    }

    /// Time-independent field `f(x)`.
    pub fn from_torus(f: &TorusField, kt: usize) -> Self {
        Self::lift_translated(f, 0, kt)
    }

    /// Samples on an `nt × nx` grid (row-major in `t`), reduced to the given cutoffs,
    /// with the L² mass of the discarded modes.
    pub fn from_samples(
        samples: &[Complex64],
        nt: usize,
        nx: usize,
        kx: usize,
        kt: usize,
    ) -> Result<(Self, f64)> {
        if samples.len() != nt * nx {
            return Err(Error::DimensionError { expected: nt * nx, got: samples.len() });
        }
        if nx < 2 * kx + 1 || nt < 2 * kt + 1 {
            return Err(Error::InvalidGrid(format!(
                "{nt}×{nx} grid cannot resolve cutoffs ({kx}, {kt})"
            )));
        }
        let mut buf = samples.to_vec();
        fft2(&mut buf, nt, nx, false);
        let scale = 1.0 / (nt * nx) as f64;
        let mut out = Self::zeros(kx, kt);
        let mut kept = 0.0;
        for k in -(kx as i64)..=kx as i64 {
            for l in -(kt as i64)..=kt as i64 {
                let c = buf[wrap(l, nt) * nx + wrap(k, nx)] * scale;
                kept += c.norm_sqr();
                let i = out.index(k, l);
                out.coeffs[i] = c;
            }
        }
        let total: f64 = buf.iter().map(|c| c.norm_sqr()).sum::<f64>() * scale * scale;
        out.real = detect_real_2d(&out.coeffs);
        Ok((out, (total - kept).max(0.0).sqrt()))
    }

    pub fn from_real_samples(
        samples: &[f64],
        nt: usize,
        nx: usize,
        kx: usize,
        kt: usize,
    ) -> Result<(Self, f64)> {
        let c: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let (mut f, tail) = Self::from_samples(&c, nt, nx, kx, kt)?;
        f.real = true;
        f.symmetrize();
        Ok((f, tail))
    }

    pub fn kx(&self) -> usize {
        self.kx
    }

    pub fn kt(&self) -> usize {
        self.kt
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn contains(&self, k: i64, l: i64) -> bool {
        k.unsigned_abs() as usize <= self.kx && l.unsigned_abs() as usize <= self.kt
    }

    #[inline]
    fn index(&self, k: i64, l: i64) -> usize {
        (k + self.kx as i64) as usize * (2 * self.kt + 1) + (l + self.kt as i64) as usize
    }

    pub fn coeff(&self, k: i64, l: i64) -> Complex64 {
        if self.contains(k, l) {
            self.coeffs[self.index(k, l)]
        } else {
            ZERO
        }
    }

    /// Nonzero modes `(k, l, v_{k,l})`.
    pub fn modes(&self) -> Vec<(i64, i64, Complex64)> {
        let mut out = Vec::new();
        for k in -(self.kx as i64)..=self.kx as i64 {
            for l in -(self.kt as i64)..=self.kt as i64 {
                let c = self.coeff(k, l);
                if c.norm() > 0.0 {
                    out.push((k, l, c));
                }
            }
        }
        out
    }

    pub fn to_modes(&self) -> Vec<Mode> {
        self.modes()
            .into_iter()
            .map(|(k, l, c)| Mode { k, l: Some(l), re: c.re, im: c.im })
            .collect()
    }

    /// Field on T obtained by freezing `t`.
    pub fn slice_at(&self, t: f64) -> TorusField {
        let kt = self.kt as i64;
        let phases: Vec<Complex64> = (-kt..=kt).map(|l| Complex64::cis(l as f64 * t)).collect();
        let row = 2 * self.kt + 1;
        let coeffs: Vec<Complex64> = (0..2 * self.kx + 1)
            .map(|i| {
                self.coeffs[i * row..(i + 1) * row]
                    .iter()
                    .zip(&phases)
                    .map(|(c, p)| c * p)
                    .sum()
            })
            .collect();
        if self.real {
            TorusField::real_from_coeffs(self.kx, coeffs)
        } else {
            TorusField::from_coeffs(self.kx, coeffs)
        }
    }

    pub fn eval(&self, t: f64, x: f64) -> Complex64 {
        self.slice_at(t).eval(x)
    }

    /// Samples on an `nt × nx` grid, row-major in `t`.
    pub fn to_samples(&self, nt: usize, nx: usize) -> Result<Vec<Complex64>> {
        if nx < 2 * self.kx + 1 || nt < 2 * self.kt + 1 {
            return Err(Error::InvalidGrid(format!(
                "{nt}×{nx} grid cannot represent cutoffs ({}, {})",
                self.kx, self.kt
            )));
        }
        let mut buf = vec![ZERO; nt * nx];
        for k in -(self.kx as i64)..=self.kx as i64 {
            for l in -(self.kt as i64)..=self.kt as i64 {
                buf[wrap(l, nt) * nx + wrap(k, nx)] = self.coeff(k, l);
            }
        }
        fft2(&mut buf, nt, nx, true);
        Ok(buf)
    }

    pub fn to_real_samples(&self, nt: usize, nx: usize) -> Result<Vec<f64>> {
        Ok(self.to_samples(nt, nx)?.into_iter().map(|c| c.re).collect())
    }

    fn map_coeffs(&self, f: impl Fn(i64, i64, Complex64) -> Complex64) -> Self {
        let mut out = self.clone();
        for k in -(self.kx as i64)..=self.kx as i64 {
            for l in -(self.kt as i64)..=self.kt as i64 {
                let i = self.index(k, l);
                out.coeffs[i] = f(k, l, self.coeffs[i]);
            }
        }
        out
    }

    pub fn derivative_x(&self) -> Self {
        self.map_coeffs(|k, _, c| c * Complex64::new(0.0, k as f64))
    }

    pub fn derivative_t(&self) -> Self {
        self.map_coeffs(|_, l, c| c * Complex64::new(0.0, l as f64))
    }

    pub fn resized(&self, kx: usize, kt: usize) -> Self {
        let mut out = Self::zeros(kx, kt);
        for k in -(kx.min(self.kx) as i64)..=kx.min(self.kx) as i64 {
            for l in -(kt.min(self.kt) as i64)..=kt.min(self.kt) as i64 {
                let i = out.index(k, l);
                out.coeffs[i] = self.coeff(k, l);
            }
        }
        out.real = self.real;
        out
    }

    /// `a·self + b·other` at the componentwise larger cutoffs.
    pub fn combine(&self, other: &Self, a: f64, b: f64) -> Self {
        let kx = self.kx.max(other.kx);
        let kt = self.kt.max(other.kt);
        let mut out = Self::zeros(kx, kt);
        for k in -(kx as i64)..=kx as i64 {
            for l in -(kt as i64)..=kt as i64 {
                let i = out.index(k, l);
                out.coeffs[i] = self.coeff(k, l) * a + other.coeff(k, l) * b;
            }
        }
        out.real = self.real && other.real;
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        self.combine(other, 1.0, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.combine(other, 1.0, -1.0)
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map_coeffs(|_, _, c| c * a)
    }

    pub fn add_constant(&self, c: f64) -> Self {
        let mut out = self.clone();
        let i = self.index(0, 0);
        out.coeffs[i] += c;
        out
    }

    pub fn mean(&self) -> f64 {
        self.coeff(0, 0).re
    }

    /// `‖f‖_{L²(T²)}` with normalized measure.
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest coefficient-wise difference.
    pub fn max_coeff_diff(&self, other: &Self) -> f64 {
        self.sub(other).coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `f(t, x − m t)`: mode `(k, l)` moves to `(k, l − m k)`, widening `K_t` by `|m| K_x`.
    pub fn translated(&self, m: i64) -> Self {
        let kt = self.kt + m.unsigned_abs() as usize * self.kx;
        let mut out = Self::zeros(self.kx, kt);
        for k in -(self.kx as i64)..=self.kx as i64 {
            for l in -(self.kt as i64)..=self.kt as i64 {
                let i = out.index(k, l - m * k);
                out.coeffs[i] = self.coeff(k, l);
            }
        }
        out.real = self.real;
        out
    }

    /// Drop `K_t` to the largest `|l|` carrying a coefficient above `tol`.
    pub fn trimmed(&self, tol: f64) -> Self {
        let mut kx = 0;
        let mut kt = 0;
        for (k, l, c) in self.modes() {
            if c.norm() > tol {
                kx = kx.max(k.unsigned_abs() as usize);
                kt = kt.max(l.unsigned_abs() as usize);
            }
        }
        self.resized(kx, kt)
    }

    /// True when no coefficient with `l ≠ 0` exceeds `tol`.
    pub fn is_time_independent(&self, tol: f64) -> bool {
        self.modes().iter().all(|&(_, l, c)| l == 0 || c.norm() <= tol)
    }

    fn symmetrize(&mut self) {
        let (kx, kt) = (self.kx as i64, self.kt as i64);
        for k in -kx..=kx {
            for l in -kt..=kt {
                let i = self.index(k, l);
                let j = self.index(-k, -l);
                if i <= j {
                    let c = (self.coeffs[i] + self.coeffs[j].conj()) * 0.5;
                    self.coeffs[i] = c;
                    self.coeffs[j] = c.conj();
                }
            }
        }
        self.real = true;
    }
}

/// Coefficients of grid samples reduced to `(kx, kt)`, with the L² mass beyond
/// `kx` in `x`, beyond `kt` in `t`, and the total L² norm.
pub(crate) fn project_grid(
    samples: &[Complex64],
    nt: usize,
    nx: usize,
    kx: usize,
    kt: usize,
) -> Result<(SpaceTimeField, f64, f64, f64)> {
    if nx < 2 * kx + 1 || nt < 2 * kt + 1 || samples.len() != nt * nx {
        return Err(Error::InvalidGrid(format!("{nt}×{nx} grid cannot resolve ({kx}, {kt})")));
    }
    let mut buf = samples.to_vec();
    fft2(&mut buf, nt, nx, false);
    let scale = 1.0 / (nt * nx) as f64;
    let mut out = SpaceTimeField::zeros(kx, kt);
    let (mut tail_x, mut tail_t, mut total) = (0.0, 0.0, 0.0);
    for j in 0..nt {
        let l = if j <= nt / 2 { j as i64 } else { j as i64 - nt as i64 };
        for i in 0..nx {
            let k = if i <= nx / 2 { i as i64 } else { i as i64 - nx as i64 };
            let c = buf[j * nx + i] * scale;
            let e = c.norm_sqr();
            total += e;
            let in_x = k.unsigned_abs() as usize <= kx;
            let in_t = l.unsigned_abs() as usize <= kt;
            if !in_x {
                tail_x += e;
            }
            if !in_t {
                tail_t += e;
            }
            if in_x && in_t {
                let idx = out.index(k, l);
                out.coeffs[idx] = c;
            }
        }
    }
    out.real = detect_real_2d(&out.coeffs);
    Ok((out, tail_x.sqrt(), tail_t.sqrt(), total.sqrt()))
}

impl SpaceTimeField {
    /// Project onto the conjugate-symmetric (real) subspace.
    pub fn real_part(&self) -> Self {
        let mut out = self.clone();
        out.symmetrize();
        out
    }
}

impl TorusField {
    /// Project onto the conjugate-symmetric (real) subspace.
    pub fn real_part(&self) -> Self {
        let mut out = self.clone();
        out.real = true;
        out.symmetrize();
        out
    }
}

#[derive(Serialize, Deserialize)]
struct TorusFieldRepr {
    cutoff: usize,
    modes: Vec<Mode>,
}

impl Serialize for TorusField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TorusFieldRepr { cutoff: self.cutoff, modes: self.to_modes() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for TorusField {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = TorusFieldRepr::deserialize(d)?;
        let modes: Vec<(i64, Complex64)> =
            r.modes.iter().map(|m| (m.k, Complex64::new(m.re, m.im))).collect();
        Ok(TorusField::from_modes(r.cutoff, &modes))
    }
}

#[derive(Serialize, Deserialize)]
struct SpaceTimeFieldRepr {
    kx: usize,
    kt: usize,
    modes: Vec<Mode>,
}

impl Serialize for SpaceTimeField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SpaceTimeFieldRepr { kx: self.kx, kt: self.kt, modes: self.to_modes() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpaceTimeField {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = SpaceTimeFieldRepr::deserialize(d)?;
        let modes: Vec<(i64, i64, Complex64)> = r
            .modes
            .iter()
            .map(|m| (m.k, m.l.unwrap_or(0), Complex64::new(m.re, m.im)))
            .collect();
        Ok(SpaceTimeField::from_modes(r.kx, r.kt, &modes))
    }
}

fn detect_real_2d(coeffs: &[Complex64]) -> bool {
    // (−k, −l) sits at the mirrored flat index.
    detect_real_1d(coeffs)
}

/// 2-D FFT on a row-major `nt × nx` buffer.
fn fft2(buf: &mut [Complex64], nt: usize, nx: usize, inverse: bool) {
    for row in buf.chunks_mut(nx) {
        fft_in_place(row, inverse);
    }
    let mut col = vec![ZERO; nt];
    for i in 0..nx {
        for j in 0..nt {
            col[j] = buf[j * nx + i];
        }
        fft_in_place(&mut col, inverse);
        for j in 0..nt {
            buf[j * nx + i] = col[j];
        }
    }
}
