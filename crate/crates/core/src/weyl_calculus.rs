//! Weyl quantization of structured symbols on truncated Fourier space.
//!
//! A symbol `a(x, ξ) = Σ_n e^{inx} R_n(ξ)` acts on `e^{ijx}` by
//! `Op(a) e^{ijx} = Σ_n R_n(j + n/2) e^{i(j+n)x}`, so the matrix entry is
//! `M[k][j] = R_{k−j}((k+j)/2)`.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::classical_dynamics::{EscapeFunction, IntervalUnion};
use crate::error::{Error, Result};
use crate::linalg::BandedMatrix;
use crate::spectral::{fft_in_place, good_size, StateVector, TorusField, TWO_PI};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Fiber cutoff: 1 on `|ξ| ≤ 1/2`, 0 on `|ξ| ≥ 1`, quintic smoothstep between.
pub fn chi(xi: f64) -> f64 {
    let a = xi.abs();
    if a <= 0.5 {
        1.0
    } else if a >= 1.0 {
        0.0
    } else {
        let r = 2.0 * (a - 0.5);
        1.0 - r * r * r * (10.0 - 15.0 * r + 6.0 * r * r)
    }
}

pub fn chi_derivative(xi: f64) -> f64 {
    let a = xi.abs();
    if a <= 0.5 || a >= 1.0 {
        return 0.0;
    }
    let r = 2.0 * (a - 0.5);
    -2.0 * 30.0 * r * r * (1.0 - r) * (1.0 - r) * xi.signum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "c")]
pub enum RadialFactor {
    Constant(Complex64),
    /// `c·ξ`
    Linear(Complex64),
    /// `c·|ξ|·(1 − χ(ξ))`
    AbsCut(Complex64),
    /// Same radial shape as `AbsCut`, carrying a Fourier coefficient of an escape profile.
    ProfileAbsCut(Complex64),
}

impl RadialFactor {
    pub fn coefficient(&self) -> Complex64 {
        match *self {
            Self::Constant(c) | Self::Linear(c) | Self::AbsCut(c) | Self::ProfileAbsCut(c) => c,
        }
    }

    pub fn eval(&self, xi: f64) -> Complex64 {
        match *self {
            Self::Constant(c) => c,
            Self::Linear(c) => c * xi,
            Self::AbsCut(c) | Self::ProfileAbsCut(c) => c * (xi.abs() * (1.0 - chi(xi))),
        }
    }

    /// `∂_ξ` of the radial factor.
    pub fn derivative(&self, xi: f64) -> Complex64 {
        match *self {
            Self::Constant(_) => ZERO,
            Self::Linear(c) => c,
            Self::AbsCut(c) | Self::ProfileAbsCut(c) => {
                c * (xi.signum() * (1.0 - chi(xi)) - xi.abs() * chi_derivative(xi))
            }
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, Self::Constant(_) | Self::Linear(_))
    }

    fn same_kind(&self, other: &Self) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }

    fn with_coefficient(&self, c: Complex64) -> Self {
        match self {
            Self::Constant(_) => Self::Constant(c),
            Self::Linear(_) => Self::Linear(c),
            Self::AbsCut(_) => Self::AbsCut(c),
            Self::ProfileAbsCut(_) => Self::ProfileAbsCut(c),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolTerm {
    pub n: i64,
    pub radial: RadialFactor,
}

/// Finite sum of `e^{inx}·R(ξ)` terms.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SymbolRep {
    pub terms: Vec<SymbolTerm>,
    pub tag: String,
}

impl SymbolRep {
    pub fn new(terms: Vec<SymbolTerm>, tag: impl Into<String>) -> Self {
        Self { terms, tag: tag.into() }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![SymbolTerm { n: 0, radial: RadialFactor::Constant(c.into()) }], "constant")
    }

    /// `i·ξ`, the symbol of `∂_x`.
    pub fn d_dx() -> Self {
        Self::new(vec![SymbolTerm { n: 0, radial: RadialFactor::Linear(Complex64::i()) }], "i*xi")
    }

    /// `|ξ|(1 − χ(ξ))`.
    pub fn abs_cut() -> Self {
        Self::new(vec![SymbolTerm { n: 0, radial: RadialFactor::AbsCut(1.0.into()) }], "|xi|(1-chi)")
    }

    /// The ξ-independent multiplier `p(x)`.
    pub fn multiplier(p: &TorusField) -> Self {
        Self::from_field(p, RadialFactor::Constant, "p(x)")
    }

    /// `i·ξ·p(x)`, the transport generator.
    pub fn transport(p: &TorusField) -> Self {
        Self::from_field(p, |c| RadialFactor::Linear(Complex64::i() * c), "i*xi*p(x)")
    }

    /// `c(x)·ξ`.
    pub fn linear(p: &TorusField) -> Self {
        Self::from_field(p, RadialFactor::Linear, "xi*p(x)")
    }

    /// `|ξ|(1 − χ(ξ))·profile(x)`.
    pub fn profile_abs_cut(profile: &TorusField) -> Self {
        Self::from_field(profile, RadialFactor::ProfileAbsCut, "|xi|(1-chi)*profile(x)")
    }

    fn from_field(p: &TorusField, kind: impl Fn(Complex64) -> RadialFactor, tag: &str) -> Self {
        let kk = p.cutoff() as i64;
        let terms = (-kk..=kk)
            .filter_map(|n| {
                let c = p.coeff(n);
                (c != ZERO).then(|| SymbolTerm { n, radial: kind(c) })
            })
            .collect();
        Self::new(terms, tag)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| SymbolTerm { n: t.n, radial: t.radial.with_coefficient(c * t.radial.coefficient()) })
            .collect();
        Self::new(terms, self.tag.clone())
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Self::new(terms, format!("{}+{}", self.tag, other.tag))
    }

    /// Largest `|n|` over the terms.
    pub fn bandwidth(&self) -> usize {
        self.terms.iter().map(|t| t.n.unsigned_abs() as usize).max().unwrap_or(0)
    }

    pub fn is_affine(&self) -> bool {
        self.terms.iter().all(|t| t.radial.is_affine())
    }

    pub fn eval(&self, x: f64, xi: f64) -> Complex64 {
        self.terms.iter().map(|t| Complex64::from_polar(1.0, t.n as f64 * x) * t.radial.eval(xi)).sum()
    }

    /// Sum of same-kind coefficients at each `n`.
    fn collected(&self) -> Vec<(i64, RadialFactor)> {
        let mut out: Vec<(i64, RadialFactor)> = Vec::new();
        for t in &self.terms {
            match out.iter_mut().find(|(n, r)| *n == t.n && r.same_kind(&t.radial)) {
                Some((_, r)) => *r = r.with_coefficient(r.coefficient() + t.radial.coefficient()),
                None => out.push((t.n, t.radial)),
            }
        }
        out
    }

    fn symmetry_defect(&self, sign: f64) -> f64 {
        let c = self.collected();
        let find = |n: i64, r: &RadialFactor| {
            c.iter().find(|(m, q)| *m == n && q.same_kind(r)).map(|(_, q)| q.coefficient()).unwrap_or(ZERO)
        };
        c.iter()
            .map(|(n, r)| (r.coefficient() - sign * find(-n, r).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Real-valued symbol: the term at `−n` is the conjugate of the term at `n`.
    pub fn is_real(&self, tol: f64) -> bool {
        self.symmetry_defect(1.0) <= tol
    }

    pub fn is_imaginary(&self, tol: f64) -> bool {
        self.symmetry_defect(-1.0) <= tol
    }
}

/// Poisson bracket `{f, g} = ∂_ξf ∂_xg − ∂_xf ∂_ξg` of ξ-affine symbols.
pub fn poisson_bracket(f: &SymbolRep, g: &SymbolRep) -> Result<SymbolRep> {
    if !f.is_affine() || !g.is_affine() {
        return Err(Error::InvalidParameter("closed-form bracket needs ξ-affine symbols".into()));
    }
    let mut terms = Vec::new();
    for a in &f.terms {
        for b in &g.terms {
            let (n, m) = (a.n as f64, b.n as f64);
            let i = Complex64::i();
            let (ca, cb) = (a.radial.coefficient(), b.radial.coefficient());
            let radial = match (a.radial, b.radial) {
                (RadialFactor::Constant(_), RadialFactor::Constant(_)) => continue,
                (RadialFactor::Linear(_), RadialFactor::Constant(_)) => RadialFactor::Constant(i * m * ca * cb),
                (RadialFactor::Constant(_), RadialFactor::Linear(_)) => RadialFactor::Constant(-i * n * ca * cb),
                _ => RadialFactor::Linear(i * (m - n) * ca * cb),
            };
            terms.push(SymbolTerm { n: a.n + b.n, radial });
        }
    }
    Ok(SymbolRep::new(terms, format!("{{{},{}}}", f.tag, g.tag)))
}

/// Banded matrix of `Op^w(a)` on modes `|k| ≤ K`; row/column `k + K`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeylMatrix {
    cutoff: usize,
    band: BandedMatrix,
    tag: String,
}

impl WeylMatrix {
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        2 * self.cutoff + 1
    }

    pub fn bandwidth(&self) -> usize {
        self.band.bandwidth()
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn banded(&self) -> &BandedMatrix {
        &self.band
    }

    /// Entry at modes `(k, j)`; zero outside the truncation.
    pub fn entry(&self, k: i64, j: i64) -> Complex64 {
        let kk = self.cutoff as i64;
        if k.abs() > kk || j.abs() > kk {
            return ZERO;
        }
        self.band.get((k + kk) as usize, (j + kk) as usize)
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self { cutoff: self.cutoff, band: self.band.shifted(0.0, c), tag: format!("{}*({c})", self.tag) }
    }

    pub fn apply(&self, u: &StateVector) -> Result<StateVector> {
        self.check(u)?;
        Ok(StateVector::from_coeffs(self.cutoff, self.band.matvec(u.coeffs()), u.time()))
    }

    fn check(&self, u: &StateVector) -> Result<()> {
        if u.cutoff() != self.cutoff {
            return Err(Error::DimensionError { expected: self.dim(), got: 2 * u.cutoff() + 1 });
        }
        Ok(())
    }

    fn defect(&self, sign: f64) -> f64 {
        let (n, b) = (self.dim(), self.bandwidth());
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i.saturating_sub(b)..=(i + b).min(n - 1) {
                worst = worst.max((self.band.get(i, j) - sign * self.band.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// `max |M − M*|`.
    pub fn hermitian_defect(&self) -> f64 {
        self.defect(1.0)
    }

    /// `max |M + M*|`.
    pub fn skew_hermitian_defect(&self) -> f64 {
        self.defect(-1.0)
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let n = self.dim();
        (0..n).map(|i| (0..n).map(|j| self.band.get(i, j)).collect()).collect()
    }

    /// CSV rows `k,j,re,im` for the nonzero entries.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "k,j,re,im")?;
        let kk = self.cutoff as i64;
        for k in -kk..=kk {
            for j in (k - self.bandwidth() as i64).max(-kk)..=(k + self.bandwidth() as i64).min(kk) {
                let v = self.entry(k, j);
                if v != ZERO {
                    writeln!(w, "{k},{j},{:e},{:e}", v.re, v.im)?;
                }
            }
        }
        Ok(())
    }
}

pub fn weyl_matrix(a: &SymbolRep, cutoff: usize) -> WeylMatrix {
    let kk = cutoff as i64;
    let b = a.bandwidth().min(2 * cutoff);
    let mut band = BandedMatrix::zeros(2 * cutoff + 1, b);
    for t in &a.terms {
        if t.n.unsigned_abs() as usize > 2 * cutoff {
            continue;
        }
        for j in (-kk).max(-kk - t.n)..=kk.min(kk - t.n) {
            let k = j + t.n;
            let eta = 0.5 * (k + j) as f64;
            let (r, c) = ((k + kk) as usize, (j + kk) as usize);
            band.set(r, c, band.get(r, c) + t.radial.eval(eta));
        }
    }
    WeylMatrix { cutoff, band, tag: a.tag.clone() }
}

/// `⟨Mu, u⟩ = Σ_k (Mu)_k conj(u_k)`.
pub fn quadratic_form(m: &WeylMatrix, u: &StateVector) -> Result<Complex64> {
    m.check(u)?;
    let mu = m.band.matvec(u.coeffs());
    Ok(mu.iter().zip(u.coeffs()).map(|(a, b)| a * b.conj()).sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutatorReport {
    /// Modes `|k|, |j| ≤ block` were compared.
    pub block: usize,
    pub max_discrepancy: f64,
    /// Largest entry of `i[Op f, Op g]` on the block, for scale.
    pub max_entry: f64,
    pub affine: bool,
}

/// Compare `i[Op(f), Op(g)]` with `Op({f, g})` on the central block `|k|, |j| ≤ K/2`.
pub fn commutator_check(f: &SymbolRep, g: &SymbolRep, cutoff: usize) -> CommutatorReport {
    let kk = cutoff as i64;
    let block = (cutoff / 2) as i64;
    let mf = weyl_matrix(f, cutoff);
    let mg = weyl_matrix(g, cutoff);
    let fc = f.collected();
    let gc = g.collected();
    let i = Complex64::i();
    let (mut worst, mut scale) = (0.0f64, 0.0f64);
    for k in -block..=block {
        for j in -block..=block {
            let mut comm = ZERO;
            for l in -kk..=kk {
                comm += mf.entry(k, l) * mg.entry(l, j) - mg.entry(k, l) * mf.entry(l, j);
            }
            comm *= i;
            let eta = 0.5 * (k + j) as f64;
            let mut bracket = ZERO;
            for (n, a) in &fc {
                for (m, b) in &gc {
                    if n + m != k - j {
                        continue;
                    }
                    bracket += a.derivative(eta) * (i * *m as f64) * b.eval(eta)
                        - (i * *n as f64) * a.eval(eta) * b.derivative(eta);
                }
            }
            worst = worst.max((comm - bracket).norm());
            scale = scale.max(comm.norm());
        }
    }
    CommutatorReport { block: block as usize, max_discrepancy: worst, max_entry: scale, affine: f.is_affine() && g.is_affine() }
}

/// Coefficients below this fraction of the largest are dropped from the ã symbol.
const PROFILE_TRIM: f64 = 1e-15;

/// Symbol and matrix of `ã(x, ξ) = (1 − χ(ξ))|ξ|·ã(x)`.
pub fn build_atilde(esc: &EscapeFunction, cutoff: usize) -> Result<(SymbolRep, WeylMatrix)> {
    if esc.delta_verified <= 0.0 {
        return Err(Error::EscapeConstructionFailed { x: f64::NAN, margin: esc.delta_verified });
    }
    Ok(atilde_from_profile(&esc.a_tilde, cutoff))
}

pub fn atilde_from_profile(profile: &TorusField, cutoff: usize) -> (SymbolRep, WeylMatrix) {
    let kmax = profile.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
    let keep = profile.cutoff().min(2 * cutoff) as i64;
    let terms = (-keep..=keep)
        .filter_map(|n| {
            let c = profile.coeff(n);
            (c.norm() > PROFILE_TRIM * kmax).then(|| SymbolTerm { n, radial: RadialFactor::ProfileAbsCut(c) })
        })
        .collect();
    let sym = SymbolRep::new(terms, "atilde");
    let m = weyl_matrix(&sym, cutoff);
    (sym, m)
}

/// Smallest region width accepted for the datum bump.
pub const MIN_REGION_WIDTH: f64 = 0.2;
/// Relative tail energy defining the numerical bandwidth of the bump.
const BUMP_TAIL: f64 = 1e-28;

/// Half-width of the erf taper in units of its error-function argument;
/// `erfc(6) ≈ 2e-17`, so the cut at the taper ends is below double precision.
const TAPER_SPAN: f64 = 6.0;

fn smooth_step(tau: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    if tau >= 1.0 {
        return 1.0;
    }
    0.5 * (1.0 + libm::erf(TAPER_SPAN * (2.0 * tau - 1.0)))
}

/// Bump on `[lo, hi]`: flat on the middle half, erf tapers reaching zero
/// slightly inside the endpoints.
pub fn region_bump(lo: f64, hi: f64, x: f64) -> f64 {
    let w = hi - lo;
    let y = lo + (x - lo).rem_euclid(TWO_PI);
    let (a, b) = (lo + w / 32.0, lo + w / 4.0);
    let (c, d) = (hi - w / 4.0, hi - w / 32.0);
    if y <= a || y >= d {
        0.0
    } else if y < b {
        smooth_step((y - a) / (b - a))
    } else if y <= c {
        1.0
    } else {
        smooth_step((d - y) / (d - c))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitialDatum {
    pub state: StateVector,
    /// Interval carrying the bump.
    pub support: (f64, f64),
    /// Modes needed to resolve the bump to relative tail `1e-14`.
    pub bump_bandwidth: usize,
}

/// `χ₃(x) e^{iξ₀x} / ‖χ₃‖` with `χ₃` supported in the widest component of `region`.
pub fn build_initial_datum(region: &IntervalUnion, xi0: i64, cutoff: usize) -> Result<StateVector> {
    Ok(initial_datum(region, xi0, cutoff)?.state)
}

pub fn initial_datum(region: &IntervalUnion, xi0: i64, cutoff: usize) -> Result<InitialDatum> {
    let iv = region.widest().ok_or(Error::RegionTooSmall { width: 0.0 })?;
    let width = iv.width();
    if width < MIN_REGION_WIDTH {
        return Err(Error::RegionTooSmall { width });
    }
    let (lo, hi) = (iv.lo, iv.lo + width.min(TWO_PI));
    let n = good_size(8 * cutoff + 64).max(4096);
    let mut buf: Vec<Complex64> = (0..n)
        .map(|j| Complex64::new(region_bump(lo, hi, TWO_PI * j as f64 / n as f64), 0.0))
        .collect();
    fft_in_place(&mut buf, false);
    let inv = 1.0 / n as f64;
    let coeff = |k: i64| buf[k.rem_euclid(n as i64) as usize] * inv;
    let total: f64 = buf.iter().map(|c| (c * inv).norm_sqr()).sum();
    let half = (n / 2) as i64;
    let mut tail = 0.0;
    let mut bandwidth = half as usize;
    for k in (1..half).rev() {
        tail += coeff(k).norm_sqr() + coeff(-k).norm_sqr();
        if tail > BUMP_TAIL * total {
            bandwidth = k as usize;
            break;
        }
    }
    if xi0.unsigned_abs() as usize + bandwidth > cutoff {
        return Err(Error::InvalidParameter(format!(
            "xi0 = {xi0} plus bump bandwidth {bandwidth} exceeds cutoff {cutoff}"
        )));
    }
    let kk = cutoff as i64;
    let coeffs: Vec<Complex64> = (-kk..=kk)
        .map(|k| if (k - xi0).abs() <= bandwidth as i64 { coeff(k - xi0) } else { ZERO })
        .collect();
    let norm = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let coeffs = coeffs.into_iter().map(|c| c / norm).collect();
    Ok(InitialDatum {
        state: StateVector::from_coeffs(cutoff, coeffs, 0.0),
        support: (lo, hi),
        bump_bandwidth: bandwidth,
    })
}

/// `A = ⟨Op(−ã)u, u⟩`.
pub fn virial(atilde: &WeylMatrix, u: &StateVector) -> Result<f64> {
    Ok(-quadratic_form(atilde, u)?.re)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_derivative() {
        let m = weyl_matrix(&SymbolRep::constant(1.0), 4);
        let d = weyl_matrix(&SymbolRep::d_dx(), 4);
        for k in -4..=4 {
            assert_eq!(m.entry(k, k), Complex64::new(1.0, 0.0));
            assert_eq!(d.entry(k, k), Complex64::new(0.0, k as f64));
        }
        assert_eq!(d.bandwidth(), 0);
    }

    #[test]
    fn chi_blend() {
        assert_eq!(chi(0.5), 1.0);
        assert_eq!(chi(1.0), 0.0);
        assert!((chi(0.75) - 0.5).abs() < 1e-15);
    }
}
