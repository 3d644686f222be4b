//! Resonant average, zero analysis of the averaged field and the
//! stable / unstable / degenerate trichotomy.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{grid, wrap_angle, SpaceTimeField, TorusField, TWO_PI};

/// Classifier thresholds. All of them are applied relative to `sup |X|`,
/// which makes the verdict invariant under positive rescaling of `V`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub zero_tol: f64,
    pub degeneracy_tol: f64,
    pub stable_margin: f64,
    pub resonance_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { zero_tol: 1e-10, degeneracy_tol: 1e-6, stable_margin: 1e-8, resonance_tol: 1e-12 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZeroKind {
    /// Sign change of `X`.
    Crossing,
    /// Local extremum with `|X|` below the zero tolerance and no sign change.
    Tangency,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroRecord {
    pub x0: f64,
    pub slope: f64,
    pub refinement_residual: f64,
    pub kind: ZeroKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Stable,
    Unstable,
    Degenerate,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Stable => "Stable",
            Verdict::Unstable => "Unstable",
            Verdict::Degenerate => "Degenerate",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub verdict: Verdict,
    pub zeros: Vec<ZeroRecord>,
    pub min_abs_value: f64,
    pub nu: f64,
    pub scale: f64,
    pub tolerances: Tolerances,
}

/// Resonant average plus the modes `k` whose partner `(k, mk)` fell outside `K_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResonantAverage {
    pub field: TorusField,
    pub truncated_modes: Vec<i64>,
}

fn check_m(m: i64) -> Result<()> {
    if m <= 0 {
        Err(Error::InvalidFrequency(m))
    } else {
        Ok(())
    }
}

/// `⟨V⟩_m(x) = Σ_k v_{k,mk} e^{ikx}` with a record of truncated modes.
pub fn resonant_average_checked(v: &SpaceTimeField, m: i64) -> Result<ResonantAverage> {
    check_m(m)?;
    let kx = v.kx();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * kx + 1];
    let mut truncated_modes = Vec::new();
    for k in -(kx as i64)..=kx as i64 {
        if (m * k).unsigned_abs() as usize <= v.kt() {
            coeffs[(k + kx as i64) as usize] = v.coeff(k, m * k);
        } else {
            truncated_modes.push(k);
        }
    }
    let field = if v.is_real() {
        TorusField::real_from_coeffs(kx, coeffs)
    } else {
        TorusField::from_coeffs(kx, coeffs)
    };
    Ok(ResonantAverage { field, truncated_modes })
}

pub fn resonant_average(v: &SpaceTimeField, m: i64) -> Result<TorusField> {
    Ok(resonant_average_checked(v, m)?.field)
}

/// True iff the non-resonant L² mass is at most `tol` times the total.
pub fn is_completely_resonant(v: &SpaceTimeField, m: i64, tol: f64) -> Result<bool> {
    check_m(m)?;
    let mut off = 0.0;
    let mut total = 0.0;
    for (k, l, c) in v.modes() {
        total += c.norm_sqr();
        if l != m * k {
            off += c.norm_sqr();
        }
    }
    Ok(off <= tol * tol * total)
}

/// Non-resonant part `V − ⟨V⟩_m(x + mt)`.
pub fn non_resonant_part(v: &SpaceTimeField, m: i64) -> Result<SpaceTimeField> {
    let avg = resonant_average(v, m)?;
    Ok(v.sub(&SpaceTimeField::lift_translated(&avg, m, v.kt())))
}

/// Root of `f` in a bracket `[a, b]` with `f(a)·f(b) ≤ 0`, by Newton steps
/// safeguarded with bisection.
pub(crate) fn bracketed_newton(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    mut a: f64,
    mut b: f64,
) -> f64 {
    let mut fa = f(a);
    if fa == 0.0 {
        return a;
    }
    if f(b) == 0.0 {
        return b;
    }
    let mut x = 0.5 * (a + b);
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if (fx < 0.0) == (fa < 0.0) {
            a = x;
            fa = fx;
        } else {
            b = x;
        }
        let d = df(x);
        let newton = if d != 0.0 { x - fx / d } else { f64::NAN };
        let next = if newton.is_finite() && newton > a.min(b) && newton < a.max(b) {
            newton
        } else {
            0.5 * (a + b)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * (1.0 + x.abs()) {
            return next;
        }
        x = next;
    }
    x
}

/// Zeros of a real field on T: sign changes between consecutive critical
/// points (where `X` is monotone), plus tangency candidates at critical
/// points with `|X|` below `zero_tol · sup|X|`.
pub fn find_zeros(x_field: &TorusField) -> Vec<ZeroRecord> {
    find_zeros_with(x_field, &Tolerances::default())
}

pub fn find_zeros_with(x_field: &TorusField, tol: &Tolerances) -> Vec<ZeroRecord> {
    let d1 = x_field.derivative();
    let d2 = d1.derivative();
    let f = |x: f64| x_field.eval_real(x);
    let df = |x: f64| d1.eval_real(x);
    let ddf = |x: f64| d2.eval_real(x);

    let n = (16 * x_field.cutoff()).max(256);
    let xs = grid(n);
    let scale = x_field.sup_norm(n);
    if scale == 0.0 {
        return vec![ZeroRecord { x0: 0.0, slope: 0.0, refinement_residual: 0.0, kind: ZeroKind::Tangency }];
    }

    let mut crit = Vec::new();
    let dv: Vec<f64> = xs.iter().map(|&x| df(x)).collect();
    for j in 0..n {
        let (a, b) = (xs[j], xs[j] + TWO_PI / n as f64);
        let (fa, fb) = (dv[j], dv[(j + 1) % n]);
        if fa == 0.0 || (fa < 0.0) != (fb < 0.0) && fb != 0.0 {
            crit.push(bracketed_newton(df, ddf, a, b));
        }
    }

    let mut out: Vec<ZeroRecord> = Vec::new();
    let threshold = tol.zero_tol * scale;
    for &c in &crit {
        let v = f(c);
        if v.abs() <= threshold {
            out.push(ZeroRecord {
                x0: wrap_angle(c),
                slope: df(c),
                refinement_residual: v.abs(),
                kind: ZeroKind::Tangency,
            });
        }
    }

    if crit.is_empty() {
        // Constant field with nonzero value: no zeros.
        return out;
    }
    let nc = crit.len();
    for i in 0..nc {
        let a = crit[i];
        let mut b = crit[(i + 1) % nc];
        if b <= a {
            b += TWO_PI;
        }
        let (fa, fb) = (f(a), f(b));
        if fa.abs() <= threshold || fb.abs() <= threshold {
            continue;
        }
        if (fa < 0.0) != (fb < 0.0) {
            let z = bracketed_newton(f, df, a, b);
            out.push(ZeroRecord {
                x0: wrap_angle(z),
                slope: df(z),
                refinement_residual: f(z).abs(),
                kind: ZeroKind::Crossing,
            });
        }
    }
    out.sort_by(|a, b| a.x0.total_cmp(&b.x0));
    out
}

/// Minimum of `|X|` over the critical points and a fine grid.
fn min_abs(x_field: &TorusField, zeros: &[ZeroRecord]) -> f64 {
    if zeros.iter().any(|z| z.kind == ZeroKind::Crossing) {
        return zeros.iter().map(|z| z.refinement_residual).fold(f64::INFINITY, f64::min);
    }
    let d1 = x_field.derivative();
    let d2 = d1.derivative();
    let n = (16 * x_field.cutoff()).max(256);
    let xs = grid(n);
    let mut best = f64::INFINITY;
    for j in 0..n {
        let a = xs[j];
        let b = a + TWO_PI / n as f64;
        let (da, db) = (d1.eval_real(a), d1.eval_real(b));
        best = best.min(x_field.eval_real(a).abs());
        if (da < 0.0) != (db < 0.0) {
            let c = bracketed_newton(|x| d1.eval_real(x), |x| d2.eval_real(x), a, b);
            best = best.min(x_field.eval_real(c).abs());
        }
    }
    best
}

/// Trichotomy for a field on T (the averaged coefficient).
pub fn classify_profile(x_field: &TorusField, tol: &Tolerances) -> ClassificationReport {
    let zeros = find_zeros_with(x_field, tol);
    let n = (16 * x_field.cutoff()).max(256);
    let scale = x_field.sup_norm(n);
    let min_abs_value = if scale == 0.0 { 0.0 } else { min_abs(x_field, &zeros) };
    let nu = zeros.iter().map(|z| z.slope.abs()).fold(f64::INFINITY, f64::min);
    let nu = if zeros.is_empty() { 0.0 } else { nu };

    let verdict = if scale == 0.0 {
        Verdict::Degenerate
    } else if zeros.is_empty() {
        if min_abs_value > tol.stable_margin * scale {
            Verdict::Stable
        } else {
            Verdict::Degenerate
        }
    } else if zeros
        .iter()
        .any(|z| z.kind == ZeroKind::Tangency || z.slope.abs() <= tol.degeneracy_tol * scale)
    {
        Verdict::Degenerate
    } else {
        Verdict::Unstable
    };
    ClassificationReport { verdict, zeros, min_abs_value, nu, scale, tolerances: *tol }
}

pub fn classify(v: &SpaceTimeField, m: i64, tol: &Tolerances) -> Result<ClassificationReport> {
    let avg = resonant_average(v, m)?;
    Ok(classify_profile(&avg, tol))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizeOptions {
    pub seed: u64,
    pub max_attempts: usize,
    pub tolerances: Tolerances,
}

impl Default for RegularizeOptions {
    fn default() -> Self {
        Self { seed: 0, max_attempts: 64, tolerances: Tolerances::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Regularized {
    pub field: SpaceTimeField,
    /// Constant `ε₀` subtracted from the resonant average; 0 when unchanged.
    pub shift: f64,
    pub attempts: usize,
    pub report: ClassificationReport,
}

impl Regularized {
    /// Reported distance to the input: sup-norm of the coefficient difference.
    pub fn distance(&self) -> f64 {
        self.shift.abs()
    }
}

/// Replace `⟨V⟩_m` by `⟨V⟩_m − ε₀` for a sampled regular value `ε₀ ∈ [−ε̄, ε̄]`.
/// Only the `(0,0)` mode changes, so `W₀ = V − ε₀`.
pub fn regularize(
    v: &SpaceTimeField,
    m: i64,
    budget: f64,
    opts: &RegularizeOptions,
) -> Result<Regularized> {
    if !(budget > 0.0) {
        return Err(Error::InvalidParameter(format!("budget must be positive, got {budget}")));
    }
    let report = classify(v, m, &opts.tolerances)?;
    if report.verdict != Verdict::Degenerate {
        return Ok(Regularized { field: v.clone(), shift: 0.0, attempts: 0, report });
    }
    let avg = resonant_average(v, m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for attempt in 1..=opts.max_attempts {
        let eps0: f64 = rng.random_range(-budget..budget);
        if eps0 == 0.0 {
            continue;
        }
        let candidate = classify_profile(&avg.add_constant(-eps0), &opts.tolerances);
        if candidate.verdict != Verdict::Degenerate {
            return Ok(Regularized {
                field: v.add_constant(-eps0),
                shift: eps0,
                attempts: attempt,
                report: candidate,
            });
        }
    }
    Err(Error::RegularizationFailed { attempts: opts.max_attempts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn cosine_zeros() {
        let x = TorusField::from_real_fn(1, f64::cos);
        let z = find_zeros(&x);
        assert_eq!(z.len(), 2);
        assert!((z[0].x0 - PI / 2.0).abs() < 1e-13 && (z[0].slope + 1.0).abs() < 1e-12);
        assert!((z[1].x0 - 1.5 * PI).abs() < 1e-13 && (z[1].slope - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tangency_flagged() {
        let x = TorusField::from_real_fn(1, |x| 1.0 + x.cos());
        let z = find_zeros(&x);
        assert_eq!(z.len(), 1);
        assert_eq!(z[0].kind, ZeroKind::Tangency);
        assert!((z[0].x0 - PI).abs() < 1e-8);
        let r = classify_profile(&x, &Tolerances::default());
        assert_eq!(r.verdict, Verdict::Degenerate);
    }

    #[test]
    fn shifted_cosine_has_no_zeros() {
        let x = TorusField::from_real_fn(1, |x| 2.0 + x.cos());
        assert!(find_zeros(&x).is_empty());
        let r = classify_profile(&x, &Tolerances::default());
        assert_eq!(r.verdict, Verdict::Stable);
        assert!((r.min_abs_value - 1.0).abs() < 1e-12);
    }
}
