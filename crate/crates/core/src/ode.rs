//! Adaptive Dormand–Prince 5(4) integrator with event location.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn with_rtol(rtol: f64) -> Self {
        Self { rtol, atol: rtol, max_steps: 1_000_000 }
    }
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self::with_rtol(1e-11)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeOutcome<const D: usize> {
    pub t: f64,
    pub y: [f64; D],
    /// True when the integration stopped at a sign change of the event function.
    pub event: bool,
    pub steps: usize,
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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy<const D: usize>(y: &[f64; D], terms: &[(f64, &[f64; D])], h: f64) -> [f64; D] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..D {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// One Dormand–Prince step; returns the 5th-order solution, its derivative and the error estimate.
fn step<const D: usize, F>(f: &mut F, t: f64, y: &[f64; D], k1: &[f64; D], h: f64) -> ([f64; D], [f64; D], [f64; D])
where
    F: FnMut(f64, &[f64; D]) -> [f64; D],
{
    let k2 = f(t + C2 * h, &axpy(y, &[(A21, k1)], h));
    let k3 = f(t + C3 * h, &axpy(y, &[(A31, k1), (A32, &k2)], h));
    let k4 = f(t + C4 * h, &axpy(y, &[(A41, k1), (A42, &k2), (A43, &k3)], h));
    let k5 = f(t + C5 * h, &axpy(y, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)], h));
    let k6 = f(t + h, &axpy(y, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], h));
    let y5 = axpy(y, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], h);
    let k7 = f(t + h, &y5);
    let mut err = [0.0; D];
    for i in 0..D {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    (y5, k7, err)
}

/// Integrate `y' = f(t, y)` from `t0` to `t_end` (either direction).
/// If `event` is given, stop at the first sign change of `event(t, y)` relative
/// to its initial sign; an initial value of exactly zero is an immediate event.
pub fn integrate<const D: usize, F>(
    mut f: F,
    t0: f64,
    y0: [f64; D],
    t_end: f64,
    opts: &OdeOptions,
    mut event: Option<&mut dyn FnMut(f64, &[f64; D]) -> f64>,
) -> Result<OdeOutcome<D>>
where
    F: FnMut(f64, &[f64; D]) -> [f64; D],
{
    let span = t_end - t0;
    if span == 0.0 {
        return Ok(OdeOutcome { t: t0, y: y0, event: false, steps: 0 });
    }
    let dir = span.signum();
    let mut g_prev = match event.as_mut() {
        Some(g) => {
            let g0 = g(t0, &y0);
            if g0 == 0.0 {
                return Ok(OdeOutcome { t: t0, y: y0, event: true, steps: 0 });
            }
            g0
        }
        None => 0.0,
    };

    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    let mut h = initial_step(&mut f, t, &y, &k1, span, opts);
    h *= dir;
    let mut steps = 0;
    while (t_end - t) * dir > 0.0 {
        if steps >= opts.max_steps {
            return Err(Error::IntegrationFailure(format!("step budget exhausted at t = {t:.6}")));
        }
        if (t + h - t_end) * dir > 0.0 {
            h = t_end - t;
        }
        let (y_new, k_new, err) = step(&mut f, t, &y, &k1, h);
        let mut e2 = 0.0;
        for i in 0..D {
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            e2 += (err[i] / sc).powi(2);
        }
        let e = (e2 / D as f64).sqrt();
        if !e.is_finite() {
            h *= 0.25;
        } else if e <= 1.0 {
            steps += 1;
            if let Some(g) = event.as_mut() {
                let g_new = g(t + h, &y_new);
                if g_new == 0.0 || (g_new < 0.0) != (g_prev < 0.0) {
                    return locate_event(&mut f, g, t, &y, &k1, h, g_prev, g_new, steps);
                }
                g_prev = g_new;
            }
            t += h;
            y = y_new;
            k1 = k_new;
            let fac = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else {
            h *= (0.9 * e.powf(-0.2)).clamp(0.1, 0.9);
        }
        if h.abs() <= 1e-14 * t.abs().max(1.0) {
            return Err(Error::IntegrationFailure(format!("step size collapsed at t = {t:.6}")));
        }
    }
    Ok(OdeOutcome { t: t_end, y, event: false, steps })
}

/// Starting step from the first and second derivative estimates (Hairer–Wanner).
fn initial_step<const D: usize, F>(f: &mut F, t: f64, y: &[f64; D], k1: &[f64; D], span: f64, opts: &OdeOptions) -> f64
where
    F: FnMut(f64, &[f64; D]) -> [f64; D],
{
    let sc: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let norm = |v: &[f64]| (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / D as f64).sqrt();
    let d0 = norm(y);
    let d1 = norm(k1);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 }.min(span.abs());
    let sgn = span.signum();
    let y1 = axpy(y, &[(1.0, k1)], h0 * sgn);
    let k2 = f(t + h0 * sgn, &y1);
    let diff: Vec<f64> = k2.iter().zip(k1).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff) / h0;
    let big = d1.max(d2);
    let h1 = if big <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / big).powf(0.2) };
    (100.0 * h0).min(h1).min(span.abs())
}

/// Illinois iteration on the step length `s ∈ [0, h]`, evaluating states by
/// a fresh Dormand–Prince step of length `s`.
#[allow(clippy::too_many_arguments)]
fn locate_event<const D: usize, F>(
    f: &mut F,
    g: &mut dyn FnMut(f64, &[f64; D]) -> f64,
    t: f64,
    y: &[f64; D],
    k1: &[f64; D],
    h: f64,
    g0: f64,
    g1: f64,
    steps: usize,
) -> Result<OdeOutcome<D>>
where
    F: FnMut(f64, &[f64; D]) -> [f64; D],
{
    let (mut a, mut b) = (0.0, h);
    let (mut ga, mut gb) = (g0, g1);
    if gb == 0.0 {
        let (yb, _, _) = step(f, t, y, k1, b);
        return Ok(OdeOutcome { t: t + b, y: yb, event: true, steps });
    }
    let mut side = 0;
    let mut best = (b, step(f, t, y, k1, b).0);
    for _ in 0..100 {
        let s = (a * gb - b * ga) / (gb - ga);
        let s = if s.is_finite() && (s - a) * (s - b) < 0.0 { s } else { 0.5 * (a + b) };
        let (ys, _, _) = step(f, t, y, k1, s);
        let gs = g(t + s, &ys);
        best = (s, ys);
        if gs == 0.0 || (b - a).abs() <= 1e-15 * (t.abs() + h.abs()).max(1.0) {
            break;
        }
        if (gs < 0.0) == (gb < 0.0) {
            b = s;
            gb = gs;
            if side == -1 {
                ga *= 0.5;
            }
            side = -1;
        } else {
            a = s;
            ga = gs;
            if side == 1 {
                gb *= 0.5;
            }
            side = 1;
        }
    }
    Ok(OdeOutcome { t: t + best.0, y: best.1, event: true, steps })
}
