//! Flows of `ẋ = X(x)` and of the lift `(ẋ, ξ̇) = (X, −ξX')` to `T*T`,
//! the attractor/repellor structure of a non-degenerate `X`, and the escape
//! function `a(x, ξ) = |ξ| ã(x)`.
//!
//! Every ingredient of the escape function is even and 1-homogeneous in `ξ`
//! and the base flow does not see `ξ`, so everything reduces to profiles on
//! the circle. Along the flow `|Ξ^s| = |ξ| J_s` with `(ln J)' = −X'(x_s)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{integrate, OdeOptions};
use crate::resonance::{find_zeros, ZeroKind, ZeroRecord};
use crate::spectral::{grid, wrap_angle, TorusField, TWO_PI};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CotangentPoint {
    pub x: f64,
    pub xi: f64,
}

/// Solution of `ẋ = X(x)` at time `t` (lifted to ℝ, not reduced mod 2π).
pub fn flow_torus(x_field: &TorusField, x0: f64, t: f64, rtol: f64) -> Result<f64> {
    let out = integrate(
        |_, y: &[f64; 1]| [x_field.eval_real(y[0])],
        0.0,
        [x0],
        t,
        &OdeOptions::with_rtol(rtol),
        None,
    )?;
    Ok(out.y[0])
}

/// Hamiltonian flow of `h = ξX(x)`. The fiber is integrated as `ln|ξ|`, which keeps
/// the sign of `ξ` and the invariant set `{ξ = 0}` exact.
pub fn flow_cotangent(x_field: &TorusField, z0: CotangentPoint, t: f64, rtol: f64) -> Result<CotangentPoint> {
    let dx = x_field.derivative();
    let out = integrate(
        |_, y: &[f64; 2]| [x_field.eval_real(y[0]), -dx.eval_real(y[0])],
        0.0,
        [z0.x, 0.0],
        t,
        &OdeOptions::with_rtol(rtol),
        None,
    )?;
    Ok(CotangentPoint { x: out.y[0], xi: z0.xi * out.y[1].exp() })
}

/// Arc `[lo, hi]` of the circle, `lo ∈ [0, 2π)`, `hi ≥ lo` (may exceed 2π).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        wrap_angle(0.5 * (self.lo + self.hi))
    }

    pub fn contains(&self, x: f64) -> bool {
        let d = (x - self.lo).rem_euclid(TWO_PI);
        d <= self.width()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntervalUnion {
    pub intervals: Vec<Interval>,
}

impl IntervalUnion {
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|i| i.contains(x))
    }

    pub fn widest(&self) -> Option<Interval> {
        self.intervals.iter().copied().max_by(|a, b| a.width().total_cmp(&b.width()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowStructure {
    /// All zeros of `X`, sorted by location.
    pub zeros: Vec<ZeroRecord>,
    /// Radius of the neighborhood `U` around each zero (aligned with `zeros`).
    pub radii: Vec<f64>,
    pub k_plus: Vec<ZeroRecord>,
    pub k_minus: Vec<ZeroRecord>,
    pub nu: f64,
    pub u_plus: IntervalUnion,
    pub u_minus: IntervalUnion,
    /// Where the escape function satisfies `ã ≤ −1/2`; filled by [`build_escape`].
    pub w_region: IntervalUnion,
    /// Largest distance to the limiting zero seen in the convergence check.
    pub convergence_distance: f64,
}

/// Position of a non-stationary point between two consecutive zeros.
#[derive(Clone, Copy, Debug)]
struct Arc {
    /// Indices of the zero the flow leaves and the zero it approaches.
    source: usize,
    sink: usize,
    /// Unwrapped coordinates with `x` strictly between `source_x` and `sink_x`.
    source_x: f64,
    sink_x: f64,
    x: f64,
}

impl Arc {
    fn dir(&self) -> f64 {
        (self.sink_x - self.source_x).signum()
    }
}

/// Points closer than this to a zero are treated as stationary.
const STATIONARY_TOL: f64 = 1e-13;

impl FlowStructure {
    fn zero_index_at(&self, x: f64) -> Option<usize> {
        self.zeros.iter().position(|z| circle_distance(z.x0, x) <= STATIONARY_TOL)
    }

    fn arc_of(&self, x_field: &TorusField, x: f64) -> Option<Arc> {
        let x = wrap_angle(x);
        if self.zero_index_at(x).is_some() {
            return None;
        }
        let n = self.zeros.len();
        let mut right = self.zeros.iter().position(|z| z.x0 > x).unwrap_or(n);
        let mut x_un = x;
        if right == n {
            right = 0;
        }
        let left = (right + n - 1) % n;
        let mut lo = self.zeros[left].x0;
        let mut hi = self.zeros[right].x0;
        if hi <= lo {
            // Arc crosses 0.
            if x_un < lo {
                x_un += TWO_PI;
            }
            hi += TWO_PI;
        }
        if lo > x_un {
            lo -= TWO_PI;
        }
        if x_field.eval_real(x) > 0.0 {
            Some(Arc { source: left, sink: right, source_x: lo, sink_x: hi, x: x_un })
        } else {
            Some(Arc { source: right, sink: left, source_x: hi, sink_x: lo, x: x_un })
        }
    }

    pub fn is_attracting(&self, idx: usize) -> bool {
        self.zeros[idx].slope < 0.0
    }
}

fn circle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TWO_PI);
    d.min(TWO_PI - d)
}

/// Attractor/repellor decomposition of a non-degenerate `X`.
pub fn analyze_flow(x_field: &TorusField) -> Result<FlowStructure> {
    let zeros = find_zeros(x_field);
    if zeros.is_empty() {
        return Err(Error::NoHyperbolicStructure);
    }
    let scale = x_field.sup_norm(256);
    for z in &zeros {
        if z.kind == ZeroKind::Tangency || z.slope.abs() <= 1e-6 * scale {
            return Err(Error::DegenerateVectorField { x0: z.x0, slope: z.slope });
        }
    }
    let nu = zeros.iter().map(|z| z.slope.abs()).fold(f64::INFINITY, f64::min);
    let n = zeros.len();
    let min_spacing = (0..n)
        .map(|i| {
            let next = if i + 1 < n { zeros[i + 1].x0 } else { zeros[0].x0 + TWO_PI };
            next - zeros[i].x0
        })
        .fold(f64::INFINITY, f64::min);
    let cap = 0.5 * min_spacing;
    let dx = x_field.derivative();
    let radii: Vec<f64> = zeros
        .iter()
        .map(|z| {
            let steps = 2000;
            let dr = cap / steps as f64;
            let mut r = 0.0;
            for s in 1..=steps {
                let rr = s as f64 * dr;
                let ok = [z.x0 - rr, z.x0 + rr]
                    .iter()
                    .all(|&x| (dx.eval_real(x) - z.slope).abs() <= 0.25 * nu);
                if !ok {
                    break;
                }
                r = rr;
            }
            r
        })
        .collect();
    let mut u_plus = IntervalUnion::default();
    let mut u_minus = IntervalUnion::default();
    let mut k_plus = Vec::new();
    let mut k_minus = Vec::new();
    for (z, &r) in zeros.iter().zip(&radii) {
        let iv = Interval { lo: wrap_angle(z.x0 - r), hi: wrap_angle(z.x0 - r) + 2.0 * r };
        if z.slope < 0.0 {
            k_plus.push(*z);
            u_plus.intervals.push(iv);
        } else {
            k_minus.push(*z);
            u_minus.intervals.push(iv);
        }
    }
    let mut fs = FlowStructure {
        zeros,
        radii,
        k_plus,
        k_minus,
        nu,
        u_plus,
        u_minus,
        w_region: IntervalUnion::default(),
        convergence_distance: 0.0,
    };

    let horizon = 40.0 / nu;
    let mut worst: f64 = 0.0;
    for j in 0..32 {
        let x0 = TWO_PI * (j as f64 + 0.5 + 0.1234567) / 32.0;
        if fs.zero_index_at(x0).is_some() {
            continue;
        }
        let fwd = flow_torus(x_field, x0, horizon, 1e-10)?;
        let bwd = flow_torus(x_field, x0, -horizon, 1e-10)?;
        let d_plus = fs.k_plus.iter().map(|z| circle_distance(z.x0, fwd)).fold(f64::INFINITY, f64::min);
        let d_minus = fs.k_minus.iter().map(|z| circle_distance(z.x0, bwd)).fold(f64::INFINITY, f64::min);
        worst = worst.max(d_plus).max(d_minus);
    }
    if worst > 1e-3 {
        return Err(Error::IntegrationFailure(format!(
            "trajectories did not settle on K± (distance {worst:.3e})"
        )));
    }
    fs.convergence_distance = worst;
    Ok(fs)
}

/// Signed transit time `t̃(x)`; infinite on the zero sets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TransitTime {
    Finite(f64),
    PlusInfinity,
    MinusInfinity,
}

impl TransitTime {
    pub fn clipped(&self, t_max: f64) -> f64 {
        match *self {
            TransitTime::Finite(t) => t.clamp(-t_max, t_max),
            TransitTime::PlusInfinity => t_max,
            TransitTime::MinusInfinity => -t_max,
        }
    }
}

fn event_options() -> OdeOptions {
    OdeOptions::with_rtol(1e-11)
}

/// Time `t̃` with `t̃(X^t(x)) = t̃(x) + t`, zero on `∂U⁻`.
pub fn transit_time(fs: &FlowStructure, x_field: &TorusField, x: f64) -> Result<TransitTime> {
    let arc = match fs.arc_of(x_field, x) {
        Some(a) => a,
        None => {
            let idx = fs.zero_index_at(x).expect("stationary point is a zero");
            return Ok(if fs.is_attracting(idx) {
                TransitTime::PlusInfinity
            } else {
                TransitTime::MinusInfinity
            });
        }
    };
    let boundary = arc.source_x + arc.dir() * fs.radii[arc.source];
    let depth = (arc.x - arc.source_x) * arc.dir();
    let r = fs.radii[arc.source];
    if depth == r {
        return Ok(TransitTime::Finite(0.0));
    }
    let limit = 400.0 / fs.nu;
    let t_end = if depth < r { limit } else { -limit };
    let mut g = |_: f64, y: &[f64; 1]| y[0] - boundary;
    let out = integrate(
        |_, y: &[f64; 1]| [x_field.eval_real(y[0])],
        0.0,
        [arc.x],
        t_end,
        &event_options(),
        Some(&mut g),
    )?;
    if !out.event {
        return Err(Error::IntegrationFailure(format!("no crossing of ∂U⁻ from x = {x:.6}")));
    }
    Ok(TransitTime::Finite(-out.t))
}

/// Smooth non-decreasing step: 0 for `τ ≤ −s`, `sτ` on `[s, 1/s − s]`, 1 for
/// `τ ≥ 1/s + s`, quadratic blends on the two corners. `sup |φ'| = s`.
pub fn phi(s: f64, tau: f64) -> f64 {
    let top = 1.0 / s;
    if tau <= -s {
        0.0
    } else if tau < s {
        0.25 * (tau + s) * (tau + s)
    } else if tau <= top - s {
        s * tau
    } else if tau < top + s {
        let d = top + s - tau;
        1.0 - 0.25 * d * d
    } else {
        1.0
    }
}

pub fn phi_derivative(s: f64, tau: f64) -> f64 {
    let top = 1.0 / s;
    if tau <= -s || tau >= top + s {
        0.0
    } else if tau < s {
        0.5 * (tau + s)
    } else if tau <= top - s {
        s
    } else {
        0.5 * (top + s - tau)
    }
}

/// Data needed to evaluate the construction at any point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Geometry {
    /// `δ/2` with `δ = ν/2`.
    floor: f64,
    /// Blend lengths leaving each zero's neighborhood towards larger / smaller `x`.
    blend_up: Vec<f64>,
    blend_down: Vec<f64>,
}

/// Values of every construction stage at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeSample {
    pub x: f64,
    pub m_tilde: f64,
    /// NaN on `K⁻`, where `ℓ⁺` is undefined.
    pub ell_plus: f64,
    /// NaN on `K⁺`, where `ℓ⁻` is undefined.
    pub ell_minus: f64,
    pub t_tilde: TransitTime,
    pub eta: f64,
    pub a_tilde: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeOptions {
    /// Cutoff of the resampled profile.
    pub profile_cutoff: usize,
    pub verify_grid: usize,
}

impl Default for EscapeOptions {
    fn default() -> Self {
        Self { profile_cutoff: 256, verify_grid: 4096 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeFunction {
    pub x_field: TorusField,
    pub flow: FlowStructure,
    pub sigma: f64,
    pub t_max: f64,
    /// `ã`, so that `a(x, ξ) = |ξ| ã(x)`.
    pub a_tilde: TorusField,
    pub eta_sigma: TorusField,
    pub samples: Vec<EscapeSample>,
    /// Grid estimate of `max |ℓ⁺ − ℓ⁻|`.
    pub c_estimate: f64,
    pub delta_verified: f64,
    geometry: Geometry,
}

impl EscapeFunction {
    /// CSV rows `x,m_tilde,ell_plus,ell_minus,t_tilde,eta,a_tilde,a_tilde_resampled`
    /// over the construction samples; infinite transit times are written as `inf`/`-inf`.
    pub fn profile_csv(&self) -> String {
        let mut out = String::from("x,m_tilde,ell_plus,ell_minus,t_tilde,eta,a_tilde,a_tilde_resampled\n");
        for s in &self.samples {
            let t = match s.t_tilde {
                TransitTime::Finite(t) => t,
                TransitTime::PlusInfinity => f64::INFINITY,
                TransitTime::MinusInfinity => f64::NEG_INFINITY,
            };
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                s.x,
                s.m_tilde,
                s.ell_plus,
                s.ell_minus,
                t,
                s.eta,
                s.a_tilde,
                self.a_tilde.eval_real(s.x)
            ));
        }
        out
    }

    /// `k̃` on the neighborhoods: +1 on `U⁺`, −1 on `U⁻`, `None` elsewhere.
    pub fn k_tilde(&self, x: f64) -> Option<f64> {
        let fs = &self.flow;
        fs.zeros.iter().zip(&fs.radii).find_map(|(z, &r)| {
            (circle_distance(z.x0, x) <= r).then(|| if z.slope < 0.0 { 1.0 } else { -1.0 })
        })
    }

    /// Positive extension `m̃ ≥ ν/4` of `{h, k}/|ξ|`.
    pub fn m_tilde(&self, x: f64) -> f64 {
        let fs = &self.flow;
        let dx = self.x_field.derivative();
        let floor = self.geometry.floor;
        let local = |i: usize, y: f64| {
            let k = if fs.zeros[i].slope < 0.0 { 1.0 } else { -1.0 };
            -dx.eval_real(y) * k
        };
        for (i, (z, &r)) in fs.zeros.iter().zip(&fs.radii).enumerate() {
            if circle_distance(z.x0, x) <= r {
                return local(i, x);
            }
        }
        let mut value = floor;
        for (i, (z, &r)) in fs.zeros.iter().zip(&fs.radii).enumerate() {
            let up = (x - (z.x0 + r)).rem_euclid(TWO_PI);
            let down = ((z.x0 - r) - x).rem_euclid(TWO_PI);
            for (d, len) in [(up, self.geometry.blend_up[i]), (down, self.geometry.blend_down[i])] {
                if d < len {
                    let w = 0.5 * (1.0 + (std::f64::consts::PI * d / len).cos());
                    value += w * (local(i, x) - floor);
                }
            }
        }
        value.max(floor)
    }

    fn ell(&self, x: f64, forward: bool) -> Result<f64> {
        let fs = &self.flow;
        let arc = match fs.arc_of(&self.x_field, x) {
            Some(a) => a,
            None => {
                let idx = fs.zero_index_at(x).unwrap();
                let attracting = fs.is_attracting(idx);
                return Ok(match (forward, attracting) {
                    (true, true) => 1.0,
                    (false, false) => -1.0,
                    _ => f64::NAN,
                });
            }
        };
        // Target neighborhood: the sink's U⁺ forward, the source's U⁻ backward.
        let (target, target_x, k_end) = if forward {
            (arc.sink, arc.sink_x, 1.0)
        } else {
            (arc.source, arc.source_x, -1.0)
        };
        let r = fs.radii[target];
        if (arc.x - target_x).abs() <= r {
            return Ok(k_end);
        }
        let boundary = if forward { target_x - arc.dir() * r } else { target_x + arc.dir() * r };
        let dx = self.x_field.derivative();
        let sgn = if forward { 1.0 } else { -1.0 };
        let rhs = |_: f64, y: &[f64; 3]| {
            let j = y[1].exp();
            [
                sgn * self.x_field.eval_real(y[0]),
                -sgn * dx.eval_real(y[0]),
                self.m_tilde(y[0]) * j,
            ]
        };
        let mut g = |_: f64, y: &[f64; 3]| y[0] - boundary;
        let out = integrate(rhs, 0.0, [arc.x, 0.0, 0.0], 400.0 / fs.nu, &event_options(), Some(&mut g))?;
        if !out.event {
            return Err(Error::IntegrationFailure(format!("no entry into U from x = {x:.6}")));
        }
        let j = out.y[1].exp();
        Ok(if forward { -out.y[2] + j } else { out.y[2] - j })
    }

    /// `ℓ̃⁺(x) = −∫₀^{t₀} m̃(x_s) J_s ds + J_{t₀}`, `t₀` = entry time into `U⁺`.
    pub fn ell_plus(&self, x: f64) -> Result<f64> {
        self.ell(x, true)
    }

    /// `ℓ̃⁻(x) = ∫_{−t₀}^0 m̃(x_s) J_s ds − J_{−t₀}`, `t₀` = entry time into `U⁻` backwards.
    pub fn ell_minus(&self, x: f64) -> Result<f64> {
        self.ell(x, false)
    }

    pub fn transit_time(&self, x: f64) -> Result<TransitTime> {
        transit_time(&self.flow, &self.x_field, x)
    }

    /// `η_σ = φ_{σ/10} ∘ t̃` with `t̃` clipped to `[−T_max, T_max]`.
    pub fn eta(&self, x: f64) -> Result<f64> {
        Ok(self.eta_of(self.transit_time(x)?))
    }

    fn eta_of(&self, tt: TransitTime) -> f64 {
        match tt {
            TransitTime::PlusInfinity => 1.0,
            TransitTime::MinusInfinity => 0.0,
            TransitTime::Finite(t) => phi(0.1 * self.sigma, t.clamp(-self.t_max, self.t_max)),
        }
    }

    /// Every construction stage evaluated exactly (without resampling) at `x`.
    pub fn profile_at(&self, x: f64) -> Result<EscapeSample> {
        let x = wrap_angle(x);
        let t_tilde = self.transit_time(x)?;
        let eta = self.eta_of(t_tilde);
        let ell_plus = self.ell_plus(x)?;
        let ell_minus = self.ell_minus(x)?;
        let a_tilde = if eta == 1.0 {
            ell_plus
        } else if eta == 0.0 {
            ell_minus
        } else {
            eta * ell_plus + (1.0 - eta) * ell_minus
        };
        Ok(EscapeSample { x, m_tilde: self.m_tilde(x), ell_plus, ell_minus, t_tilde, eta, a_tilde })
    }

    /// `a(x, ξ) = |ξ| ã(x)` from the resampled profile.
    pub fn symbol(&self, x: f64, xi: f64) -> f64 {
        xi.abs() * self.a_tilde.eval_real(x)
    }
}

fn blend_length(dx: &TorusField, start: f64, dir: f64, slope_sign: f64, max_len: f64, floor: f64) -> f64 {
    let steps = 1000;
    let h = max_len / steps as f64;
    for s in 1..=steps {
        let x = start + dir * s as f64 * h;
        // local bracket −X'·k̃ with k̃ = −sign(slope)
        let m = dx.eval_real(x) * slope_sign;
        if m <= floor {
            return (s - 1) as f64 * h;
        }
    }
    max_len
}

/// Escape function for a non-degenerate `X` with gluing parameter `σ`.
pub fn build_escape(x_field: &TorusField, sigma: f64) -> Result<EscapeFunction> {
    build_escape_with(x_field, sigma, &EscapeOptions::default())
}

pub fn build_escape_with(x_field: &TorusField, sigma: f64, opts: &EscapeOptions) -> Result<EscapeFunction> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let x_field = x_field.real_part();
    let flow = analyze_flow(&x_field)?;
    let nu = flow.nu;
    let floor = 0.25 * nu;
    let dx = x_field.derivative();
    let n = flow.zeros.len();
    let mut blend_up = vec![0.0; n];
    let mut blend_down = vec![0.0; n];
    for i in 0..n {
        let j = (i + 1) % n;
        let zi = flow.zeros[i].x0;
        let mut zj = flow.zeros[j].x0;
        if zj <= zi {
            zj += TWO_PI;
        }
        let gap = (zj - flow.radii[j]) - (zi + flow.radii[i]);
        let half = 0.5 * gap.max(0.0);
        blend_up[i] = blend_length(&dx, zi + flow.radii[i], 1.0, flow.zeros[i].slope.signum(), half, floor);
        blend_down[j] = blend_length(&dx, zj - flow.radii[j], -1.0, flow.zeros[j].slope.signum(), half, floor);
    }
    let mut esc = EscapeFunction {
        x_field: x_field.clone(),
        flow,
        sigma,
        t_max: 50.0 / nu,
        a_tilde: TorusField::zeros(0),
        eta_sigma: TorusField::zeros(0),
        samples: Vec::new(),
        c_estimate: 0.0,
        delta_verified: f64::NAN,
        geometry: Geometry { floor, blend_up, blend_down },
    };

    let npts = 2 * opts.profile_cutoff + 1;
    let mut samples = Vec::with_capacity(npts);
    for x in grid(npts) {
        samples.push(esc.profile_at(x)?);
    }
    let c_estimate = samples
        .iter()
        .filter(|s| s.ell_plus.is_finite() && s.ell_minus.is_finite())
        .map(|s| (s.ell_plus - s.ell_minus).abs())
        .fold(0.0, f64::max);
    let delta = 0.5 * nu;
    if c_estimate > 0.0 && sigma >= delta / (4.0 * c_estimate) {
        return Err(Error::InvalidParameter(format!(
            "sigma = {sigma} violates sigma < δ/(4C) = {:.4e}",
            delta / (4.0 * c_estimate)
        )));
    }
    let a: Vec<f64> = samples.iter().map(|s| s.a_tilde).collect();
    let e: Vec<f64> = samples.iter().map(|s| s.eta).collect();
    esc.a_tilde = TorusField::from_real_samples(&a)?;
    esc.eta_sigma = TorusField::from_real_samples(&e)?;
    esc.samples = samples;
    esc.c_estimate = c_estimate;

    let check = verify_escape(&esc, &x_field, opts.verify_grid);
    if !(check.delta > 0.0) {
        return Err(Error::EscapeConstructionFailed { x: check.argmin, margin: check.delta });
    }
    esc.delta_verified = check.delta;
    esc.flow.w_region = check.w_region;
    Ok(esc)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeVerification {
    /// `min_x g(x)` with `g = X ã' − X' ã`.
    pub delta: f64,
    pub argmin: f64,
    pub w_region: IntervalUnion,
    /// `(x, g(x), ã(x))` on the verification grid.
    pub table: Vec<(f64, f64, f64)>,
}

/// Grid check of `{h, a} ≥ δ|ξ|` for `a = |ξ| ã`, and the region `ã ≤ −1/2`.
pub fn verify_escape(esc: &EscapeFunction, x_field: &TorusField, grid_size: usize) -> EscapeVerification {
    verify_profile(&esc.a_tilde, x_field, grid_size)
}

/// Same check for an arbitrary profile `ã`.
pub fn verify_profile(a_tilde: &TorusField, x_field: &TorusField, grid_size: usize) -> EscapeVerification {
    let n = grid_size.max(2 * a_tilde.cutoff() + 1).max(2 * x_field.cutoff() + 1);
    let xs = grid(n);
    let a = a_tilde.to_real_samples(n).unwrap();
    let da = a_tilde.derivative().to_real_samples(n).unwrap();
    let xv = x_field.to_real_samples(n).unwrap();
    let dxv = x_field.derivative().to_real_samples(n).unwrap();
    let mut table = Vec::with_capacity(n);
    let (mut delta, mut argmin) = (f64::INFINITY, 0.0);
    for i in 0..n {
        let g = xv[i] * da[i] - dxv[i] * a[i];
        if g < delta {
            delta = g;
            argmin = xs[i];
        }
        table.push((xs[i], g, a[i]));
    }
    let w_region = sublevel_set(a_tilde, &xs, &a, -0.5);
    EscapeVerification { delta, argmin, w_region, table }
}

/// Maximal arcs where `f ≤ level`, endpoints refined by bisection.
fn sublevel_set(f: &TorusField, xs: &[f64], vals: &[f64], level: f64) -> IntervalUnion {
    let n = xs.len();
    let inside: Vec<bool> = vals.iter().map(|&v| v <= level).collect();
    if inside.iter().all(|&b| b) {
        return IntervalUnion { intervals: vec![Interval { lo: 0.0, hi: TWO_PI }] };
    }
    let h = TWO_PI / n as f64;
    let refine = |a: f64, b: f64| {
        // f(a) and f(b) on opposite sides of the level.
        let (mut a, mut b) = (a, b);
        let ina = f.eval_real(a) <= level;
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if (f.eval_real(m) <= level) == ina {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    };
    let start = inside.iter().position(|&b| !b).unwrap();
    let mut out = Vec::new();
    let mut j = start;
    while j < start + n {
        if !inside[j % n] {
            j += 1;
            continue;
        }
        let first = j;
        while j + 1 < start + n && inside[(j + 1) % n] {
            j += 1;
        }
        let lo = refine((first - 1) as f64 * h, first as f64 * h);
        let hi = refine(j as f64 * h, (j + 1) as f64 * h);
        let lo_w = wrap_angle(lo);
        out.push(Interval { lo: lo_w, hi: lo_w + (hi - lo) });
        j += 1;
    }
    IntervalUnion { intervals: out }
}
