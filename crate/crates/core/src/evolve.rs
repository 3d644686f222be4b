//! Time integration of `∂_t u = w u_x + (1/2) w_x u`, norm tracking, growth
//! fits and the stable/unstable experiments.
//!
//! The Galerkin integrator works in the frame rotating with the constant
//! part `c₀` of `w`: with `u_k = v_k e^{ikc₀t}` the remaining generator has
//! entries `i f_{k−j}(t)(k+j)/2` where `f_n(t) = Σ_l f_{n,l} e^{i(l − nc₀)t}`.
//! Each step is the Cayley map of that generator at the step midpoint.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::classical_dynamics::{build_escape_with, EscapeOptions, Interval, IntervalUnion};
use crate::error::{Error, Result};
use crate::linalg::{BandedLu, BandedMatrix};
use crate::normal_form::{normal_form_reduce, NormalFormChain};
use crate::ode::{integrate as ode_integrate, OdeOptions};
use crate::resonance::{classify, ClassificationReport, Tolerances, Verdict};
use crate::spectral::{grid, SpaceTimeField, StateVector, TorusField, TWO_PI};
use crate::weyl_calculus::{atilde_from_profile, initial_datum, quadratic_form};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// `w(t, x) = constant + field(t, x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportCoefficient {
    pub constant: f64,
    pub field: SpaceTimeField,
    /// Nonzero `(k, l, f_{k,l})`, used for pointwise evaluation of `f`, `f_x`, `f_xx`.
    sparse: Vec<(f64, f64, Complex64)>,
}

impl TransportCoefficient {
    pub fn new(constant: f64, field: SpaceTimeField) -> Self {
        let sparse = field
            .modes()
            .into_iter()
            .filter(|m| m.2 != ZERO)
            .map(|(k, l, c)| (k as f64, l as f64, c))
            .collect();
        Self { constant, field, sparse }
    }

    /// `m + εV`.
    pub fn original(v: &SpaceTimeField, m: i64, epsilon: f64) -> Self {
        Self::new(m as f64, v.scale(epsilon))
    }

    /// Splits off the `(0, 0)` mode as the constant part.
    pub fn from_field(w: &SpaceTimeField) -> Self {
        let c = w.coeff(0, 0).re;
        Self::new(c, w.add_constant(-c))
    }

    pub fn constant_only(c: f64) -> Self {
        Self::new(c, SpaceTimeField::zeros(0, 0))
    }

    /// `Σ (ik)^p f_{k,l} e^{i(kx+lt)}`, real part.
    fn derivative_value(&self, p: i32, t: f64, x: f64) -> f64 {
        self.sparse
            .iter()
            .map(|&(k, l, c)| (c * Complex64::new(0.0, k).powi(p) * Complex64::from_polar(1.0, k * x + l * t)).re)
            .sum()
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        self.constant + self.derivative_value(0, t, x)
    }

    pub fn eval_x(&self, t: f64, x: f64) -> f64 {
        self.derivative_value(1, t, x)
    }

    pub fn eval_xx(&self, t: f64, x: f64) -> f64 {
        self.derivative_value(2, t, x)
    }

    /// Upper bound `Σ|f_{k,l}|` for the sup norm of the variable part.
    pub fn field_bound(&self) -> f64 {
        self.field.coeffs().iter().map(|c| c.norm()).sum()
    }

    pub fn bandwidth(&self) -> usize {
        self.sparse.iter().map(|m| m.0.abs() as usize).max().unwrap_or(0)
    }

    /// `0.01/(|c₀| + K·sup|field|)`.
    pub fn default_dt(&self, cutoff: usize) -> f64 {
        0.01 / (self.constant.abs() + cutoff as f64 * self.field_bound()).max(1e-300)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolutionGuard {
    /// Modes with `|k| > threshold_fraction·K` count as tail.
    pub threshold_fraction: f64,
    /// Integration stops once the tail carries more than this fraction of `‖u‖²`.
    pub max_tail: f64,
}

impl Default for ResolutionGuard {
    fn default() -> Self {
        Self { threshold_fraction: 0.75, max_tail: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrateOptions {
    /// Defaults to [`TransportCoefficient::default_dt`].
    pub dt: Option<f64>,
    /// Defaults to `T/1000`, rounded to a whole number of steps.
    pub sample_interval: Option<f64>,
    pub s_list: Vec<f64>,
    pub keep_states: bool,
    pub guard: Option<ResolutionGuard>,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self { dt: None, sample_interval: None, s_list: vec![1.0], keep_states: false, guard: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeInfo {
    pub name: String,
    pub dt: f64,
    pub steps: usize,
    pub cutoff: usize,
    pub frame_speed: f64,
    /// True when the rotating-frame generator is time independent and factored once.
    pub cached_factorization: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSeries {
    pub s: f64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Empty unless `keep_states` was set.
    pub states: Vec<StateVector>,
    pub norm_series: Vec<NormSeries>,
    pub l2_series: Vec<f64>,
    pub l2_drift: f64,
    /// Largest relative L² change over a single step.
    pub max_step_defect: f64,
    pub tail_series: Vec<f64>,
    /// Time at which the resolution guard stopped the run.
    pub unresolved_at: Option<f64>,
    pub scheme: SchemeInfo,
}

impl Trajectory {
    pub fn series(&self, s: f64) -> Option<&[f64]> {
        self.norm_series.iter().find(|n| n.s == s).map(|n| n.values.as_slice())
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn final_state(&self) -> Option<&StateVector> {
        self.states.last()
    }

    /// CSV rows `t,s,norm`.
    pub fn norms_csv(&self) -> String {
        norms_csv(&self.times, &self.norm_series)
    }
}

fn norms_csv(times: &[f64], series: &[NormSeries]) -> String {
    let mut out = String::from("t,s,norm\n");
    for (i, t) in times.iter().enumerate() {
        for ns in series {
            out.push_str(&format!("{t},{},{:e}\n", ns.s, ns.values[i]));
        }
    }
    out
}

struct RotatingGenerator<'a> {
    field: &'a SpaceTimeField,
    c0: f64,
    cutoff: usize,
    band: usize,
    frozen: bool,
}

impl<'a> RotatingGenerator<'a> {
    fn new(w: &'a TransportCoefficient, cutoff: usize) -> Self {
        let band = w.bandwidth();
        let frozen = w.field.modes().iter().all(|&(k, l, c)| {
            c == ZERO || (l as f64 - k as f64 * w.constant).abs() < 1e-14
        });
        Self { field: &w.field, c0: w.constant, cutoff, band, frozen }
    }

    fn modes_at(&self, t: f64) -> Vec<Complex64> {
        let b = self.band as i64;
        let kt = self.field.kt() as i64;
        (-b..=b)
            .map(|n| {
                (-kt..=kt)
                    .map(|l| {
                        let c = self.field.coeff(n, l);
                        if c == ZERO {
                            ZERO
                        } else {
                            c * Complex64::from_polar(1.0, (l as f64 - n as f64 * self.c0) * t)
                        }
                    })
                    .sum()
            })
            .collect()
    }

    /// `(I − (h/2)G)` factored and `I + (h/2)G`.
    fn cayley(&self, t: f64, h: f64) -> Result<(BandedLu, BandedMatrix)> {
        let f = self.modes_at(t);
        let kk = self.cutoff as i64;
        let b = self.band as i64;
        let n = 2 * self.cutoff + 1;
        let mut g = BandedMatrix::zeros(n, self.band);
        for k in -kk..=kk {
            for j in (k - b).max(-kk)..=(k + b).min(kk) {
                let c = f[(k - j + b) as usize];
                if c != ZERO {
                    let v = Complex64::i() * c * (0.5 * (k + j) as f64);
                    g.set((k + kk) as usize, (j + kk) as usize, v);
                }
            }
        }
        let half = Complex64::new(0.5 * h, 0.0);
        let plus = g.shifted(1.0, half);
        let minus = g.shifted(1.0, -half);
        let lu = minus.factor().map_err(|_| Error::StepFailure { t })?;
        Ok((lu, plus))
    }
}

fn rotate(coeffs: &[Complex64], cutoff: usize, c0: f64, t: f64, sign: f64) -> Vec<Complex64> {
    if c0 == 0.0 || t == 0.0 {
        return coeffs.to_vec();
    }
    let kk = cutoff as i64;
    coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| c * Complex64::from_polar(1.0, sign * (i as i64 - kk) as f64 * c0 * t))
        .collect()
}

/// Cayley integration over `[t₀, t₀ + T]` with `t₀ = u0.time()`.
pub fn integrate(
    w: &TransportCoefficient,
    u0: &StateVector,
    t_final: f64,
    cutoff: usize,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    integrate_observed(w, u0, t_final, cutoff, opts, &mut |_| Ok(()))
}

/// As [`integrate`], calling `observer` on every sampled state in the original frame.
pub fn integrate_observed(
    w: &TransportCoefficient,
    u0: &StateVector,
    t_final: f64,
    cutoff: usize,
    opts: &IntegrateOptions,
    observer: &mut dyn FnMut(&StateVector) -> Result<()>,
) -> Result<Trajectory> {
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(Error::InvalidParameter(format!("T must be finite and ≥ 0, got {t_final}")));
    }
    let band = w.bandwidth();
    if 2 * band > cutoff {
        return Err(Error::InvalidParameter(format!("coefficient bandwidth {band} exceeds K/2 = {}", cutoff / 2)));
    }
    let dt_req = opts.dt.unwrap_or_else(|| w.default_dt(cutoff));
    if !(dt_req > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt_req}")));
    }
    let steps = if t_final == 0.0 { 0 } else { (t_final / dt_req).ceil().max(1.0) as usize };
    let dt = if steps == 0 { dt_req } else { t_final / steps as f64 };
    let interval = opts.sample_interval.unwrap_or(t_final / 1000.0);
    let stride = ((interval / dt).round() as usize).max(1);

    let gen = RotatingGenerator::new(w, cutoff);
    let t0 = u0.time();
    let u0 = u0.resized(cutoff);
    let c0 = w.constant;
    let mut v = rotate(u0.coeffs(), cutoff, c0, t0, -1.0);
    let norm0 = u0.l2_norm();

    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        norm_series: opts.s_list.iter().map(|&s| NormSeries { s, values: Vec::new() }).collect(),
        l2_series: Vec::new(),
        l2_drift: 0.0,
        max_step_defect: 0.0,
        tail_series: Vec::new(),
        unresolved_at: None,
        scheme: SchemeInfo {
            name: "cayley-midpoint-rotating".into(),
            dt,
            steps: 0,
            cutoff,
            frame_speed: c0,
            cached_factorization: gen.frozen,
        },
    };
    let threshold = opts.guard.map(|g| (g.threshold_fraction * cutoff as f64).floor() as usize);

    let mut record = |traj: &mut Trajectory, v: &[Complex64], t: f64| -> Result<bool> {
        let u = StateVector::from_coeffs(cutoff, rotate(v, cutoff, c0, t, 1.0), t);
        let l2 = u.l2_norm();
        traj.times.push(t);
        traj.l2_series.push(l2);
        if norm0 > 0.0 {
            traj.l2_drift = traj.l2_drift.max((l2 - norm0).abs() / norm0);
        }
        for ns in traj.norm_series.iter_mut() {
            ns.values.push(u.sobolev_norm(ns.s));
        }
        let mut ok = true;
        if let (Some(g), Some(th)) = (opts.guard, threshold) {
            let tail = u.tail_fraction(th);
            traj.tail_series.push(tail);
            ok = tail <= g.max_tail;
        }
        observer(&u)?;
        if opts.keep_states {
            traj.states.push(u);
        }
        Ok(ok)
    };

    if !record(&mut traj, &v, t0)? {
        traj.unresolved_at = Some(t0);
        return Ok(traj);
    }
    let mut cached = if gen.frozen { Some(gen.cayley(0.0, dt)?) } else { None };
    let mut rhs = vec![ZERO; v.len()];
    let mut before: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    for step in 1..=steps {
        let t_mid = t0 + (step as f64 - 0.5) * dt;
        let fresh;
        let (lu, plus) = match cached.as_mut() {
            Some(pair) => (&pair.0, &pair.1),
            None => {
                fresh = gen.cayley(t_mid, dt)?;
                (&fresh.0, &fresh.1)
            }
        };
        plus.matvec_into(&v, &mut rhs);
        lu.solve_in_place(&mut rhs);
        std::mem::swap(&mut v, &mut rhs);
        let after: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !after.is_finite() {
            return Err(Error::StepFailure { t: t_mid });
        }
        if before > 0.0 {
            traj.max_step_defect = traj.max_step_defect.max((after - before).abs() / before);
        }
        before = after;
        traj.scheme.steps = step;
        if step % stride == 0 || step == steps {
            let t = t0 + step as f64 * dt;
            if !record(&mut traj, &v, t)? {
                traj.unresolved_at = Some(t);
                break;
            }
        }
    }
    Ok(traj)
}

/// Method-of-characteristics reference solution on `n_points` equispaced points.
pub fn integrate_characteristics(
    w: &TransportCoefficient,
    u0: &TorusField,
    t: f64,
    n_points: usize,
) -> Result<Vec<Complex64>> {
    characteristics_at(w, u0, t, &grid(n_points))
}

/// `u(t, x) = u0(z(0))·exp((1/2)∫₀^t w_x(s, z(s)) ds)` with `ż = −w(s, z)`, `z(t) = x`.
pub fn characteristics_at(w: &TransportCoefficient, u0: &TorusField, t: f64, xs: &[f64]) -> Result<Vec<Complex64>> {
    let opts = OdeOptions::with_rtol(1e-12);
    xs.iter()
        .map(|&x| {
            let out = ode_integrate(
                |s, y: &[f64; 2]| [-w.eval(s, y[0]), w.eval_x(s, y[0])],
                t,
                [x, 0.0],
                0.0,
                &opts,
                None,
            )?;
            Ok(u0.eval(out.y[0]) * (-0.5 * out.y[1]).exp())
        })
        .collect()
}

/// `‖u(t)‖_{H¹}` at each of `times` from Lagrangian transport of `u0`.
///
/// Along `ẋ = −w`, `J = ∂x/∂x₀` and `q = ∂_{x₀}J/J` obey `(ln J)˙ = −w_x`,
/// `q̇ = −w_xx J`, and
/// `‖u‖₁² = ‖u₀‖² + (1/2π)∫ |u₀′ − u₀q/2|²/J² dx₀`.
pub fn lagrangian_h1_norms(w: &TransportCoefficient, u0: &TorusField, times: &[f64], n_points: usize) -> Result<Vec<f64>> {
    if times.windows(2).any(|p| p[1] < p[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidParameter("times must be nonnegative and increasing".into()));
    }
    let du = u0.derivative();
    let l2 = u0.l2_norm().powi(2);
    let scale = u0.sup_norm(1024).max(du.sup_norm(1024));
    let opts = OdeOptions::with_rtol(1e-11);
    let mut acc = vec![0.0; times.len()];
    for x0 in grid(n_points) {
        let (a, da) = (u0.eval(x0), du.eval(x0));
        if a.norm() <= 1e-15 * scale && da.norm() <= 1e-15 * scale {
            continue;
        }
        let mut y = [x0, 0.0, 0.0];
        let mut s = 0.0;
        for (i, &t) in times.iter().enumerate() {
            if t > s {
                y = ode_integrate(
                    |s, y: &[f64; 3]| [-w.eval(s, y[0]), -w.eval_x(s, y[0]), -w.eval_xx(s, y[0]) * y[1].exp()],
                    s,
                    y,
                    t,
                    &opts,
                    None,
                )?
                .y;
                s = t;
            }
            let g = da - 0.5 * a * y[2];
            acc[i] += g.norm_sqr() * (-2.0 * y[1]).exp();
        }
    }
    let h = TWO_PI / n_points as f64;
    Ok(acc.into_iter().map(|v| (l2 + v * h / TWO_PI).sqrt()).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub gamma: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares slope of `ln(values)` against `times` on `window`.
pub fn fit_growth_rate(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<GrowthFit> {
    if times.len() != values.len() {
        return Err(Error::DimensionError { expected: times.len(), got: values.len() });
    }
    if let Some(i) = values.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidSeries { index: i });
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= window.0 && **t <= window.1)
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "fit window [{}, {}] holds {} samples",
            window.0,
            window.1,
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let gamma = sty / stt;
    let intercept = my - gamma * mt;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - gamma * p.0).powi(2)).sum();
    let r_squared = if syy <= 1e-28 * n { 1.0 } else { 1.0 - ss_res / syy };
    Ok(GrowthFit { gamma, intercept, r_squared, points: pts.len() })
}

// ---------------------------------------------------------------------------
// Stable regime

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityOptions {
    pub cutoff: usize,
    pub dt: Option<f64>,
    /// Carrier frequency of the default datum.
    pub xi0: i64,
    pub samples: usize,
    /// Length of the window on which the reduced-equation drift rate is measured.
    pub drift_window: f64,
    pub tolerances: Tolerances,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self { cutoff: 256, dt: None, xi0: 20, samples: 2000, drift_window: 10.0, tolerances: Tolerances::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupRatio {
    pub s: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub epsilon: f64,
    pub order: usize,
    pub horizon: f64,
    pub classification: ClassificationReport,
    pub m_hat: Option<f64>,
    pub remainder_norm: f64,
    /// `sup_t ‖u(t)‖_s/‖u₀‖_s` for the original equation.
    pub sup_ratio: Vec<SupRatio>,
    /// Same for the reduced equation.
    pub reduced_sup_ratio: Vec<SupRatio>,
    /// `max_{t ≤ drift_window} |‖v(t)‖_s/‖v₀‖_s − 1| / drift_window` for the first `s`.
    pub reduced_drift_rate: f64,
    pub l2_drift: f64,
    pub max_step_defect: f64,
    pub dt: f64,
    pub cutoff: usize,
    /// Sample times and norms of the original equation.
    pub times: Vec<f64>,
    pub norm_series: Vec<NormSeries>,
}

impl StabilityReport {
    /// CSV rows `t,s,norm` for the original equation.
    pub fn norms_csv(&self) -> String {
        norms_csv(&self.times, &self.norm_series)
    }
}

/// Reduced-coefficient modes below this size are pushforward round-off and
/// would only widen the band of the Cayley solve.
const REDUCED_TRIM: f64 = 1e-13;

/// Default datum for stability runs: a bump over the whole circle with carrier `xi0`.
pub fn circle_datum(xi0: i64, cutoff: usize) -> Result<StateVector> {
    let region = IntervalUnion { intervals: vec![Interval { lo: 0.0, hi: TWO_PI }] };
    Ok(initial_datum(&region, xi0, cutoff)?.state)
}

fn sup_ratios(traj: &Trajectory) -> Vec<SupRatio> {
    traj.norm_series
        .iter()
        .map(|ns| {
            let r0 = ns.values[0];
            SupRatio { s: ns.s, ratio: ns.values.iter().fold(0.0f64, |a, v| a.max(v / r0)) }
        })
        .collect()
}

pub fn stability_experiment(
    v: &SpaceTimeField,
    m: i64,
    epsilon: f64,
    order: usize,
    s_list: &[f64],
    horizon_factor: f64,
    opts: &StabilityOptions,
) -> Result<StabilityReport> {
    stability_experiment_with_datum(v, m, epsilon, order, s_list, horizon_factor, None, opts)
}

#[allow(clippy::too_many_arguments)]
pub fn stability_experiment_with_datum(
    v: &SpaceTimeField,
    m: i64,
    epsilon: f64,
    order: usize,
    s_list: &[f64],
    horizon_factor: f64,
    datum: Option<&StateVector>,
    opts: &StabilityOptions,
) -> Result<StabilityReport> {
    let classification = classify(v, m, &opts.tolerances)?;
    if classification.verdict != Verdict::Stable {
        return Err(Error::WrongRegime { expected: Verdict::Stable.to_string(), found: classification.verdict.to_string() });
    }
    if s_list.is_empty() {
        return Err(Error::InvalidParameter("s_list is empty".into()));
    }
    let cutoff = opts.cutoff;
    let u0 = match datum {
        Some(d) => d.resized(cutoff),
        None => circle_datum(opts.xi0, cutoff)?,
    };
    let horizon = if epsilon == 0.0 { horizon_factor } else { horizon_factor * epsilon.powi(-(order as i32 + 1)) };
    let w = TransportCoefficient::original(v, m, epsilon);
    let dt = opts.dt.unwrap_or_else(|| w.default_dt(cutoff));
    let iopts = IntegrateOptions {
        dt: Some(dt),
        sample_interval: Some(horizon / opts.samples as f64),
        s_list: s_list.to_vec(),
        keep_states: false,
        guard: None,
    };
    let orig = integrate(&w, &u0, horizon, cutoff, &iopts)?;

    let (m_hat, remainder_norm, reduced) = if epsilon == 0.0 {
        (None, 0.0, orig.clone())
    } else {
        let mut chain = normal_form_reduce(v, m, epsilon, order)?;
        chain.reduce_constant()?;
        let wr = TransportCoefficient::from_field(&chain.reduced_coefficient()?.trimmed(REDUCED_TRIM));
        let v0 = chain.to_reduced_frame(0.0, &u0)?;
        let traj = integrate(&wr, &v0, horizon, cutoff, &iopts)?;
        (chain.m_hat, chain.remainder_norm(), traj)
    };
    let first = &reduced.norm_series[0].values;
    let drift = reduced
        .times
        .iter()
        .zip(first)
        .filter(|(t, _)| **t <= opts.drift_window)
        .map(|(_, n)| (n / first[0] - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(StabilityReport {
        epsilon,
        order,
        horizon,
        classification,
        m_hat,
        remainder_norm,
        sup_ratio: sup_ratios(&orig),
        reduced_sup_ratio: sup_ratios(&reduced),
        reduced_drift_rate: drift / opts.drift_window.min(horizon),
        l2_drift: orig.l2_drift.max(reduced.l2_drift),
        max_step_defect: orig.max_step_defect.max(reduced.max_step_defect),
        dt,
        cutoff,
        times: orig.times,
        norm_series: orig.norm_series,
    })
}

// ---------------------------------------------------------------------------
// Unstable regime

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstabilityOptions {
    pub cutoff: usize,
    pub dt: Option<f64>,
    pub sigma: f64,
    pub sample_interval: f64,
    pub guard: ResolutionGuard,
    /// Fit window starts at `fit_start_factor/(εν)`.
    pub fit_start_factor: f64,
    /// Quadrature points of the Lagrangian norm oracle; 0 disables it.
    pub characteristic_points: usize,
    pub characteristic_interval: f64,
    pub normal_form_order: usize,
    pub escape: EscapeOptions,
    pub tolerances: Tolerances,
}

impl Default for InstabilityOptions {
    fn default() -> Self {
        Self {
            cutoff: 1024,
            dt: None,
            sigma: 0.01,
            sample_interval: 0.1,
            guard: ResolutionGuard::default(),
            fit_start_factor: 1.0,
            characteristic_points: 512,
            characteristic_interval: 1.0,
            normal_form_order: 1,
            escape: EscapeOptions::default(),
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VirialCheck {
    /// Discrete `Ȧ ≥ ε(δ₂A − β‖u₀‖²)` is tested with this `δ₂`.
    pub delta2: f64,
    /// Smallest `β ≥ 0` satisfying the inequality on the first half of the samples.
    pub beta: f64,
    /// Fraction of sample intervals satisfying the inequality.
    pub fraction: f64,
    /// Same, restricted to the second half.
    pub validation_fraction: f64,
    pub intervals: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub s: f64,
    pub epsilon: f64,
    pub xi0: i64,
    pub gamma_fit: f64,
    pub fit_window: (f64, f64),
    pub r_squared: f64,
    pub predicted_rate: f64,
    /// Fit of the Lagrangian norm oracle over `[fit_window.0, T]`.
    pub gamma_characteristics: Option<f64>,
    pub r_squared_characteristics: Option<f64>,
    pub delta1: f64,
    /// `γ/(εs)`.
    pub delta2_fit: f64,
    /// `δ/(2 sup|ã|)` from the verified escape margin.
    pub delta2_candidate: f64,
    pub escape_delta: f64,
    pub nu: f64,
    pub virial: Option<VirialCheck>,
    pub virial_series: Option<Vec<(f64, f64)>>,
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    pub characteristic_series: Vec<(f64, f64)>,
    pub resolved_until: f64,
    pub horizon: f64,
    pub l2_drift: f64,
    pub max_step_defect: f64,
    pub dt: f64,
    pub cutoff: usize,
}

impl GrowthReport {
    /// CSV rows `t,norm,virial` (virial empty when not tracked).
    pub fn series_csv(&self) -> String {
        let mut out = String::from("t,norm,virial\n");
        for (i, (t, n)) in self.times.iter().zip(&self.norms).enumerate() {
            let a = self.virial_series.as_ref().and_then(|v| v.get(i)).map(|p| format!("{:e}", p.1)).unwrap_or_default();
            out.push_str(&format!("{t},{n:e},{a}\n"));
        }
        out
    }

    /// CSV rows `t,norm` of the Lagrangian oracle.
    pub fn characteristics_csv(&self) -> String {
        let mut out = String::from("t,norm\n");
        for (t, n) in &self.characteristic_series {
            out.push_str(&format!("{t},{n:e}\n"));
        }
        out
    }
}

/// Norm series of a plain Galerkin run with a growth fit, without escape-function bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthRun {
    pub s: f64,
    pub epsilon: f64,
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    pub gamma_fit: f64,
    pub r_squared: f64,
    pub fit_window: (f64, f64),
    pub resolved_until: f64,
    pub l2_drift: f64,
    pub max_step_defect: f64,
    pub dt: f64,
    pub cutoff: usize,
}

impl GrowthRun {
    /// CSV rows `t,norm`.
    pub fn series_csv(&self) -> String {
        let mut out = String::from("t,norm\n");
        for (t, n) in self.times.iter().zip(&self.norms) {
            out.push_str(&format!("{t},{n:e}\n"));
        }
        out
    }
}

#[allow(clippy::too_many_arguments)]
pub fn growth_run(
    v: &SpaceTimeField,
    m: i64,
    epsilon: f64,
    s: f64,
    horizon: f64,
    u0: &StateVector,
    fit_start: f64,
    opts: &InstabilityOptions,
) -> Result<GrowthRun> {
    let w = TransportCoefficient::original(v, m, epsilon);
    let iopts = IntegrateOptions {
        dt: opts.dt,
        sample_interval: Some(opts.sample_interval),
        s_list: vec![s],
        keep_states: false,
        guard: Some(opts.guard),
    };
    let traj = integrate(&w, u0, horizon, opts.cutoff, &iopts)?;
    let resolved_until = resolved_time(&traj);
    let norms = traj.norm_series[0].values.clone();
    let fit = fit_growth_rate(&traj.times, &norms, (fit_start, resolved_until))?;
    Ok(GrowthRun {
        s,
        epsilon,
        times: traj.times,
        norms,
        gamma_fit: fit.gamma,
        r_squared: fit.r_squared,
        fit_window: (fit_start, resolved_until),
        resolved_until,
        l2_drift: traj.l2_drift,
        max_step_defect: traj.max_step_defect,
        dt: traj.scheme.dt,
        cutoff: opts.cutoff,
    })
}

/// Last sample time at which the resolution guard still held.
fn resolved_time(traj: &Trajectory) -> f64 {
    match traj.unresolved_at {
        Some(_) if traj.times.len() >= 2 => traj.times[traj.times.len() - 2],
        Some(t) => t,
        None => traj.final_time(),
    }
}

fn calibrate_virial(times: &[f64], a: &[f64], epsilon: f64, delta2: f64, norm0_sq: f64) -> Option<VirialCheck> {
    let n = times.len();
    if n < 4 {
        return None;
    }
    let intervals: Vec<(f64, f64)> = (0..n - 1)
        .map(|i| {
            let rate = (a[i + 1] - a[i]) / (times[i + 1] - times[i]);
            (rate, 0.5 * (a[i] + a[i + 1]))
        })
        .collect();
    let half = intervals.len() / 2;
    let beta = intervals[..half]
        .iter()
        .map(|(rate, am)| (delta2 * am - rate / epsilon) / norm0_sq)
        .fold(0.0f64, f64::max);
    let holds = |(rate, am): &(f64, f64)| *rate >= epsilon * (delta2 * am - beta * norm0_sq) - 1e-12 * am.abs();
    let count = intervals.iter().filter(|p| holds(p)).count();
    let val = intervals[half..].iter().filter(|p| holds(p)).count();
    Some(VirialCheck {
        delta2,
        beta,
        fraction: count as f64 / intervals.len() as f64,
        validation_fraction: val as f64 / (intervals.len() - half).max(1) as f64,
        intervals: intervals.len(),
    })
}

/// Datum, escape function and normal form for an unstable `V`.
pub struct InstabilitySetup {
    pub classification: ClassificationReport,
    pub escape: crate::classical_dynamics::EscapeFunction,
    pub datum: StateVector,
    pub chain: NormalFormChain,
    pub predicted_slope: f64,
}

pub fn instability_setup(v: &SpaceTimeField, m: i64, epsilon: f64, xi0: i64, opts: &InstabilityOptions) -> Result<InstabilitySetup> {
    let classification = classify(v, m, &opts.tolerances)?;
    if classification.verdict != Verdict::Unstable {
        return Err(Error::WrongRegime { expected: Verdict::Unstable.to_string(), found: classification.verdict.to_string() });
    }
    let x = crate::resonance::resonant_average(v, m)?;
    let escape = build_escape_with(&x, opts.sigma, &opts.escape)?;
    let datum = initial_datum(&escape.flow.w_region, xi0, opts.cutoff)?.state;
    let chain = normal_form_reduce(v, m, epsilon, opts.normal_form_order)?;
    // Characteristics ẋ = −εX converge to zeros with X′ > 0, where frequencies stretch.
    let predicted_slope = classification.zeros.iter().map(|z| z.slope).fold(0.0f64, f64::max);
    Ok(InstabilitySetup { classification, escape, datum, chain, predicted_slope })
}

pub fn instability_experiment(
    v: &SpaceTimeField,
    m: i64,
    epsilon: f64,
    s: f64,
    horizon: f64,
    xi0: i64,
    opts: &InstabilityOptions,
) -> Result<GrowthReport> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    let setup = instability_setup(v, m, epsilon, xi0, opts)?;
    let nu = setup.classification.nu;
    let esc = &setup.escape;
    let (_, atilde) = atilde_from_profile(&esc.a_tilde, opts.cutoff);
    let a_sup = esc.a_tilde.sup_norm(4096);
    let delta2_candidate = esc.delta_verified / (2.0 * a_sup);

    let w = TransportCoefficient::original(v, m, epsilon);
    let iopts = IntegrateOptions {
        dt: opts.dt,
        sample_interval: Some(opts.sample_interval),
        s_list: vec![s],
        keep_states: false,
        guard: Some(opts.guard),
    };
    let mut virial = Vec::new();
    let chain = &setup.chain;
    let traj = integrate_observed(&w, &setup.datum, horizon, opts.cutoff, &iopts, &mut |u| {
        let u1 = chain.to_normal_frame(u.time(), u)?;
        virial.push((u.time(), -quadratic_form(&atilde, &u1)?.re));
        Ok(())
    })?;
    let resolved_until = resolved_time(&traj);
    let keep = traj.times.iter().take_while(|t| **t <= resolved_until).count();
    let times = traj.times[..keep].to_vec();
    let norms = traj.norm_series[0].values[..keep].to_vec();
    virial.truncate(keep);

    let fit_start = opts.fit_start_factor / (epsilon * nu);
    let fit = fit_growth_rate(&times, &norms, (fit_start, resolved_until))?;

    let (mut gamma_c, mut r2_c, mut char_series) = (None, None, Vec::new());
    if opts.characteristic_points > 0 {
        let n = (horizon / opts.characteristic_interval).floor() as usize;
        let ct: Vec<f64> = (0..=n).map(|i| i as f64 * opts.characteristic_interval).collect();
        let cn = lagrangian_h1_norms(&w, setup.datum.field(), &ct, opts.characteristic_points)?;
        if s == 1.0 {
            if let Ok(f) = fit_growth_rate(&ct, &cn, (fit_start, horizon)) {
                gamma_c = Some(f.gamma);
                r2_c = Some(f.r_squared);
            }
        }
        char_series = ct.into_iter().zip(cn).collect();
    }

    let delta2_fit = fit.gamma / (epsilon * s);
    let n0 = norms[0];
    let delta1 = times
        .iter()
        .zip(&norms)
        .map(|(t, n)| n / (n0 * (epsilon * delta2_fit * t).exp()))
        .fold(f64::INFINITY, f64::min);
    let norm0_sq = setup.datum.l2_norm().powi(2);
    let vt: Vec<f64> = virial.iter().map(|p| p.0).collect();
    let va: Vec<f64> = virial.iter().map(|p| p.1).collect();
    let check = calibrate_virial(&vt, &va, epsilon, delta2_candidate, norm0_sq);

    Ok(GrowthReport {
        s,
        epsilon,
        xi0,
        gamma_fit: fit.gamma,
        fit_window: (fit_start, resolved_until),
        r_squared: fit.r_squared,
        predicted_rate: epsilon * s * setup.predicted_slope,
        gamma_characteristics: gamma_c,
        r_squared_characteristics: r2_c,
        delta1,
        delta2_fit,
        delta2_candidate,
        escape_delta: esc.delta_verified,
        nu,
        virial: check,
        virial_series: Some(virial),
        times,
        norms,
        characteristic_series: char_series,
        resolved_until,
        horizon,
        l2_drift: traj.l2_drift,
        max_step_defect: traj.max_step_defect,
        dt: traj.scheme.dt,
        cutoff: opts.cutoff,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DichotomyReport {
    pub epsilon: f64,
    pub stable: GrowthRun,
    pub unstable: GrowthReport,
    /// `γ_stable / γ_unstable`.
    pub ratio: f64,
}

/// Run a stable and an unstable `V` from the same datum with the same solver
/// settings; the stable fit uses the unstable fit start and its own resolved horizon.
#[allow(clippy::too_many_arguments)]
pub fn dichotomy_experiment(
    stable: &SpaceTimeField,
    unstable: &SpaceTimeField,
    m: i64,
    epsilon: f64,
    s: f64,
    horizon: f64,
    xi0: i64,
    opts: &InstabilityOptions,
) -> Result<DichotomyReport> {
    let sc = classify(stable, m, &opts.tolerances)?;
    if sc.verdict != Verdict::Stable {
        return Err(Error::WrongRegime { expected: Verdict::Stable.to_string(), found: sc.verdict.to_string() });
    }
    let w_u = TransportCoefficient::original(unstable, m, epsilon);
    let w_s = TransportCoefficient::original(stable, m, epsilon);
    let dt = opts
        .dt
        .unwrap_or_else(|| w_u.default_dt(opts.cutoff).min(w_s.default_dt(opts.cutoff)));
    let shared = InstabilityOptions { dt: Some(dt), ..opts.clone() };
    let unstable_report = instability_experiment(unstable, m, epsilon, s, horizon, xi0, &shared)?;
    let setup = instability_setup(unstable, m, epsilon, xi0, &shared)?;
    let stable_run = growth_run(stable, m, epsilon, s, horizon, &setup.datum, unstable_report.fit_window.0, &shared)?;
    let ratio = stable_run.gamma_fit.abs() / unstable_report.gamma_fit;
    Ok(DichotomyReport { epsilon, stable: stable_run, unstable: unstable_report, ratio })
}
