//! Homological equation, half-density diffeomorphism transforms, exact
//! coefficient pushforwards and the order-N resonant normal form.
//!
//! A transform with displacement `β(t, x)` acts on states by
//!
//! ```text
//! (Φ u)(x) = (1 + β_x(t, x))^{1/2} u(x + β(t, x))
//! ```
//!
//! If `u = Φ v` and `u` solves the transport equation with coefficient `w`,
//! then `v` solves it with coefficient
//! `w' = [w (1 + β_x) − β_t] ∘ φ^{-1}`, `φ(x) = x + β`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::resonance::{classify_profile, resonant_average, Tolerances, Verdict};
use crate::spectral::{
    good_size, grid, project_grid, SpaceTimeField, StateVector, TorusField, TWO_PI,
};

/// Lower bound on `min(1 + β_x)` accepted as invertible.
pub const INVERTIBILITY_THRESHOLD: f64 = 0.1;
pub const FIXED_POINT_MAX_ITER: usize = 200;
pub const FIXED_POINT_TOL: f64 = 1e-13;
/// Acceptance level for `y + β̃(y) + β(y + β̃(y)) = y` after re-spectralization.
pub const COMPOSITION_TOL: f64 = 1e-10;

/// Limits for adaptive re-spectralization of non-band-limited grid functions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub max_kx: usize,
    pub max_kt: usize,
    /// Accept once the L² mass past the cutoff is below `rel_tol · ‖f‖`.
    pub rel_tol: f64,
}

impl Default for Resolution {
    fn default() -> Self {
        Self { max_kx: 256, max_kt: 256, rel_tol: 1e-14 }
    }
}

/// Sample `f` on growing grids until its spectrum is resolved.
/// `eval_row(t, xs, out)` fills one time row.
pub(crate) fn spectralize(
    kx0: usize,
    kt0: usize,
    res: &Resolution,
    mut eval_row: impl FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
) -> Result<(SpaceTimeField, f64)> {
    let mut kx = kx0.max(4).min(res.max_kx);
    let mut kt = if kt0 == 0 { 0 } else { kt0.max(2).min(res.max_kt) };
    loop {
        let nx = good_size(2 * (2 * kx + 1));
        let nt = if kt == 0 { 1 } else { good_size(2 * (2 * kt + 1)) };
        let xs = grid(nx);
        let mut samples = vec![Complex64::new(0.0, 0.0); nt * nx];
        let mut row = vec![0.0; nx];
        for j in 0..nt {
            let t = TWO_PI * j as f64 / nt as f64;
            eval_row(t, &xs, &mut row)?;
            for (s, &v) in samples[j * nx..(j + 1) * nx].iter_mut().zip(&row) {
                *s = Complex64::new(v, 0.0);
            }
        }
        let (field, tail_x, tail_t, total) = project_grid(&samples, nt, nx, kx, kt)?;
        let limit = res.rel_tol * total.max(f64::MIN_POSITIVE);
        let grow_x = tail_x > limit && kx < res.max_kx;
        let grow_t = tail_t > limit && kt < res.max_kt;
        if !grow_x && !grow_t {
            let field = field.real_part();
            let trimmed = field.trimmed(1e-3 * limit);
            return Ok((trimmed, (tail_x * tail_x + tail_t * tail_t).sqrt()));
        }
        if grow_x {
            kx = (2 * kx).min(res.max_kx);
        }
        if grow_t {
            kt = (2 * kt).min(res.max_kt);
        }
    }
}

/// `β_{k,l} = w_{k,l} / (i(l − km))` off the resonant set `l = mk`, zero on it.
pub fn solve_homological(w: &SpaceTimeField, m: i64) -> Result<SpaceTimeField> {
    if m <= 0 {
        return Err(Error::InvalidFrequency(m));
    }
    let modes: Vec<(i64, i64, Complex64)> = w
        .modes()
        .into_iter()
        .filter(|&(k, l, _)| l != m * k)
        .map(|(k, l, c)| (k, l, c / Complex64::new(0.0, (l - k * m) as f64)))
        .collect();
    let beta = SpaceTimeField::from_modes(w.kx(), w.kt(), &modes);
    Ok(if w.is_real() { beta.real_part() } else { beta })
}

/// `‖W + m β_x − β_t − ⟨W⟩_m(x + mt)‖_{L²(T²)}`.
pub fn homological_residual(w: &SpaceTimeField, beta: &SpaceTimeField, m: i64) -> Result<f64> {
    let avg = resonant_average(w, m)?;
    let lifted = SpaceTimeField::lift_translated(&avg, m, w.kt());
    let lhs = w
        .add(&beta.derivative_x().scale(m as f64))
        .sub(&beta.derivative_t());
    Ok(lhs.sub(&lifted).l2_norm())
}

/// `min (1 + β_x)` over an oversampled grid.
pub fn invertibility_margin(beta: &SpaceTimeField) -> f64 {
    let bx = beta.derivative_x();
    let nx = good_size(4 * (2 * bx.kx() + 1)).max(64);
    let nt = if bx.kt() == 0 { 1 } else { good_size(4 * (2 * bx.kt() + 1)).max(16) };
    bx.to_real_samples(nt, nx)
        .unwrap()
        .into_iter()
        .fold(f64::INFINITY, |a, v| a.min(1.0 + v))
}

/// Solve `b = −β(t, y + b)` by damped Newton iteration.
fn invert_point(beta: &TorusField, beta_x: &TorusField, y: f64) -> Result<f64> {
    let mut b = -beta.eval_real(y);
    let mut residual = f64::INFINITY;
    for _ in 0..FIXED_POINT_MAX_ITER {
        let f = b + beta.eval_real(y + b);
        let df = 1.0 + beta_x.eval_real(y + b);
        residual = f.abs();
        let step = f / df;
        // Damping keeps the update inside one period of the displacement.
        let step = if step.abs() > 1.0 { step.signum() } else { step };
        b -= step;
        if step.abs() <= FIXED_POINT_TOL {
            return Ok(b);
        }
    }
    if residual <= FIXED_POINT_TOL {
        Ok(b)
    } else {
        Err(Error::ConvergenceFailure { residual, iterations: FIXED_POINT_MAX_ITER })
    }
}

/// Inverse displacement `β̃` with `y + β̃(t,y) + β(t, y + β̃(t,y)) = y`.
pub fn invert_diffeo(beta: &SpaceTimeField) -> Result<SpaceTimeField> {
    invert_diffeo_with(beta, &Resolution::default())
}

pub fn invert_diffeo_with(beta: &SpaceTimeField, res: &Resolution) -> Result<SpaceTimeField> {
    let margin = invertibility_margin(beta);
    if !(margin > INVERTIBILITY_THRESHOLD) {
        return Err(Error::DiffeoNotInvertible { margin, threshold: INVERTIBILITY_THRESHOLD });
    }
    let bx = beta.derivative_x();
    let (tilde, _) = spectralize(2 * beta.kx(), 2 * beta.kt(), res, |t, xs, out| {
        let b = beta.slice_at(t);
        let d = bx.slice_at(t);
        for (o, &y) in out.iter_mut().zip(xs) {
            *o = invert_point(&b, &d, y)?;
        }
        Ok(())
    })?;
    Ok(tilde)
}

/// `max |y + β̃(t,y) + β(t, y + β̃(t,y)) − y|` on an offset verification grid.
pub fn composition_residual(beta: &SpaceTimeField, tilde: &SpaceTimeField) -> f64 {
    let nx = 97;
    let nt = if beta.kt() == 0 && tilde.kt() == 0 { 1 } else { 23 };
    let mut worst: f64 = 0.0;
    for j in 0..nt {
        let t = TWO_PI * (j as f64 + 0.37) / nt as f64;
        let b = beta.slice_at(t);
        let bt = tilde.slice_at(t);
        for i in 0..nx {
            let y = TWO_PI * (i as f64 + 0.5) / nx as f64;
            let d = bt.eval_real(y);
            worst = worst.max((d + b.eval_real(y + d)).abs());
        }
    }
    worst
}

/// Half-density transform `u ↦ (1+β_x)^{1/2} u∘(id+β)` and its inverse.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffeoTransform {
    beta: SpaceTimeField,
    beta_tilde: SpaceTimeField,
    invertibility_margin: f64,
    composition_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Inverse,
}

impl DiffeoTransform {
    pub fn new(beta: SpaceTimeField) -> Result<Self> {
        Self::with_resolution(beta, &Resolution::default())
    }

    pub fn with_resolution(beta: SpaceTimeField, res: &Resolution) -> Result<Self> {
        let beta = beta.real_part();
        let beta_tilde = invert_diffeo_with(&beta, res)?;
        let composition_residual = composition_residual(&beta, &beta_tilde);
        if composition_residual > COMPOSITION_TOL {
            return Err(Error::ConvergenceFailure {
                residual: composition_residual,
                iterations: FIXED_POINT_MAX_ITER,
            });
        }
        Ok(Self {
            invertibility_margin: invertibility_margin(&beta),
            beta,
            beta_tilde,
            composition_residual,
        })
    }

    pub fn identity() -> Self {
        Self {
            beta: SpaceTimeField::zeros(0, 0),
            beta_tilde: SpaceTimeField::zeros(0, 0),
            invertibility_margin: 1.0,
            composition_residual: 0.0,
        }
    }

    pub fn beta(&self) -> &SpaceTimeField {
        &self.beta
    }

    pub fn beta_tilde(&self) -> &SpaceTimeField {
        &self.beta_tilde
    }

    pub fn invertibility_margin(&self) -> f64 {
        self.invertibility_margin
    }

    pub fn composition_residual(&self) -> f64 {
        self.composition_residual
    }

    pub fn is_time_independent(&self) -> bool {
        self.beta.kt() == 0
    }
}

/// Apply the transform at time `t`, keeping the state's cutoff.
pub fn apply_transform(
    tr: &DiffeoTransform,
    t: f64,
    u: &StateVector,
    dir: Direction,
) -> Result<StateVector> {
    apply_transform_to(tr, t, u, dir, u.cutoff())
}

/// Apply the transform at time `t` and project onto `|k| ≤ cutoff`.
pub fn apply_transform_to(
    tr: &DiffeoTransform,
    t: f64,
    u: &StateVector,
    dir: Direction,
    cutoff: usize,
) -> Result<StateVector> {
    let disp = match dir {
        Direction::Forward => tr.beta.slice_at(t),
        Direction::Inverse => tr.beta_tilde.slice_at(t),
    };
    let jac = disp.derivative();
    let band = cutoff.max(u.cutoff()) + disp.cutoff();
    let n = good_size(2 * (2 * band + 1));
    let xs = grid(n);
    let d = disp.to_real_samples(n)?;
    let j = jac.to_real_samples(n)?;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let stretch = 1.0 + j[i];
        if stretch <= 0.0 {
            return Err(Error::DiffeoNotInvertible { margin: stretch, threshold: 0.0 });
        }
        samples.push(u.field().eval(xs[i] + d[i]) * stretch.sqrt());
    }
    let (field, _) = TorusField::project_samples(&samples, cutoff)?;
    Ok(StateVector::new(field, u.time()))
}

/// Exact conjugated coefficient `w' = [w (1+β_x) − β_t] ∘ φ^{-1}`.
pub fn pushforward_coefficient(w: &SpaceTimeField, tr: &DiffeoTransform) -> Result<SpaceTimeField> {
    pushforward_coefficient_with(w, tr, &Resolution::default())
}

pub fn pushforward_coefficient_with(
    w: &SpaceTimeField,
    tr: &DiffeoTransform,
    res: &Resolution,
) -> Result<SpaceTimeField> {
    let bx = tr.beta.derivative_x();
    let bt = tr.beta.derivative_t();
    let kx0 = w.kx() + tr.beta.kx();
    let kt0 = if w.kt() == 0 && tr.beta.kt() == 0 { 0 } else { w.kt() + tr.beta.kt() };
    let (out, _) = spectralize(kx0, kt0, res, |t, xs, out| {
        let wt = w.slice_at(t);
        let bxt = bx.slice_at(t);
        let btt = bt.slice_at(t);
        let inv = tr.beta_tilde.slice_at(t);
        for (o, &y) in out.iter_mut().zip(xs) {
            let x = y + inv.eval_real(y);
            *o = wt.eval_real(x) * (1.0 + bxt.eval_real(x)) - btt.eval_real(x);
        }
        Ok(())
    })?;
    Ok(out)
}

/// `T_m` at time `t`: `u(x) ↦ u(x − mt)`; `Inverse` shifts by `+mt`.
pub fn apply_translation(u: &StateVector, m: i64, t: f64, dir: Direction) -> StateVector {
    let sign = match dir {
        Direction::Forward => -1.0,
        Direction::Inverse => 1.0,
    };
    let k0 = u.cutoff() as i64;
    let coeffs = u
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, &c)| c * Complex64::cis(sign * ((i as i64 - k0) * m) as f64 * t))
        .collect();
    StateVector::from_coeffs(u.cutoff(), coeffs, u.time())
}

/// Output of the constant-coefficient reduction of `X_eff`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantCoefficient {
    pub m_hat: f64,
    pub lambda: TorusField,
    pub map: DiffeoTransform,
    /// `max |(1+λ')X_eff − m̂|` on the grid.
    pub equation_residual: f64,
    /// `max |(1+λ')X_eff ∘ (id+λ̃) − m̂|` on an offset grid.
    pub flatness: f64,
}

/// `m̂ = 2π / ∫ X_eff^{-1}`, `λ_k = f_k/(ik)` with `f = m̂/X_eff − 1`, and the map `Λ`.
pub fn constant_coefficient_reduce(x_eff: &TorusField) -> Result<ConstantCoefficient> {
    let report = classify_profile(x_eff, &Tolerances::default());
    if report.verdict != Verdict::Stable {
        return Err(Error::NotResonantlyStable { min_abs: report.min_abs_value });
    }
    let max_k = 1024;
    let mut k = (2 * x_eff.cutoff() + 8).min(max_k);
    let (m_hat, f) = loop {
        let n = good_size(2 * (2 * k + 1));
        let xs = x_eff.to_real_samples(n)?;
        let inv: Vec<f64> = xs.iter().map(|v| 1.0 / v).collect();
        let m_hat = inv.len() as f64 / inv.iter().sum::<f64>();
        let samples: Vec<f64> = inv.iter().map(|v| m_hat * v - 1.0).collect();
        let (f, tail) = TorusField::project_real_samples(&samples, k)?;
        if tail <= 1e-15 * f.l2_norm().max(1.0) || k >= max_k {
            break (m_hat, f);
        }
        k = (2 * k).min(max_k);
    };
    let kk = f.cutoff() as i64;
    let coeffs = (-kk..=kk)
        .map(|j| if j == 0 { Complex64::new(0.0, 0.0) } else { f.coeff(j) / Complex64::new(0.0, j as f64) })
        .collect();
    let lambda = TorusField::real_from_coeffs(f.cutoff(), coeffs);
    let map = DiffeoTransform::new(SpaceTimeField::from_torus(&lambda, 0))?;

    let dl = lambda.derivative();
    let n = good_size(4 * (2 * f.cutoff() + 1)).max(256);
    let mut equation_residual: f64 = 0.0;
    for x in grid(n) {
        equation_residual = equation_residual
            .max(((1.0 + dl.eval_real(x)) * x_eff.eval_real(x) - m_hat).abs());
    }
    let inv = map.beta_tilde().slice_at(0.0);
    let mut flatness: f64 = 0.0;
    for i in 0..n {
        let y = TWO_PI * (i as f64 + 0.5) / n as f64;
        let x = y + inv.eval_real(y);
        flatness = flatness.max(((1.0 + dl.eval_real(x)) * x_eff.eval_real(x) - m_hat).abs());
    }
    Ok(ConstantCoefficient { m_hat, lambda, map, equation_residual, flatness })
}

/// Options for [`normal_form_reduce`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalFormOptions {
    pub resolution: Resolution,
    /// Coefficients below this magnitude are dropped between steps.
    pub trim_tol: f64,
}

impl Default for NormalFormOptions {
    fn default() -> Self {
        Self { resolution: Resolution { max_kx: 128, max_kt: 128, rel_tol: 1e-15 }, trim_tol: 1e-17 }
    }
}

/// Chain `Ψ = Φ₁ ∘ … ∘ Φ_N ∘ T_m^{-1}` and the decomposition of the final coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalFormChain {
    pub m: i64,
    pub epsilon: f64,
    pub order: usize,
    pub steps: Vec<DiffeoTransform>,
    pub translation_applied: bool,
    /// `w_0 = m + εV`, then the coefficient after each step.
    pub coefficient_history: Vec<SpaceTimeField>,
    /// `⟨V⟩_m`.
    pub averaged: TorusField,
    /// Time-independent part of the translated coefficient: `ε⟨V⟩_m + ε²Z`.
    pub resonant_profile: TorusField,
    pub z: TorusField,
    /// Time-dependent part of the translated coefficient.
    pub w_rem: SpaceTimeField,
    pub lambda: Option<TorusField>,
    pub lambda_map: Option<DiffeoTransform>,
    pub m_hat: Option<f64>,
}

/// Order-`N` resonant normal form of `w = m + εV`.
pub fn normal_form_reduce(
    v: &SpaceTimeField,
    m: i64,
    epsilon: f64,
    order: usize,
) -> Result<NormalFormChain> {
    normal_form_reduce_with(v, m, epsilon, order, &NormalFormOptions::default())
}

pub fn normal_form_reduce_with(
    v: &SpaceTimeField,
    m: i64,
    epsilon: f64,
    order: usize,
    opts: &NormalFormOptions,
) -> Result<NormalFormChain> {
    if m <= 0 {
        return Err(Error::InvalidFrequency(m));
    }
    if order == 0 {
        return Err(Error::InvalidParameter("normal-form order must be ≥ 1".into()));
    }
    let averaged = resonant_average(v, m)?;
    let mut w = v.scale(epsilon).add_constant(m as f64);
    let mut history = vec![w.clone()];
    let mut steps = Vec::with_capacity(order);
    for step in 1..=order {
        let rho = w.add_constant(-(m as f64));
        let beta = solve_homological(&rho, m)?.trimmed(opts.trim_tol);
        let tr = if beta.l2_norm() == 0.0 {
            DiffeoTransform::identity()
        } else {
            DiffeoTransform::with_resolution(beta, &opts.resolution)
                .map_err(|e| Error::NormalFormFailed { step, source: Box::new(e) })?
        };
        if tr.beta().l2_norm() > 0.0 {
            w = pushforward_coefficient_with(&w, &tr, &opts.resolution)
                .map_err(|e| Error::NormalFormFailed { step, source: Box::new(e) })?
                .trimmed(opts.trim_tol);
        }
        history.push(w.clone());
        steps.push(tr);
    }
    let translated = w.add_constant(-(m as f64)).translated(m);
    let resonant_profile = {
        let kx = translated.kx() as i64;
        let coeffs = (-kx..=kx).map(|k| translated.coeff(k, 0)).collect();
        TorusField::real_from_coeffs(translated.kx(), coeffs)
    };
    let w_rem = translated.sub(&SpaceTimeField::from_torus(&resonant_profile, translated.kt()));
    let z = resonant_profile
        .sub(&averaged.scale(epsilon))
        .scale(1.0 / (epsilon * epsilon));
    Ok(NormalFormChain {
        m,
        epsilon,
        order,
        steps,
        translation_applied: true,
        coefficient_history: history,
        averaged,
        resonant_profile,
        z,
        w_rem,
        lambda: None,
        lambda_map: None,
        m_hat: None,
    })
}

impl NormalFormChain {
    /// Coefficient of the equation satisfied by `Ψ^{-1}u`.
    pub fn translated_coefficient(&self) -> SpaceTimeField {
        SpaceTimeField::from_torus(&self.resonant_profile, self.w_rem.kt()).add(&self.w_rem)
    }

    pub fn remainder_norm(&self) -> f64 {
        self.w_rem.l2_norm()
    }

    /// `X_eff = ⟨V⟩_m + εZ`.
    pub fn effective_profile(&self) -> TorusField {
        self.resonant_profile.scale(1.0 / self.epsilon)
    }

    /// Attach the constant-coefficient reduction of `X_eff`.
    pub fn reduce_constant(&mut self) -> Result<ConstantCoefficient> {
        let cc = constant_coefficient_reduce(&self.effective_profile())?;
        self.lambda = Some(cc.lambda.clone());
        self.lambda_map = Some(cc.map.clone());
        self.m_hat = Some(cc.m_hat);
        Ok(cc)
    }

    /// Coefficient after `Λ`: `εm̂ + (pushed-forward remainder)`.
    pub fn reduced_coefficient(&self) -> Result<SpaceTimeField> {
        let w = self.translated_coefficient();
        match &self.lambda_map {
            Some(map) => pushforward_coefficient(&w, map),
            None => Ok(w),
        }
    }

    /// `Ψ^{-1}(t) u = T_m Φ_N^{-1} ⋯ Φ_1^{-1} u`.
    pub fn to_normal_frame(&self, t: f64, u: &StateVector) -> Result<StateVector> {
        let mut v = u.clone();
        for tr in &self.steps {
            if tr.beta().l2_norm() > 0.0 {
                v = apply_transform(tr, t, &v, Direction::Inverse)?;
            }
        }
        Ok(apply_translation(&v, self.m, t, Direction::Forward))
    }

    /// `Ψ(t) u_N = Φ_1 ⋯ Φ_N T_m^{-1} u_N`.
    pub fn from_normal_frame(&self, t: f64, u: &StateVector) -> Result<StateVector> {
        let mut v = apply_translation(u, self.m, t, Direction::Inverse);
        for tr in self.steps.iter().rev() {
            if tr.beta().l2_norm() > 0.0 {
                v = apply_transform(tr, t, &v, Direction::Forward)?;
            }
        }
        Ok(v)
    }

    /// `Λ^{-1} Ψ^{-1}(t) u`; requires [`reduce_constant`](Self::reduce_constant).
    pub fn to_reduced_frame(&self, t: f64, u: &StateVector) -> Result<StateVector> {
        let v = self.to_normal_frame(t, u)?;
        match &self.lambda_map {
            Some(map) => apply_transform(map, t, &v, Direction::Inverse),
            None => Ok(v),
        }
    }

    pub fn from_reduced_frame(&self, t: f64, v: &StateVector) -> Result<StateVector> {
        let u = match &self.lambda_map {
            Some(map) => apply_transform(map, t, v, Direction::Forward)?,
            None => v.clone(),
        };
        self.from_normal_frame(t, &u)
    }
}
