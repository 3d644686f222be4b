mod common;

use std::f64::consts::TAU;

use common::{c, cosines, random_spacetime, rng};
use rand::Rng;
use rtl_core::evolve::{integrate, IntegrateOptions, TransportCoefficient};
use rtl_core::normal_form::*;
use rtl_core::resonance::resonant_average;
use rtl_core::spectral::{SpaceTimeField, StateVector, TorusField};
use rtl_core::Error;

fn max_grid_error(f: &SpaceTimeField, exact: impl Fn(f64, f64) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..17 {
        for j in 0..23 {
            let t = TAU * i as f64 / 17.0 + 0.1;
            let x = TAU * j as f64 / 23.0 + 0.05;
            worst = worst.max((f.eval(t, x).re - exact(t, x)).abs());
        }
    }
    worst
}

#[test]
fn homological_examples() {
    let w = cosines(0.0, &[(1, -1, 1.0)]);
    let beta = solve_homological(&w, 1).unwrap();
    assert!(max_grid_error(&beta, |t, x| -0.5 * (x - t).sin()) < 1e-14);
    assert!(homological_residual(&w, &beta, 1).unwrap() < 1e-14);

    let w = cosines(0.0, &[(1, 1, 1.0)]);
    assert_eq!(solve_homological(&w, 1).unwrap().l2_norm(), 0.0);

    // sin(2t) = (e^{2it} − e^{−2it}) / 2i
    let w = SpaceTimeField::from_modes_auto(&[(0, 2, c(0.0, -0.5)), (0, -2, c(0.0, 0.5))]);
    let beta = solve_homological(&w, 1).unwrap();
    assert!(max_grid_error(&beta, |t, _| -0.5 * (2.0 * t).cos()) < 1e-14);
    assert!(homological_residual(&w, &beta, 1).unwrap() < 1e-14);

    assert_eq!(solve_homological(&w, 0), Err(Error::InvalidFrequency(0)));
}

#[test]
fn homological_residual_random() {
    let mut r = rng(11);
    for i in 0..50 {
        let m = 1 + (i % 3) as i64;
        let w = random_spacetime(&mut r, 8, 12, 0.8);
        let beta = solve_homological(&w, m).unwrap();
        let res = homological_residual(&w, &beta, m).unwrap();
        assert!(res < 1e-10 * w.l2_norm().max(1.0), "m={m} residual {res}");
    }
}

#[test]
fn inversion_examples() {
    let beta = SpaceTimeField::constant(0.4, 0, 0);
    let tilde = invert_diffeo(&beta).unwrap();
    assert!((tilde.coeff(0, 0).re + 0.4).abs() < 1e-14);

    let zero = SpaceTimeField::zeros(2, 2);
    assert!(invert_diffeo(&zero).unwrap().l2_norm() < 1e-15);

    let beta = SpaceTimeField::from_torus(&TorusField::from_real_fn(1, |x| 0.3 * x.sin()), 0);
    let tilde = invert_diffeo(&beta).unwrap();
    assert!(composition_residual(&beta, &tilde) < 1e-12);

    // independent fixed-point oracle: y = x + β(x) ⇒ x = y − β(x)
    for y in [0.0f64, 0.7, 2.0, 4.5] {
        let mut x = y;
        for _ in 0..200 {
            x = y - 0.3 * x.sin();
        }
        assert!((y + tilde.eval(0.0, y).re - x).abs() < 1e-12);
    }
}

#[test]
fn non_invertible_rejected() {
    let beta = SpaceTimeField::from_torus(&TorusField::from_real_fn(1, |x| 1.5 * x.sin()), 0);
    assert!(invertibility_margin(&beta) < 0.0);
    assert!(matches!(DiffeoTransform::new(beta), Err(Error::DiffeoNotInvertible { .. })));
}

#[test]
fn transform_round_trip_and_unitarity() {
    let beta = SpaceTimeField::from_modes_auto(&[(1, 1, c(0.0, -0.1)), (-1, -1, c(0.0, 0.1))]);
    // β = 0.2 sin(x + t)
    assert!(max_grid_error(&beta, |t, x| 0.2 * (x + t).sin()) < 1e-15);
    let tr = DiffeoTransform::new(beta).unwrap();
    assert!(tr.invertibility_margin() > 0.79);
    let u = StateVector::plane_wave(5, 96);
    let t = 0.7;
    let fwd = apply_transform(&tr, t, &u, Direction::Forward).unwrap();
    let back = apply_transform(&tr, t, &fwd, Direction::Inverse).unwrap();
    assert!(back.l2_distance(&u) < 1e-9);
    assert!((fwd.l2_norm() - 1.0).abs() < 1e-9);
    assert!((back.l2_norm() - 1.0).abs() < 1e-9);

    let id = DiffeoTransform::identity();
    let same = apply_transform(&id, t, &u, Direction::Forward).unwrap();
    assert!(same.l2_distance(&u) < 1e-13);
}

#[test]
fn translation_is_exact() {
    let u = StateVector::new(TorusField::from_real_fn(4, |x| (x.cos()).powi(3)), 0.0);
    let v = apply_translation(&u, 2, 0.3, Direction::Forward);
    for x in [0.1, 1.0, 3.0] {
        assert!((v.field().eval(x) - u.field().eval(x - 0.6)).norm() < 1e-14);
    }
    let back = apply_translation(&v, 2, 0.3, Direction::Inverse);
    assert!(back.l2_distance(&u) < 1e-15);
}

#[test]
fn pushforward_examples() {
    let w = cosines(1.0, &[(1, 1, 0.3)]);
    let same = pushforward_coefficient(&w, &DiffeoTransform::identity()).unwrap();
    assert!(same.max_coeff_diff(&w) < 1e-14);

    // β = 0.3 sin t ⇒ w' = m − 0.3 cos t
    let beta = SpaceTimeField::from_modes_auto(&[(0, 1, c(0.0, -0.15)), (0, -1, c(0.0, 0.15))]);
    let tr = DiffeoTransform::new(beta).unwrap();
    let w = SpaceTimeField::constant(2.0, 0, 0);
    let out = pushforward_coefficient(&w, &tr).unwrap();
    assert!(max_grid_error(&out, |t, _| 2.0 - 0.3 * t.cos()) < 1e-12);
}

#[test]
fn pushforward_resonant_content() {
    let v = cosines(0.5, &[(1, 1, 1.0), (1, -1, 0.7), (2, 1, 0.4)]);
    let avg = resonant_average(&v, 1).unwrap();
    let lifted = SpaceTimeField::lift_translated(&avg, 1, 4);
    let mut prev = None;
    for eps in [0.04, 0.02, 0.01] {
        let w = v.scale(eps).add_constant(1.0);
        let beta = solve_homological(&v, 1).unwrap().scale(eps);
        let tr = DiffeoTransform::new(beta).unwrap();
        let out = pushforward_coefficient(&w, &tr).unwrap();
        let err = out.add_constant(-1.0).scale(1.0 / eps).sub(&lifted).l2_norm();
        if let Some(p) = prev {
            let ratio: f64 = p / err;
            assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");
        }
        prev = Some(err);
    }
}

fn evolve_to(w: &SpaceTimeField, u0: &StateVector, t: f64, dt: f64) -> StateVector {
    let opts = IntegrateOptions { dt: Some(dt), keep_states: true, ..Default::default() };
    let traj = integrate(&TransportCoefficient::from_field(w), u0, t, u0.cutoff(), &opts).unwrap();
    traj.final_state().unwrap().clone()
}

#[test]
fn pushforward_commutes_with_evolution() {
    let w = cosines(1.0, &[(1, 1, 0.2), (1, -2, 0.15)]);
    let beta = SpaceTimeField::from_modes_auto(&[
        (1, -1, c(0.0, -0.05)),
        (-1, 1, c(0.0, 0.05)),
        (0, 1, c(0.03, 0.0)),
        (0, -1, c(0.03, 0.0)),
    ]);
    let tr = DiffeoTransform::new(beta).unwrap();
    let w2 = pushforward_coefficient(&w, &tr).unwrap().trimmed(1e-15);
    let u0 = StateVector::new(TorusField::from_complex_fn(48, |x| c(x.sin().exp(), 0.0) * c(0.0, 3.0 * x).exp()), 0.0);
    let t_end = 0.5;
    let v0 = apply_transform(&tr, 0.0, &u0, Direction::Inverse).unwrap();
    let mut errs = Vec::new();
    for dt in [0.02, 0.01, 0.005] {
        let u = evolve_to(&w, &u0, t_end, dt);
        let lhs = apply_transform(&tr, t_end, &u, Direction::Inverse).unwrap();
        let rhs = evolve_to(&w2, &v0, t_end, dt);
        errs.push(lhs.l2_distance(&rhs));
    }
    for pair in errs.windows(2) {
        let ratio = pair[0] / pair[1];
        assert!((ratio - 4.0).abs() < 0.6, "errors {errs:?}");
    }
}

#[test]
fn completely_resonant_chain_is_trivial() {
    let v = cosines(0.0, &[(1, 1, 1.0)]);
    for order in 1..=3 {
        let chain = normal_form_reduce(&v, 1, 0.1, order).unwrap();
        assert!(chain.steps.iter().all(|s| s.beta().l2_norm() == 0.0));
        assert!(chain.remainder_norm() < 1e-15);
        assert!(chain.z.l2_norm() < 1e-12);
        let expected = TorusField::from_real_fn(1, |x| 0.1 * x.cos());
        assert!(chain.resonant_profile.max_coeff_diff(&expected) < 1e-15);
    }
}

#[test]
fn nonresonant_chain_scaling() {
    let v = cosines(0.0, &[(1, -1, 1.0)]);
    let a = normal_form_reduce(&v, 1, 0.05, 1).unwrap();
    let b = normal_form_reduce(&v, 1, 0.025, 1).unwrap();
    // no ε-order resonant part survives
    assert!(a.averaged.l2_norm() < 1e-15);
    let pa = a.resonant_profile.l2_norm();
    let pb = b.resonant_profile.l2_norm();
    assert!(pa < 0.05 * 0.05 && (pa / pb - 4.0).abs() < 0.4, "{pa} {pb}");
    let ratio = a.remainder_norm() / b.remainder_norm();
    assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
}

fn slope(eps: &[f64], vals: &[f64]) -> f64 {
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[test]
fn remainder_order() {
    let v = cosines(0.3, &[(1, 1, 1.0), (1, -1, 0.8), (1, 0, 0.5), (2, 1, 0.3)]);
    let eps = [0.1, 0.05, 0.025];
    for order in [1usize, 2] {
        let rem: Vec<f64> = eps
            .iter()
            .map(|&e| normal_form_reduce(&v, 1, e, order).unwrap().remainder_norm())
            .collect();
        let s = slope(&eps, &rem);
        assert!((s - (order as f64 + 1.0)).abs() < 0.2, "N={order} slope {s} {rem:?}");
    }
}

#[test]
fn chain_frames_are_inverse() {
    let v = cosines(2.0, &[(1, 1, 1.0), (1, -1, 0.5)]);
    let mut chain = normal_form_reduce(&v, 1, 0.05, 2).unwrap();
    chain.reduce_constant().unwrap();
    let u = StateVector::new(TorusField::from_complex_fn(64, |x| c(0.0, 4.0 * x).exp() * (x.cos()).exp()), 0.0);
    let norm = u.l2_norm();
    for t in [0.0, 1.3, 7.0] {
        let r = chain.to_reduced_frame(t, &u).unwrap();
        assert!((r.l2_norm() - norm).abs() < 1e-9 * norm);
        let back = chain.from_reduced_frame(t, &r).unwrap();
        assert!(back.l2_distance(&u) < 1e-9 * norm);
    }
}

#[test]
fn constant_reduction_examples() {
    let x_eff = TorusField::from_real_fn(1, |x| 2.0 + x.cos());
    let cc = constant_coefficient_reduce(&x_eff).unwrap();
    // trapezoid rule is spectrally accurate for periodic integrands
    let n = 4096;
    let integral: f64 = (0..n).map(|i| 1.0 / (2.0 + (TAU * i as f64 / n as f64).cos())).sum::<f64>() * TAU / n as f64;
    let oracle = TAU / integral;
    assert!((cc.m_hat - oracle).abs() < 1e-12);
    assert!((cc.m_hat - 3f64.sqrt()).abs() < 1e-9);
    assert!(cc.flatness < 1e-8);
    assert!(cc.equation_residual < 1e-10);

    let cc = constant_coefficient_reduce(&TorusField::constant(1.7, 2)).unwrap();
    assert!((cc.m_hat - 1.7).abs() < 1e-14);
    assert!(cc.lambda.l2_norm() < 1e-15);

    let err = constant_coefficient_reduce(&TorusField::from_real_fn(1, f64::cos)).unwrap_err();
    assert!(matches!(err, Error::NotResonantlyStable { .. }));
}

#[test]
fn reduced_coefficient_is_flat_at_leading_order() {
    let v = cosines(2.0, &[(1, 1, 1.0)]);
    let mut chain = normal_form_reduce(&v, 1, 0.1, 1).unwrap();
    chain.reduce_constant().unwrap();
    let red = chain.reduced_coefficient().unwrap();
    let m_hat = chain.m_hat.unwrap();
    let mut r = rng(5);
    for _ in 0..20 {
        let t = r.random_range(0.0..TAU);
        let x = r.random_range(0.0..TAU);
        assert!((red.eval(t, x).re - 0.1 * m_hat).abs() < 1e-9);
    }
    assert!((m_hat - 3f64.sqrt()).abs() < 1e-9);
}

#[test]
fn chain_serializes() {
    let v = cosines(0.0, &[(1, -1, 1.0)]);
    let chain = normal_form_reduce(&v, 1, 0.05, 1).unwrap();
    let json = serde_json::to_string(&chain).unwrap();
    let back: NormalFormChain = serde_json::from_str(&json).unwrap();
    assert_eq!(back, chain);
}
