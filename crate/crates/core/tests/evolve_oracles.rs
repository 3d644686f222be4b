mod common;

use common::{c, cosines};
use rtl_core::evolve::*;
use rtl_core::spectral::{grid, SpaceTimeField, StateVector, TorusField};
use rtl_core::Error;

fn smooth_state(cutoff: usize, carrier: f64) -> StateVector {
    let f = TorusField::from_complex_fn(cutoff, |x| c((0.7 * x.sin()).exp(), 0.0) * c(0.0, carrier * x).exp());
    let n = f.l2_norm();
    StateVector::new(f.scale(1.0 / n), 0.0)
}

fn opts_dt(dt: f64) -> IntegrateOptions {
    IntegrateOptions { dt: Some(dt), keep_states: true, ..Default::default() }
}

#[test]
fn constant_speed_is_exact_translation() {
    let w = TransportCoefficient::constant_only(2.0);
    let k = 5;
    let u0 = StateVector::plane_wave(k, 16);
    let t = 3.3;
    let traj = integrate(&w, &u0, t, 16, &IntegrateOptions { s_list: vec![0.0, 1.0, 2.5], ..opts_dt(0.01) }).unwrap();
    let u = traj.final_state().unwrap();
    let want = c(0.0, k as f64 * 2.0 * t).exp();
    assert!((u.coeffs()[16 + k as usize] - want).norm() < 1e-12);
    for ns in &traj.norm_series {
        let v0 = ns.values[0];
        assert!(ns.values.iter().all(|v| (v - v0).abs() < 1e-12 * v0));
    }
    assert!(traj.scheme.cached_factorization);
}

#[test]
fn l2_conserved_for_time_dependent_coefficient() {
    let v = cosines(0.0, &[(1, 1, 1.0), (1, -1, 0.6), (2, 1, 0.3)]);
    let w = TransportCoefficient::original(&v, 1, 0.2);
    let u0 = smooth_state(64, 4.0);
    let traj = integrate(&w, &u0, 100.0, 64, &IntegrateOptions { dt: Some(5e-3), ..Default::default() }).unwrap();
    assert!(!traj.scheme.cached_factorization);
    assert!(traj.l2_drift < 1e-10, "drift {}", traj.l2_drift);
    assert!(traj.max_step_defect < 1e-12);
    assert!((traj.final_time() - 100.0).abs() < 1e-9);
}

#[test]
fn matches_characteristics_for_stationary_coefficient() {
    let w = TransportCoefficient::new(1.0, SpaceTimeField::from_torus(&TorusField::from_real_fn(1, |x| 0.3 * x.cos()), 0));
    let u0 = StateVector::new(TorusField::constant(1.0, 96), 0.0);
    let t = 5.0;
    let traj = integrate(&w, &u0, t, 96, &opts_dt(2e-3)).unwrap();
    let u = traj.final_state().unwrap();
    let xs = grid(64);
    let reference = characteristics_at(&w, u0.field(), t, &xs).unwrap();
    let err = xs
        .iter()
        .zip(&reference)
        .map(|(&x, r)| (u.field().eval(x) - r).norm())
        .fold(0.0, f64::max);
    assert!(err < 1e-4, "max error {err}");
    assert!((u.l2_norm() - 1.0).abs() < 1e-8);
}

#[test]
fn lagrangian_norms_match_galerkin() {
    let v = cosines(0.0, &[(1, 1, 1.0)]);
    let w = TransportCoefficient::original(&v, 1, 0.1);
    let u0 = circle_datum(10, 256).unwrap();
    let times = [0.0, 4.0, 8.0];
    let traj = integrate(&w, &u0, 8.0, 256, &IntegrateOptions { sample_interval: Some(4.0), ..opts_dt(1e-3) }).unwrap();
    let lag = lagrangian_h1_norms(&w, u0.field(), &times, 1024).unwrap();
    let gal = traj.series(1.0).unwrap();
    for i in 0..3 {
        assert!((lag[i] / gal[i] - 1.0).abs() < 1e-6, "t = {}: {} vs {}", times[i], lag[i], gal[i]);
    }
}

#[test]
fn second_order_in_dt() {
    let v = cosines(0.0, &[(1, 1, 1.0), (2, -1, 0.5)]);
    let w = TransportCoefficient::original(&v, 1, 0.2);
    let u0 = smooth_state(48, 3.0);
    let t = 1.0;
    let run = |dt: f64| integrate(&w, &u0, t, 48, &opts_dt(dt)).unwrap().final_state().unwrap().clone();
    let dt = 0.02;
    let reference = run(dt / 8.0);
    let e1 = run(dt).l2_distance(&reference);
    let e2 = run(dt / 2.0).l2_distance(&reference);
    // against a dt/8 reference the coarse errors carry a (1 − 1/64) and (1 − 1/16) factor
    let ratio = e1 / e2;
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn rejects_bad_input() {
    let w = TransportCoefficient::new(1.0, cosines(0.0, &[(8, 0, 1.0)]));
    let u0 = StateVector::plane_wave(1, 4);
    assert!(integrate(&w, &u0, 1.0, 4, &IntegrateOptions::default()).is_err());
    let w = TransportCoefficient::constant_only(1.0);
    assert!(matches!(integrate(&w, &u0, -1.0, 4, &IntegrateOptions::default()), Err(Error::InvalidParameter(_))));
}

#[test]
fn guard_stops_unresolved_runs() {
    let v = cosines(0.0, &[(1, 1, 1.0)]);
    let w = TransportCoefficient::original(&v, 1, 0.5);
    let u0 = circle_datum(10, 128).unwrap();
    let opts = IntegrateOptions { guard: Some(ResolutionGuard::default()), sample_interval: Some(0.5), ..opts_dt(5e-3) };
    let traj = integrate(&w, &u0, 100.0, 128, &opts).unwrap();
    let t = traj.unresolved_at.expect("should leave the band");
    assert!(t < 100.0 && traj.final_time() <= t + 1e-9);
}

#[test]
fn growth_fit_examples() {
    let t: Vec<f64> = (0..=400).map(|i| i as f64).collect();
    let ones = vec![3.0; t.len()];
    let f = fit_growth_rate(&t, &ones, (0.0, 400.0)).unwrap();
    assert_eq!(f.gamma, 0.0);
    assert_eq!(f.r_squared, 1.0);

    let v: Vec<f64> = t.iter().map(|t| (0.1 * t).exp()).collect();
    let f = fit_growth_rate(&t, &v, (0.0, 100.0)).unwrap();
    assert!((f.gamma - 0.1).abs() < 1e-12 && (f.r_squared - 1.0).abs() < 1e-12);

    let v: Vec<f64> = t.iter().map(|t| (0.05 * t).exp() * (2.0 + t.sin())).collect();
    let f = fit_growth_rate(&t, &v, (0.0, 250.0)).unwrap();
    assert!((0.045..=0.055).contains(&f.gamma), "{}", f.gamma);

    let mut bad = ones.clone();
    bad[7] = 0.0;
    assert_eq!(fit_growth_rate(&t, &bad, (0.0, 10.0)), Err(Error::InvalidSeries { index: 7 }));
    assert!(matches!(fit_growth_rate(&t, &ones[..3], (0.0, 1.0)), Err(Error::DimensionError { .. })));
}

#[test]
fn unperturbed_stability_ratio_is_one() {
    let v = cosines(2.0, &[(1, 1, 1.0)]);
    let opts = StabilityOptions { cutoff: 128, xi0: 8, samples: 100, ..Default::default() };
    let r = stability_experiment(&v, 1, 0.0, 1, &[1.0, 2.0], 20.0, &opts).unwrap();
    for s in r.sup_ratio.iter().chain(&r.reduced_sup_ratio) {
        assert!((s.ratio - 1.0).abs() < 1e-12, "{s:?}");
    }
}

#[test]
fn stability_rejects_unstable_field() {
    let v = cosines(0.0, &[(1, 1, 1.0)]);
    let err = stability_experiment(&v, 1, 0.1, 1, &[1.0], 1.0, &StabilityOptions::default()).unwrap_err();
    assert!(matches!(err, Error::WrongRegime { .. }));
    let v = cosines(2.0, &[(1, 1, 1.0)]);
    let err = instability_experiment(&v, 1, 0.1, 1.0, 10.0, 20, &InstabilityOptions::default()).unwrap_err();
    assert!(matches!(err, Error::WrongRegime { .. }));
}

#[test]
fn reduced_drift_scales_like_eps_squared() {
    let v = cosines(2.0, &[(1, 1, 1.0), (1, -1, 0.5)]);
    let opts = StabilityOptions { cutoff: 128, xi0: 8, samples: 200, drift_window: 10.0, ..Default::default() };
    let rates: Vec<f64> = [0.1, 0.05]
        .iter()
        .map(|&eps| stability_experiment(&v, 1, eps, 1, &[1.0], 10.0 * eps * eps, &opts).unwrap().reduced_drift_rate)
        .collect();
    let ratio = rates[0] / rates[1];
    assert!((3.0..=5.0).contains(&ratio), "rates {rates:?}");
}

#[test]
fn norms_csv_layout() {
    let w = TransportCoefficient::constant_only(1.0);
    let u0 = StateVector::plane_wave(1, 4);
    let opts = IntegrateOptions { s_list: vec![0.0, 1.0], sample_interval: Some(0.5), ..opts_dt(0.1) };
    let traj = integrate(&w, &u0, 1.0, 4, &opts).unwrap();
    let csv = traj.norms_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,s,norm");
    assert_eq!(lines.len(), 1 + 2 * traj.times.len());
    assert!(lines[1].starts_with("0,0,"));
}
