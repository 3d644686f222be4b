mod common;

use std::f64::consts::PI;

use common::{cosines, random_spacetime, rng};
use rtl_core::resonance::*;
use rtl_core::spectral::{grid, SpaceTimeField, TorusField};
use rtl_core::Error;

/// `(1/2π)∫ V(t, x − mt) dt` by the trapezoid rule, exact for trigonometric polynomials.
fn quadrature_average(v: &SpaceTimeField, m: i64, x: f64) -> f64 {
    let n = 2 * (v.kt() + m as usize * v.kx()) + 3;
    (0..n)
        .map(|j| {
            let t = 2.0 * PI * j as f64 / n as f64;
            v.eval(t, x - m as f64 * t).re
        })
        .sum::<f64>()
        / n as f64
}

#[test]
fn resonant_average_examples() {
    let avg = resonant_average(&cosines(0.0, &[(1, 1, 1.0)]), 1).unwrap();
    assert!(avg.max_coeff_diff(&TorusField::from_real_fn(1, f64::cos)) < 1e-15);

    let avg = resonant_average(&cosines(0.0, &[(1, -1, 1.0)]), 1).unwrap();
    assert_eq!(avg.l2_norm(), 0.0);

    // 2 + cos(x+t) + sin(2x−t)
    let h = common::c(0.0, -0.5);
    let mut v = cosines(2.0, &[(1, 1, 1.0)]).resized(2, 1);
    v = v.add(&SpaceTimeField::from_modes(2, 1, &[(2, -1, h), (-2, 1, h.conj())]));
    let avg = resonant_average(&v, 1).unwrap();
    for x in grid(11) {
        assert!((avg.eval_real(x) - (2.0 + x.cos())).abs() < 1e-14);
        assert!((avg.eval_real(x) - quadrature_average(&v, 1, x)).abs() < 1e-13);
    }
}

#[test]
fn nonpositive_frequency_rejected() {
    let v = cosines(0.0, &[(1, 1, 1.0)]);
    assert!(matches!(resonant_average(&v, 0), Err(Error::InvalidFrequency(0))));
    assert!(matches!(classify(&v, -2, &Tolerances::default()), Err(Error::InvalidFrequency(-2))));
}

#[test]
fn truncated_resonant_modes_are_recorded() {
    let v = cosines(0.0, &[(3, 1, 1.0)]);
    let r = resonant_average_checked(&v, 1).unwrap();
    assert!(r.truncated_modes.contains(&3) && r.truncated_modes.contains(&-3));
}

#[test]
fn random_fields_match_quadrature() {
    let mut r = rng(21);
    for m in 1..=3 {
        let v = random_spacetime(&mut r, 6, 8, 0.8);
        let avg = resonant_average(&v, m).unwrap();
        for x in grid(13) {
            assert!((avg.eval_real(x) - quadrature_average(&v, m, x)).abs() < 1e-12);
        }
    }
}

#[test]
fn complete_resonance() {
    assert!(is_completely_resonant(&cosines(2.0, &[(1, 1, 1.0)]), 1, 1e-12).unwrap());
    assert!(!is_completely_resonant(&cosines(0.0, &[(1, 1, 1.0), (1, -1, 0.5)]), 1, 1e-12).unwrap());
    let v = cosines(0.0, &[(1, 1, 1.0), (1, -1, 0.5)]);
    let nr = non_resonant_part(&v, 1).unwrap();
    assert!(resonant_average(&nr, 1).unwrap().l2_norm() < 1e-15);
}

#[test]
fn zero_finding_and_verdicts() {
    let tol = Tolerances::default();
    let cos = cosines(0.0, &[(1, 1, 1.0)]);
    let rep = classify(&cos, 1, &tol).unwrap();
    assert_eq!(rep.verdict, Verdict::Unstable);
    assert_eq!(rep.zeros.len(), 2);
    assert!((rep.zeros[0].x0 - PI / 2.0).abs() < 1e-12);
    assert!((rep.zeros[1].x0 - 1.5 * PI).abs() < 1e-12);
    assert!((rep.nu - 1.0).abs() < 1e-12);

    let stable = classify(&cosines(2.0, &[(1, 1, 1.0)]), 1, &tol).unwrap();
    assert_eq!(stable.verdict, Verdict::Stable);
    assert!(stable.zeros.is_empty() && (stable.min_abs_value - 1.0).abs() < 1e-10);

    let tangent = classify(&cosines(1.0, &[(1, 1, 1.0)]), 1, &tol).unwrap();
    assert_eq!(tangent.verdict, Verdict::Degenerate);
    assert!(tangent.zeros.iter().any(|z| z.kind == ZeroKind::Tangency && (z.x0 - PI).abs() < 1e-6));

    let zero = classify(&SpaceTimeField::zeros(2, 2), 1, &tol).unwrap();
    assert_eq!(zero.verdict, Verdict::Degenerate);
}

#[test]
fn zeros_of_higher_harmonics() {
    let x = TorusField::from_real_fn(3, |x| (3.0 * x).sin());
    let z = find_zeros(&x);
    assert_eq!(z.len(), 6);
    for (i, zr) in z.iter().enumerate() {
        assert!((zr.x0 - i as f64 * PI / 3.0).abs() < 1e-12);
        assert!((zr.slope.abs() - 3.0).abs() < 1e-10);
        assert!(x.eval_real(zr.x0).abs() < 1e-12);
    }
}

#[test]
fn classification_is_scale_invariant() {
    let tol = Tolerances::default();
    for a in [1e-6, 1.0, 1e4] {
        let v = cosines(0.0, &[(1, 1, a)]);
        assert_eq!(classify(&v, 1, &tol).unwrap().verdict, Verdict::Unstable);
    }
}

#[test]
fn regularize_degenerate_presets() {
    let opts = RegularizeOptions::default();
    for v in [SpaceTimeField::zeros(1, 1), cosines(1.0, &[(1, 1, 1.0)])] {
        let out = regularize(&v, 1, 0.1, &opts).unwrap();
        assert_ne!(out.report.verdict, Verdict::Degenerate);
        assert!(out.distance() <= 0.1);
        let again = regularize(&v, 1, 0.1, &opts).unwrap();
        assert_eq!(out.shift, again.shift);
    }
    let stable = cosines(2.0, &[(1, 1, 1.0)]);
    let out = regularize(&stable, 1, 0.1, &opts).unwrap();
    assert_eq!(out.shift, 0.0);
}
