mod common;

use std::f64::consts::TAU;

use common::{c, random_torus, rng};
use rand::Rng;
use rtl_core::classical_dynamics::{build_escape, Interval, IntervalUnion};
use rtl_core::spectral::{StateVector, TorusField};
use rtl_core::weyl_calculus::*;
use rtl_core::Error;

fn random_state(r: &mut impl Rng, cutoff: usize) -> StateVector {
    let coeffs = (0..2 * cutoff + 1)
        .map(|_| c(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
        .collect();
    StateVector::from_coeffs(cutoff, coeffs, 0.0)
}

#[test]
fn basic_symbols() {
    let k = 6;
    let id = weyl_matrix(&SymbolRep::constant(1.0), k);
    let d = weyl_matrix(&SymbolRep::d_dx(), k);
    for a in -6i64..=6 {
        for b in -6i64..=6 {
            let expect = if a == b { c(1.0, 0.0) } else { c(0.0, 0.0) };
            assert_eq!(id.entry(a, b), expect);
            let expect = if a == b { c(0.0, a as f64) } else { c(0.0, 0.0) };
            assert_eq!(d.entry(a, b), expect);
        }
    }
}

#[test]
fn transport_of_single_mode() {
    let n = 3i64;
    let p = TorusField::from_modes(3, &[(n, c(1.0, 0.0))]);
    let m = weyl_matrix(&SymbolRep::transport(&p), 10);
    for j in -10i64..=10 - n {
        assert_eq!(m.entry(j + n, j), c(0.0, j as f64 + 0.5 * n as f64));
    }
    assert_eq!(m.entry(0, 0), c(0.0, 0.0));
    assert_eq!(m.entry(1, 0), c(0.0, 0.0));
}

/// Column `j` of `u ↦ p u' + p' u / 2`, computed with spectral products.
fn transport_column(p: &TorusField, j: i64, cutoff: usize) -> StateVector {
    let e = TorusField::from_modes(cutoff, &[(j, c(1.0, 0.0))]);
    let f = p.mul(&e.derivative()).add(&p.derivative().mul(&e).scale(0.5));
    StateVector::new(f.resized(cutoff), 0.0)
}

#[test]
fn transport_identity_random() {
    let cutoff = 24;
    let mut r = rng(21);
    for _ in 0..20 {
        let p = random_torus(&mut r, cutoff / 2, 0.8);
        let m = weyl_matrix(&SymbolRep::transport(&p), cutoff);
        let kk = cutoff as i64;
        for j in -kk..=kk {
            let col = transport_column(&p, j, cutoff);
            for k in -kk..=kk {
                let got = m.entry(k, j);
                let want = col.coeffs()[(k + kk) as usize];
                assert!((got - want).norm() < 1e-13, "({k},{j}) {got} vs {want}");
            }
        }
        assert!(m.skew_hermitian_defect() < 1e-15);
    }
}

#[test]
fn multiplication_matches_pointwise_product() {
    let cutoff = 32;
    let mut r = rng(4);
    for _ in 0..10 {
        let p = random_torus(&mut r, 8, 0.7);
        let u = random_torus(&mut r, 16, 0.9);
        let m = weyl_matrix(&SymbolRep::multiplier(&p), cutoff);
        let out = m.apply(&StateVector::new(u.resized(cutoff), 0.0)).unwrap();
        let n = 256;
        let ps = p.to_samples(n).unwrap();
        let us = u.to_samples(n).unwrap();
        let os = out.field().to_samples(n).unwrap();
        for i in 0..n {
            assert!((os[i] - ps[i] * us[i]).norm() < 1e-12);
        }
    }
}

#[test]
fn commutator_examples() {
    let mut r = rng(8);
    let cutoff = 24;
    for _ in 0..5 {
        let p = random_torus(&mut r, 4, 0.6);
        let q = random_torus(&mut r, 4, 0.6);
        let rep = commutator_check(&SymbolRep::transport(&p), &SymbolRep::transport(&q), cutoff);
        assert!(rep.affine);
        assert!(rep.max_discrepancy < 1e-12 * rep.max_entry.max(1.0), "{rep:?}");
    }
    let p = random_torus(&mut r, 4, 0.6);
    let f = SymbolRep::transport(&p);
    let rep = commutator_check(&f, &f, cutoff);
    assert!(rep.max_entry < 1e-12);

    // i[∂_x, e^{ix}] = i·(e^{ix})′ = −e^{ix}
    let e1 = TorusField::from_modes(1, &[(1, c(1.0, 0.0))]);
    let rep = commutator_check(&SymbolRep::d_dx(), &SymbolRep::multiplier(&e1), 8);
    assert!(rep.max_discrepancy < 1e-14);
    assert!((rep.max_entry - 1.0).abs() < 1e-14);
}

#[test]
fn poisson_bracket_of_affine_symbols() {
    // {iξp, iξq} = −ξ(p q′ − p′ q)
    let p = TorusField::from_real_fn(1, f64::cos);
    let q = TorusField::from_real_fn(1, f64::sin);
    let b = poisson_bracket(&SymbolRep::transport(&p), &SymbolRep::transport(&q)).unwrap();
    for (x, xi) in [(0.3f64, 2.0f64), (1.7, -3.0), (4.0, 0.5)] {
        let want = -xi * (x.cos() * x.cos() + x.sin() * x.sin());
        assert!((b.eval(x, xi) - c(want, 0.0)).norm() < 1e-13);
    }
}

#[test]
fn garding_lower_bound() {
    let cutoff = 40;
    let m = weyl_matrix(&SymbolRep::abs_cut(), cutoff);
    assert!(m.hermitian_defect() == 0.0);
    let mut r = rng(12);
    let mut worst = f64::INFINITY;
    for _ in 0..200 {
        let u = random_state(&mut r, cutoff);
        let q = quadratic_form(&m, &u).unwrap().re / u.l2_norm().powi(2);
        worst = worst.min(q);
    }
    // C ≤ 1 in ⟨Mu,u⟩ ≥ −C‖u‖²
    assert!(worst >= -1.0, "{worst}");
}

#[test]
fn quadratic_form_examples() {
    let cutoff = 16;
    let mut r = rng(30);
    let id = weyl_matrix(&SymbolRep::constant(1.0), cutoff);
    let u = random_state(&mut r, cutoff);
    let q = quadratic_form(&id, &u).unwrap();
    assert!((q.re - u.l2_norm().powi(2)).abs() < 1e-12 && q.im.abs() < 1e-15);

    let profile = random_torus(&mut r, 6, 0.7);
    let herm = weyl_matrix(&SymbolRep::profile_abs_cut(&profile), cutoff);
    assert!(herm.hermitian_defect() < 1e-15);
    for _ in 0..50 {
        let u = random_state(&mut r, cutoff);
        let q = quadratic_form(&herm, &u).unwrap();
        assert!(q.im.abs() < 1e-12 * q.norm().max(1.0));
    }

    let abs = weyl_matrix(&SymbolRep::abs_cut(), cutoff);
    let q = quadratic_form(&abs, &StateVector::plane_wave(10, cutoff)).unwrap();
    assert_eq!(q, c(10.0, 0.0));

    let err = quadratic_form(&abs, &StateVector::plane_wave(1, 4)).unwrap_err();
    assert!(matches!(err, Error::DimensionError { .. }));
}

#[test]
fn atilde_from_constant_profile() {
    let cutoff = 12;
    let (_, m) = atilde_from_profile(&TorusField::constant(1.0, 0), cutoff);
    let reference = weyl_matrix(&SymbolRep::abs_cut(), cutoff);
    assert_eq!(m.to_dense(), reference.to_dense());
    assert_eq!(m.bandwidth(), 0);
}

#[test]
fn atilde_diagonal_and_hermitian() {
    let esc = build_escape(&TorusField::from_real_fn(1, f64::cos), 0.01).unwrap();
    let cutoff = 64;
    let (sym, m) = build_atilde(&esc, cutoff).unwrap();
    assert!(sym.is_real(1e-12));
    assert!(m.hermitian_defect() < 1e-14);
    let mean = esc.a_tilde.mean();
    for k in [2i64, 10, 64, -64] {
        let want = mean * k.abs() as f64 * (1.0 - chi(k as f64));
        assert!((m.entry(k, k).re - want).abs() < 1e-13);
    }
}

fn cos_region() -> IntervalUnion {
    build_escape(&TorusField::from_real_fn(1, f64::cos), 0.01).unwrap().flow.w_region
}

#[test]
fn datum_norm_and_support() {
    let region = cos_region();
    let d = initial_datum(&region, 40, 256).unwrap();
    assert!((d.state.l2_norm() - 1.0).abs() < 1e-12);
    let (lo, hi) = d.support;
    let iv = Interval { lo, hi };
    assert!(region.contains(iv.center()));
    let n = 2048;
    let samples = d.state.field().to_samples(n).unwrap();
    for (i, s) in samples.iter().enumerate() {
        let x = TAU * i as f64 / n as f64;
        if !iv.contains(x) {
            assert!(s.norm() < 1e-12, "x = {x}: {}", s.norm());
        }
    }
    // the datum carries frequency ξ₀
    let peak = d.state.coeffs().iter().enumerate().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())).unwrap().0;
    assert_eq!(peak as i64 - 256, 40);
}

#[test]
fn datum_errors() {
    let tiny = IntervalUnion { intervals: vec![Interval { lo: 1.0, hi: 1.1 }] };
    assert!(matches!(initial_datum(&tiny, 10, 128), Err(Error::RegionTooSmall { .. })));
    assert!(matches!(initial_datum(&IntervalUnion::default(), 10, 128), Err(Error::RegionTooSmall { .. })));
    let region = cos_region();
    assert!(matches!(initial_datum(&region, 120, 128), Err(Error::InvalidParameter(_))));
}

#[test]
fn bump_shape() {
    let (lo, hi) = (1.0, 3.0);
    assert_eq!(region_bump(lo, hi, 2.0), 1.0);
    assert_eq!(region_bump(lo, hi, 1.5), 1.0);
    assert_eq!(region_bump(lo, hi, 1.01), 0.0);
    assert_eq!(region_bump(lo, hi, 4.0), 0.0);
    let mid = region_bump(lo, hi, lo + 0.5 * (2.0 / 32.0 + 2.0 / 4.0));
    assert!((mid - 0.5).abs() < 1e-12);
}

#[test]
fn virial_grows_linearly_in_frequency() {
    let esc = build_escape(&TorusField::from_real_fn(1, f64::cos), 0.01).unwrap();
    let cutoff = 256;
    let (_, m) = build_atilde(&esc, cutoff).unwrap();
    let xs: Vec<f64> = (20..=60).step_by(5).map(|x| x as f64).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&xi0| {
            let u = build_initial_datum(&esc.flow.w_region, xi0 as i64, cutoff).unwrap();
            virial(&m, &u).unwrap()
        })
        .collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    // ã ≤ −1/2 on the support, so A(0) ≥ ξ₀/2 up to a bounded correction
    assert!(slope >= 0.5, "C_χ = {slope}");
    assert!(1.0 - ss_res / ss_tot > 0.999);
}

#[test]
fn csv_export() {
    let m = weyl_matrix(&SymbolRep::d_dx(), 1);
    let mut buf = Vec::new();
    m.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,j,re,im"));
    assert!(text.contains("1,1,0e0,1e0"));
}
