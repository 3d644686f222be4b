#![allow(dead_code)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtl_core::spectral::{SpaceTimeField, TorusField};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn gauss_pair(rng: &mut ChaCha8Rng) -> Complex64 {
    c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

/// Real field with coefficients decaying like `decay^|k|`.
pub fn random_torus(rng: &mut ChaCha8Rng, cutoff: usize, decay: f64) -> TorusField {
    let kk = cutoff as i64;
    let mut coeffs = vec![c(0.0, 0.0); 2 * cutoff + 1];
    coeffs[cutoff] = c(rng.random_range(-1.0..1.0), 0.0);
    for k in 1..=kk {
        let v = gauss_pair(rng) * decay.powi(k as i32);
        coeffs[(kk + k) as usize] = v;
        coeffs[(kk - k) as usize] = v.conj();
    }
    TorusField::from_coeffs(cutoff, coeffs)
}

/// Real field on T² with coefficients decaying like `decay^(|k|+|l|)`.
pub fn random_spacetime(rng: &mut ChaCha8Rng, kx: usize, kt: usize, decay: f64) -> SpaceTimeField {
    let (kx_i, kt_i) = (kx as i64, kt as i64);
    let mut modes = Vec::new();
    for k in 0..=kx_i {
        for l in -kt_i..=kt_i {
            if k == 0 && l < 0 {
                continue;
            }
            let scale = decay.powi((k.abs() + l.abs()) as i32);
            if k == 0 && l == 0 {
                modes.push((0, 0, c(rng.random_range(-1.0..1.0), 0.0)));
                continue;
            }
            let v = gauss_pair(rng) * scale;
            modes.push((k, l, v));
            modes.push((-k, -l, v.conj()));
        }
    }
    SpaceTimeField::from_modes(kx, kt, &modes)
}

/// `cos(x + t)` style field from `(k, l, real amplitude)` cosine terms plus a constant.
pub fn cosines(constant: f64, terms: &[(i64, i64, f64)]) -> SpaceTimeField {
    let mut modes = vec![(0, 0, c(constant, 0.0))];
    for &(k, l, a) in terms {
        modes.push((k, l, c(0.5 * a, 0.0)));
        modes.push((-k, -l, c(0.5 * a, 0.0)));
    }
    SpaceTimeField::from_modes_auto(&modes)
}
