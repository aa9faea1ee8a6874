use std::f64::consts::PI;

use dstc::units::UnitSystem;
use dstc::wavepacket::{intensity_profile, intensity_profile_quadrature, path_intensity_drop, spectral_broadening};
use proptest::prelude::*;

/// erf by its Maclaurin series; fine for the small arguments used here.
fn erf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    for n in 1..60 {
        term *= -x * x / n as f64;
        sum += term / (2 * n + 1) as f64;
    }
    2.0 / PI.sqrt() * sum
}

/// Time average of the two profiles in closed form: √π erf(x)/(2x), x = √(π s).
fn oracle(s: f64) -> f64 {
    let x = (PI * s).sqrt();
    PI.sqrt() * erf_series(x) / (2.0 * x)
}

#[test]
fn broadening_formula() {
    let u = UnitSystem::dimensionless();
    assert!((spectral_broadening(0.5, 2.0, &u).unwrap() - (PI * 0.5).sqrt() / 2.0).abs() < 1e-15);
    assert!(spectral_broadening(-1.0, 1.0, &u).is_err());
    assert!(spectral_broadening(1.0, 0.0, &u).is_err());
}

#[test]
fn profile_quadrature_matches_closed_form() {
    // |∫g e^{iωτ}|² of a Gaussian spectrum of width σ is e^{−σ²τ²}.
    for (s, t) in [(0.7, 0.3), (2.0, 1.1), (0.1, 5.0)] {
        let q = intensity_profile_quadrature(s, t, 0.0).unwrap();
        assert!((q - intensity_profile(s, t, 0.0)).abs() < 1e-10, "{q}");
    }
}

#[test]
fn drop_matches_oracle() {
    let u = UnitSystem::dimensionless();
    for k in 1..=20 {
        let s = 0.005 * k as f64;
        for t in [0.5, 1.0, 3.0] {
            let d = path_intensity_drop(s, t, &u).unwrap();
            assert!((d.numeric - oracle(s)).abs() < 1e-12, "s = {s}: {} vs {}", d.numeric, oracle(s));
            assert!(d.warning.is_none());
        }
    }
    assert!(path_intensity_drop(0.5, 1.0, &u).unwrap().warning.is_some());
}

#[test]
fn residual_is_quadratic() {
    let u = UnitSystem::dimensionless();
    let mut c_fit: f64 = 0.0;
    for k in 1..=50 {
        let s = 0.002 * k as f64;
        let d = path_intensity_drop(s, 1.0, &u).unwrap();
        c_fit = c_fit.max((d.numeric - d.linear).abs() / (s * s));
    }
    // Expansion of the oracle: residual → π²/10 s².
    println!("fitted C = {c_fit:.6}");
    assert!(c_fit < PI * PI / 10.0 * 1.001, "C = {c_fit}");
    assert!(c_fit > 0.9);
}

proptest! {
    #[test]
    fn drop_is_monotone(a in 0.0f64..0.3, b in 0.0f64..0.3, t in 0.1f64..10.0) {
        let u = UnitSystem::dimensionless();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-9);
        let x = path_intensity_drop(lo, t, &u).unwrap().numeric;
        let y = path_intensity_drop(hi, t, &u).unwrap().numeric;
        prop_assert!(y < x);
    }
}
