//! Independent reference computations. Nothing here calls the library's
//! closed forms; each oracle takes its own route to the same numbers.
#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// E[1/|z − μ|] for z ~ N(0, s²I₃), |μ| = d, via the shell theorem: a
/// spherical shell of radius r seen from distance d contributes 1/max(r, d).
pub fn inverse_distance_mean(s: f64, d: f64) -> f64 {
    let maxwell = |r: f64| (2.0 / PI).sqrt() * r * r / (s * s * s) * (-0.5 * r * r / (s * s)).exp();
    let top = 14.0 * s;
    if d <= 0.0 {
        return simpson(|r| if r == 0.0 { 0.0 } else { maxwell(r) / r }, 0.0, top, 40_000);
    }
    if d >= top {
        return 1.0 / d;
    }
    simpson(|r| maxwell(r) / d, 0.0, d, 20_000) + simpson(|r| maxwell(r) / r, d, top, 20_000)
}

#[derive(Clone, Copy, Debug)]
pub struct Blob {
    pub c: [f64; 3],
    pub s: f64,
    pub m: f64,
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// ½G Σ_ab w_a w_b m_a m_b E[1/|x_a − y_b|] over the signed blob list
/// ρ1 (+) and ρ2 (−), each kernel by radial quadrature.
pub fn dp_energy_radial(g: f64, rho1: &[Blob], rho2: &[Blob]) -> f64 {
    let all: Vec<(Blob, f64)> = rho1.iter().map(|b| (*b, 1.0)).chain(rho2.iter().map(|b| (*b, -1.0))).collect();
    let mut e = 0.0;
    for (a, wa) in &all {
        for (b, wb) in &all {
            let s = (a.s * a.s + b.s * b.s).sqrt();
            e += wa * wb * a.m * b.m * inverse_distance_mean(s, dist(a.c, b.c));
        }
    }
    0.5 * g * e
}

fn gauss3(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let mut out = [0.0; 3];
    for v in out.iter_mut() {
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen();
        *v = (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos();
    }
    out
}

/// 6-D Monte Carlo estimate of the same double integral with its
/// standard error.
pub fn dp_energy_mc(g: f64, rho1: &[Blob], rho2: &[Blob], samples: usize, seed: u64) -> (f64, f64) {
    let all: Vec<(Blob, f64)> = rho1.iter().map(|b| (*b, 1.0)).chain(rho2.iter().map(|b| (*b, -1.0))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mean = 0.0;
    let mut var = 0.0;
    for (a, wa) in &all {
        for (b, wb) in &all {
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for _ in 0..samples {
                let x = gauss3(&mut rng);
                let y = gauss3(&mut rng);
                let p = [a.c[0] + a.s * x[0], a.c[1] + a.s * x[1], a.c[2] + a.s * x[2]];
                let q = [b.c[0] + b.s * y[0], b.c[1] + b.s * y[1], b.c[2] + b.s * y[2]];
                let v = 1.0 / dist(p, q);
                s1 += v;
                s2 += v * v;
            }
            let n = samples as f64;
            let m = s1 / n;
            let k = 0.5 * g * wa * wb * a.m * b.m;
            mean += k * m;
            var += k * k * (s2 / n - m * m) / n;
        }
    }
    (mean, var.sqrt())
}

pub fn gauss_density(b: &Blob, x: [f64; 3]) -> f64 {
    let r2 = (x[0] - b.c[0]).powi(2) + (x[1] - b.c[1]).powi(2) + (x[2] - b.c[2]).powi(2);
    b.m * (-0.5 * r2 / (b.s * b.s)).exp() / ((2.0 * PI).powf(1.5) * b.s.powi(3))
}

/// Midpoint-grid sum of ½(ρκ−ρν)(Φν−Φκ) over a box, with potentials from
/// a caller-supplied function.
pub fn grid_local_energy<P>(lo: [f64; 3], hi: [f64; 3], n: usize, drho: impl Fn([f64; 3]) -> f64, dphi: P) -> f64
where
    P: Fn([f64; 3]) -> f64,
{
    let h = [(hi[0] - lo[0]) / n as f64, (hi[1] - lo[1]) / n as f64, (hi[2] - lo[2]) / n as f64];
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let x = [lo[0] + (i as f64 + 0.5) * h[0], lo[1] + (j as f64 + 0.5) * h[1], lo[2] + (k as f64 + 0.5) * h[2]];
                let d = drho(x);
                if d != 0.0 {
                    s += d * dphi(x);
                }
            }
        }
    }
    0.5 * s * h[0] * h[1] * h[2]
}
