//! Adaptive quadrature: Gauss-Kronrod (7/15) in one dimension and the
//! Genz-Malik degree-7/5 embedded rule on three-dimensional boxes.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Upper bound on subdivisions (1-D) or integrand evaluations (3-D).
    pub max_work: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { abs_tol: 0.0, rel_tol: 1e-6, max_work: 4000 }
    }
}

impl QuadOptions {
    pub fn rel(rel_tol: f64) -> Self {
        QuadOptions { rel_tol, ..Default::default() }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c)?;
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    let mut resabs = kronrod.abs();
    let mut fv = [0.0f64; 14];
    for j in 0..7 {
        let x = h * XGK[j];
        let f1 = f(c - x)?;
        let f2 = f(c + x)?;
        fv[2 * j] = f1;
        fv[2 * j + 1] = f2;
        kronrod += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv[2 * j] - mean).abs() + (fv[2 * j + 1] - mean).abs());
    }
    let value = kronrod * h;
    let resabs = resabs * h.abs();
    let resasc = resasc * h.abs();
    let mut err = ((kronrod - gauss) * h).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    if !value.is_finite() {
        return Err(Error::Domain(format!("non-finite integrand on [{a}, {b}]")));
    }
    Ok((value, err))
}

/// Globally adaptive integration of a fallible integrand over `[a, b]`,
/// with the interval pre-split at `breaks` (points outside are ignored).
pub fn integrate_try<F>(mut f: F, a: f64, b: f64, breaks: &[f64], opts: &QuadOptions) -> Result<Estimate>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0, evaluations: 0 });
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain("integration limits must be finite".into()));
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&x| x > lo && x < hi).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut heap = BinaryHeap::new();
    let mut prev = lo;
    let mut evals = 0usize;
    for x in pts.into_iter().chain(std::iter::once(hi)) {
        let (v, e) = gk15(&mut f, prev, x)?;
        evals += 15;
        heap.push(Segment { a: prev, b: x, value: v, error: e });
        prev = x;
    }
    let mut subdivisions = heap.len();
    loop {
        let (value, error) = heap.iter().fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
        if error <= opts.target(value) || error == 0.0 {
            return Ok(Estimate { value: sign * value, error, evaluations: evals });
        }
        if subdivisions >= opts.max_work {
            return Err(Error::Quadrature { estimate: sign * value, error, tolerance: opts.target(value) });
        }
        let worst = heap.pop().expect("non-empty segment heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval can no longer be split in floating point; accept it.
            heap.push(Segment { error: 0.0, ..worst });
            continue;
        }
        let (v1, e1) = gk15(&mut f, worst.a, mid)?;
        let (v2, e2) = gk15(&mut f, mid, worst.b)?;
        evals += 30;
        heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
        subdivisions += 1;
    }
}

pub fn integrate<F>(mut f: F, a: f64, b: f64, breaks: &[f64], opts: &QuadOptions) -> Result<Estimate>
where
    F: FnMut(f64) -> f64,
{
    integrate_try(|x| Ok(f(x)), a, b, breaks, opts)
}

pub type Point3 = [f64; 3];

struct Cell {
    center: Point3,
    half: Point3,
    value: f64,
    error: f64,
    split_axis: usize,
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

// Genz-Malik generators for n = 3.
const L2: f64 = 0.358_568_582_800_318_1; // sqrt(9/70)
const L4: f64 = 0.948_683_298_050_513_8; // sqrt(9/10)
const L5: f64 = 0.688_247_201_611_685_3; // sqrt(9/19)
const N: f64 = 3.0;
const W1: f64 = (12824.0 - 9120.0 * N + 400.0 * N * N) / 19683.0;
const W2: f64 = 980.0 / 6561.0;
const W3: f64 = (1820.0 - 400.0 * N) / 19683.0;
const W4: f64 = 200.0 / 19683.0;
const W5: f64 = 6859.0 / 19683.0 / 8.0;
const V1: f64 = (729.0 - 950.0 * N + 50.0 * N * N) / 729.0;
const V2: f64 = 245.0 / 486.0;
const V3: f64 = (265.0 - 100.0 * N) / 1458.0;
const V4: f64 = 25.0 / 729.0;

fn genz_malik<F>(f: &mut F, center: &Point3, half: &Point3) -> (f64, f64, usize)
where
    F: FnMut(Point3) -> f64,
{
    let at = |off: [f64; 3]| -> Point3 {
        [center[0] + off[0] * half[0], center[1] + off[1] * half[1], center[2] + off[2] * half[2]]
    };
    let f0 = f(*center);
    let mut s2 = 0.0;
    let mut s3 = 0.0;
    let mut diff = [0.0f64; 3];
    for k in 0..3 {
        let mut o = [0.0; 3];
        o[k] = L2;
        let a = f(at(o));
        o[k] = -L2;
        let b = f(at(o));
        o[k] = L4;
        let c = f(at(o));
        o[k] = -L4;
        let d = f(at(o));
        s2 += a + b;
        s3 += c + d;
        diff[k] = (a + b - 2.0 * f0 - (L2 * L2 / (L4 * L4)) * (c + d - 2.0 * f0)).abs();
    }
    let mut s4 = 0.0;
    for i in 0..3 {
        for j in (i + 1)..3 {
            for si in [-1.0, 1.0] {
                for sj in [-1.0, 1.0] {
                    let mut o = [0.0; 3];
                    o[i] = si * L4;
                    o[j] = sj * L4;
                    s4 += f(at(o));
                }
            }
        }
    }
    let mut s5 = 0.0;
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                s5 += f(at([sx * L5, sy * L5, sz * L5]));
            }
        }
    }
    let vol = 8.0 * half[0] * half[1] * half[2];
    let r7 = vol * (W1 * f0 + W2 * s2 + W3 * s3 + W4 * s4 + W5 * s5);
    let r5 = vol * (V1 * f0 + V2 * s2 + V3 * s3 + V4 * s4);
    let mut axis = 0;
    for k in 1..3 {
        if diff[k] > diff[axis] * (1.0 + 1e-12) {
            axis = k;
        }
    }
    // A flat fourth difference gives no preference; split the widest side.
    if diff.iter().all(|&d| d <= 1e-300) {
        axis = (0..3).max_by(|&a, &b| half[a].total_cmp(&half[b])).unwrap_or(0);
    }
    (r7, (r7 - r5).abs(), axis)
}

/// Adaptive cubature over the box `[lo, hi]`. The box is first cut into
/// `initial^3` cells so that narrow features are seen by the first pass.
pub fn cubature3<F>(mut f: F, lo: Point3, hi: Point3, initial: usize, opts: &QuadOptions) -> Result<Estimate>
where
    F: FnMut(Point3) -> f64,
{
    for k in 0..3 {
        if !(lo[k].is_finite() && hi[k].is_finite()) {
            return Err(Error::Domain("cubature limits must be finite".into()));
        }
        if hi[k] <= lo[k] {
            return Ok(Estimate { value: 0.0, error: 0.0, evaluations: 0 });
        }
    }
    let m = initial.max(1);
    let half = [
        0.5 * (hi[0] - lo[0]) / m as f64,
        0.5 * (hi[1] - lo[1]) / m as f64,
        0.5 * (hi[2] - lo[2]) / m as f64,
    ];
    let mut heap = BinaryHeap::new();
    let mut evals = 0usize;
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                let c = [
                    lo[0] + (2 * i + 1) as f64 * half[0],
                    lo[1] + (2 * j + 1) as f64 * half[1],
                    lo[2] + (2 * k + 1) as f64 * half[2],
                ];
                let (v, e, ax) = genz_malik(&mut f, &c, &half);
                evals += 33;
                heap.push(Cell { center: c, half, value: v, error: e, split_axis: ax });
            }
        }
    }
    let mut value: f64 = heap.iter().map(|c| c.value).sum();
    let mut error: f64 = heap.iter().map(|c| c.error).sum();
    loop {
        if !value.is_finite() {
            return Err(Error::Domain("non-finite integrand in cubature".into()));
        }
        if error <= opts.target(value) || error == 0.0 {
            // Re-sum from scratch to shed accumulated rounding.
            let v: f64 = heap.iter().map(|c| c.value).sum();
            let e: f64 = heap.iter().map(|c| c.error).sum();
            return Ok(Estimate { value: v, error: e, evaluations: evals });
        }
        if evals >= opts.max_work {
            return Err(Error::Quadrature { estimate: value, error, tolerance: opts.target(value) });
        }
        let cell = heap.pop().expect("non-empty cell heap");
        value -= cell.value;
        error -= cell.error;
        let ax = cell.split_axis;
        let mut h = cell.half;
        h[ax] *= 0.5;
        for s in [-1.0, 1.0] {
            let mut c = cell.center;
            c[ax] += s * h[ax];
            let (v, e, a2) = genz_malik(&mut f, &c, &h);
            evals += 33;
            value += v;
            error += e;
            heap.push(Cell { center: c, half: h, value: v, error: e, split_axis: a2 });
        }
    }
}
