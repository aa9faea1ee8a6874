//! Mass distributions, Newtonian potentials and Diósi-Penrose energies.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::{cubature3, integrate, QuadOptions};
use crate::units::UnitSystem;

pub type Vec3 = [f64; 3];

#[inline]
pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
#[inline]
pub(crate) fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
#[inline]
pub(crate) fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// One body of a rigid part. Point masses are not representable on purpose:
/// every component carries a finite width.
#[derive(Debug, Clone, PartialEq)]
pub enum MassBody {
    GaussianBall { center: Vec3, sigma: f64, mass: f64 },
    HomogeneousSphere { center: Vec3, radius: f64, mass: f64 },
    GaussianNucleusLattice { sites: Vec<Vec3>, nucleus_mass: f64, sigma_n: f64 },
}

impl MassBody {
    pub fn mass(&self) -> f64 {
        match self {
            MassBody::GaussianBall { mass, .. } | MassBody::HomogeneousSphere { mass, .. } => *mass,
            MassBody::GaussianNucleusLattice { sites, nucleus_mass, .. } => *nucleus_mass * sites.len() as f64,
        }
    }

    pub fn check(&self) -> Result<()> {
        let finite = |v: &Vec3| v.iter().all(|x| x.is_finite());
        match self {
            MassBody::GaussianBall { center, sigma, mass } => {
                if !(*sigma > 0.0) || !(*mass > 0.0) || !finite(center) {
                    return Err(Error::Invalid("gaussian ball needs sigma > 0, mass > 0".into()));
                }
            }
            MassBody::HomogeneousSphere { center, radius, mass } => {
                if !(*radius > 0.0) || !(*mass > 0.0) || !finite(center) {
                    return Err(Error::Invalid("sphere needs radius > 0, mass > 0".into()));
                }
            }
            MassBody::GaussianNucleusLattice { sites, nucleus_mass, sigma_n } => {
                if sites.is_empty() || !(*sigma_n > 0.0) || !(*nucleus_mass > 0.0) || !sites.iter().all(finite) {
                    return Err(Error::Invalid("lattice needs sites, sigma_n > 0, nucleus mass > 0".into()));
                }
            }
        }
        Ok(())
    }

    fn push_primitives(&self, out: &mut Vec<Primitive>) {
        match self {
            MassBody::GaussianBall { center, sigma, mass } => {
                out.push(Primitive { center: *center, shape: Shape::Gauss(*sigma), mass: *mass })
            }
            MassBody::HomogeneousSphere { center, radius, mass } => {
                out.push(Primitive { center: *center, shape: Shape::Sphere(*radius), mass: *mass })
            }
            MassBody::GaussianNucleusLattice { sites, nucleus_mass, sigma_n } => out.extend(
                sites.iter().map(|s| Primitive { center: *s, shape: Shape::Gauss(*sigma_n), mass: *nucleus_mass }),
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Shape {
    Gauss(f64),
    Sphere(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Primitive {
    pub center: Vec3,
    pub shape: Shape,
    pub mass: f64,
}

impl Primitive {
    /// Extent beyond which the density is treated as zero.
    fn reach(&self) -> f64 {
        match self.shape {
            Shape::Gauss(s) => 8.0 * s,
            Shape::Sphere(r) => r,
        }
    }

    fn density_at(&self, r: f64) -> f64 {
        match self.shape {
            Shape::Gauss(s) => self.mass * (-0.5 * r * r / (s * s)).exp() / ((2.0 * PI).powf(1.5) * s * s * s),
            Shape::Sphere(rad) => {
                if r <= rad {
                    self.mass / (4.0 / 3.0 * PI * rad * rad * rad)
                } else {
                    0.0
                }
            }
        }
    }

    /// Φ/(−G) at distance r from the center.
    fn kernel_at(&self, r: f64) -> f64 {
        self.mass * unit_potential(self.shape, r)
    }
}

fn unit_potential(shape: Shape, r: f64) -> f64 {
    match shape {
        Shape::Gauss(s) => gauss_kernel(r, s),
        Shape::Sphere(rad) => {
            if r >= rad {
                1.0 / r
            } else {
                (3.0 * rad * rad - r * r) / (2.0 * rad * rad * rad)
            }
        }
    }
}

/// erf(r/(√2 s))/r with its finite limit at the origin.
fn gauss_kernel(r: f64, s: f64) -> f64 {
    let x = r / (std::f64::consts::SQRT_2 * s);
    if x < 1e-6 {
        (2.0 / PI.sqrt()) * (1.0 - x * x / 3.0) / (std::f64::consts::SQRT_2 * s)
    } else {
        libm::erf(x) / r
    }
}

/// Rigid displacement Δs(t): piecewise linear through `knots`, constant
/// outside them, shifted later in time by `delay`. Repeated knot times
/// encode a jump; the later knot wins at the jump instant.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Displacement {
    pub knots: Vec<(f64, Vec3)>,
    pub delay: f64,
}

impl Displacement {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn step(at: f64, to: Vec3) -> Self {
        Displacement { knots: vec![(at, [0.0; 3]), (at, to)], delay: 0.0 }
    }

    pub fn with_delay(mut self, delay: f64) -> Self {
        self.delay = delay;
        self
    }

    pub fn check(&self) -> Result<()> {
        if !self.delay.is_finite() || self.delay < 0.0 {
            return Err(Error::Invalid("displacement delay must be ≥ 0".into()));
        }
        for w in self.knots.windows(2) {
            if w[1].0 < w[0].0 {
                return Err(Error::Invalid("displacement knots must be time-ordered".into()));
            }
        }
        if !self.knots.iter().all(|(t, v)| t.is_finite() && v.iter().all(|x| x.is_finite())) {
            return Err(Error::Invalid("displacement knots must be finite".into()));
        }
        Ok(())
    }

    pub fn at(&self, t: f64) -> Vec3 {
        let t = t - self.delay;
        let k = &self.knots;
        match k.len() {
            0 => [0.0; 3],
            _ if t < k[0].0 => k[0].1,
            _ => {
                // Last knot with time ≤ t.
                let i = k.partition_point(|(tk, _)| *tk <= t) - 1;
                if i + 1 == k.len() {
                    return k[i].1;
                }
                let (t0, a) = k[i];
                let (t1, b) = k[i + 1];
                let w = (t - t0) / (t1 - t0);
                [a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1]), a[2] + w * (b[2] - a[2])]
            }
        }
    }

    /// Times (delay applied) where Δs(t) may have a kink or jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.knots.iter().map(|(t, _)| t + self.delay).collect()
    }
}

/// A set of bodies moving together.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidPart {
    pub name: String,
    pub bodies: Arc<Vec<MassBody>>,
    pub displacement: Displacement,
    prims: Arc<Vec<Primitive>>,
}

impl RigidPart {
    pub fn new(name: impl Into<String>, bodies: Arc<Vec<MassBody>>, displacement: Displacement) -> Self {
        let mut prims = Vec::new();
        for b in bodies.iter() {
            b.push_primitives(&mut prims);
        }
        RigidPart { name: name.into(), bodies, displacement, prims: Arc::new(prims) }
    }

    pub fn with_displacement(&self, displacement: Displacement) -> Self {
        RigidPart { displacement, ..self.clone() }
    }

    pub fn mass(&self) -> f64 {
        self.bodies.iter().map(MassBody::mass).sum()
    }

    pub(crate) fn primitives(&self) -> &[Primitive] {
        &self.prims
    }

    /// Displacement beyond which two copies of this part count as
    /// decorrelated: 6σ for Gaussian components, the diameter for spheres.
    pub fn decorrelation_scale(&self) -> f64 {
        self.prims
            .iter()
            .map(|p| match p.shape {
                Shape::Gauss(s) => 6.0 * s,
                Shape::Sphere(r) => 2.0 * r,
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn same_body_set(&self, other: &RigidPart) -> bool {
        Arc::ptr_eq(&self.bodies, &other.bodies) || self.bodies == other.bodies
    }
}

/// ρ(x, t) of one classical scenario: several rigid parts, each with its own
/// displacement schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct MassDistribution {
    pub parts: Vec<RigidPart>,
}

impl MassDistribution {
    pub fn new(parts: Vec<RigidPart>) -> Self {
        MassDistribution { parts }
    }

    /// A single rigid body set with one displacement schedule.
    pub fn rigid(bodies: Vec<MassBody>, displacement: Displacement) -> Self {
        MassDistribution { parts: vec![RigidPart::new("body", Arc::new(bodies), displacement)] }
    }

    pub fn total_mass(&self) -> f64 {
        self.parts.iter().map(RigidPart::mass).sum()
    }

    pub fn check(&self) -> Result<()> {
        if self.parts.is_empty() {
            return Err(Error::Invalid("mass distribution has no parts".into()));
        }
        for p in &self.parts {
            if p.bodies.is_empty() {
                return Err(Error::Invalid(format!("part '{}' has no bodies", p.name)));
            }
            for b in p.bodies.iter() {
                b.check()?;
            }
            p.displacement.check()?;
        }
        if !(self.total_mass() > 0.0) {
            return Err(Error::Invalid("total mass must be positive".into()));
        }
        Ok(())
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        self.parts.iter().flat_map(|p| p.displacement.breakpoints()).collect()
    }

    fn placed(&self, t: f64) -> Vec<(usize, Vec3)> {
        self.parts.iter().enumerate().map(|(i, p)| (i, p.displacement.at(t))).collect()
    }

    pub fn density(&self, x: Vec3, t: f64) -> f64 {
        let mut rho = 0.0;
        for p in &self.parts {
            let d = p.displacement.at(t);
            for q in p.primitives() {
                rho += q.density_at(norm(sub(x, add(q.center, d))));
            }
        }
        rho
    }

    /// True when both distributions are built from the same parts (same
    /// bodies in the same order), differing at most in their schedules.
    pub fn same_world(&self, other: &MassDistribution) -> bool {
        self.parts.len() == other.parts.len()
            && self.parts.iter().zip(&other.parts).all(|(a, b)| a.same_body_set(b))
    }
}

fn check_point(x: Vec3) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain("evaluation point must be finite".into()))
    }
}

/// Φ(x, t) = −G ∫ ρ(y,t)/|x−y| d³y from the per-component closed forms.
pub fn grav_potential(rho: &MassDistribution, x: Vec3, t: f64, units: &UnitSystem) -> Result<f64> {
    check_point(x)?;
    if !t.is_finite() {
        return Err(Error::Domain("time must be finite".into()));
    }
    let mut s = 0.0;
    for p in &rho.parts {
        let d = p.displacement.at(t);
        for q in p.primitives() {
            s += q.kernel_at(norm(sub(x, add(q.center, d))));
        }
    }
    Ok(-units.g * s)
}

const KERNEL_OPTS: QuadOptions = QuadOptions { abs_tol: 0.0, rel_tol: 1e-12, max_work: 2000 };

/// ∫∫ n_a(x) n_b(y)/|x−y| for unit-mass components at center distance d.
pub(crate) fn pair_kernel(a: Shape, b: Shape, d: f64) -> Result<f64> {
    match (a, b) {
        (Shape::Gauss(sa), Shape::Gauss(sb)) => Ok(gauss_kernel(d, (sa * sa + sb * sb).sqrt())),
        (Shape::Sphere(ra), Shape::Sphere(rb)) => {
            if d >= ra + rb {
                Ok(1.0 / d)
            } else if ra == rb {
                let l = d / (2.0 * ra);
                Ok((1.2 - 2.0 * l * l + 1.5 * l * l * l - 0.2 * l.powi(5)) / ra)
            } else {
                sphere_sphere_quad(ra, rb, d)
            }
        }
        (Shape::Gauss(s), Shape::Sphere(r)) | (Shape::Sphere(r), Shape::Gauss(s)) => {
            if d >= r + 12.0 * s {
                Ok(1.0 / d)
            } else {
                let lo = (d - 12.0 * s).max(0.0);
                let hi = d + 12.0 * s;
                let sph = Shape::Sphere(r);
                Ok(integrate(|x| rice(x, d, s) * unit_potential(sph, x), lo, hi, &[r, d], &KERNEL_OPTS)?.value)
            }
        }
    }
}

/// Density of |z| for z ~ N(μ, s²I₃) with |μ| = d.
fn rice(r: f64, d: f64, s: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let s2 = s * s;
    if d < 1e-9 * s {
        return (2.0 / PI).sqrt() * r * r / (s2 * s) * (-0.5 * r * r / s2).exp();
    }
    let x = r * d / s2;
    let pref = r / (d * s * (2.0 * PI).sqrt());
    if x < 1.0 {
        pref * 2.0 * (-0.5 * (r * r + d * d) / s2).exp() * x.sinh()
    } else {
        pref * ((-0.5 * (r - d) * (r - d) / s2).exp() - (-0.5 * (r + d) * (r + d) / s2).exp())
    }
}

fn sphere_sphere_quad(ra: f64, rb: f64, d: f64) -> Result<f64> {
    let va = 4.0 / 3.0 * PI * ra * ra * ra;
    let phi = Shape::Sphere(rb);
    let shell = |r: f64| -> f64 {
        if d == 0.0 {
            return if r <= ra { 4.0 * PI * r * r } else { 0.0 };
        }
        let c0 = ((r * r + d * d - ra * ra) / (2.0 * r * d)).clamp(-1.0, 1.0);
        2.0 * PI * r * r * (1.0 - c0)
    };
    let lo = (d - ra).max(0.0);
    let hi = d + ra;
    let breaks = [ra - d, rb];
    Ok(integrate(|r| shell(r) * unit_potential(phi, r), lo, hi, &breaks, &KERNEL_OPTS)?.value / va)
}

/// G∫∫ρ_a ρ_b/|x−y| summed over all component pairs.
fn mutual_energy(a: &MassDistribution, b: &MassDistribution, t: f64) -> Result<f64> {
    let pa = a.placed(t);
    let pb = b.placed(t);
    let mut s = 0.0;
    for (ia, da) in &pa {
        for (ib, db) in &pb {
            let rel = sub(*db, *da);
            for p in a.parts[*ia].primitives() {
                for q in b.parts[*ib].primitives() {
                    let d = norm(add(sub(q.center, p.center), rel));
                    s += p.mass * q.mass * pair_kernel(p.shape, q.shape, d)?;
                }
            }
        }
    }
    Ok(s)
}

/// Self-interaction magnitude −∫ρΦ d³x = G∫∫ρρ/|x−y|.
pub fn self_energy(rho: &MassDistribution, t: f64, units: &UnitSystem) -> Result<f64> {
    Ok(units.g * mutual_energy(rho, rho, t)?)
}

/// Mutual term G∫∫ρ_a ρ_b/|x−y|.
pub fn interaction_energy(a: &MassDistribution, b: &MassDistribution, t: f64, units: &UnitSystem) -> Result<f64> {
    Ok(units.g * mutual_energy(a, b, t)?)
}

/// E_G12 = ½∫(ρ1−ρ2)(Φ2−Φ1)d³x via closed-form component pair sums.
pub fn dp_energy(rho1: &MassDistribution, rho2: &MassDistribution, t: f64, units: &UnitSystem) -> Result<f64> {
    if rho1.same_world(rho2) {
        return Ok(units.g * same_world_dp(rho1, rho2, t)?.max(0.0));
    }
    let w11 = mutual_energy(rho1, rho1, t)?;
    let w22 = mutual_energy(rho2, rho2, t)?;
    // Both cross orders, summed commutatively, keep the result bitwise
    // symmetric under argument exchange.
    let w12 = mutual_energy(rho1, rho2, t)?;
    let w21 = mutual_energy(rho2, rho1, t)?;
    Ok((units.g * 0.5 * ((w11 + w22) - (w12 + w21))).max(0.0))
}

/// Pair sum that skips part pairs whose relative placement is the same in
/// both distributions; those cancel identically.
fn same_world_dp(rho1: &MassDistribution, rho2: &MassDistribution, t: f64) -> Result<f64> {
    let d1: Vec<Vec3> = rho1.parts.iter().map(|p| p.displacement.at(t)).collect();
    let d2: Vec<Vec3> = rho2.parts.iter().map(|p| p.displacement.at(t)).collect();
    let n = d1.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let r11 = sub(d1[j], d1[i]);
            let r22 = sub(d2[j], d2[i]);
            let r12 = sub(d2[j], d1[i]);
            let r21 = sub(d1[j], d2[i]);
            if r11 == r22 && r12 == r11 && r21 == r11 {
                continue;
            }
            for p in rho1.parts[i].primitives() {
                for q in rho1.parts[j].primitives() {
                    let c = sub(q.center, p.center);
                    let k = |r: Vec3| pair_kernel(p.shape, q.shape, norm(add(c, r)));
                    // ½(W11 + W22 − W12 − W21) for this ordered pair.
                    s += 0.5 * p.mass * q.mass * ((k(r11)? + k(r22)?) - (k(r12)? + k(r21)?));
                }
            }
        }
    }
    Ok(s)
}

/// Region of space for local energies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    Box { min: Vec3, max: Vec3 },
    Ball { center: Vec3, radius: f64 },
    Everywhere,
}

impl Region {
    pub fn contains(&self, x: Vec3) -> bool {
        match self {
            Region::Box { min, max } => (0..3).all(|k| x[k] >= min[k] && x[k] <= max[k]),
            Region::Ball { center, radius } => norm(sub(x, *center)) <= *radius,
            Region::Everywhere => true,
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Region::Box { min, max } => (0..3).map(|k| (max[k] - min[k]).max(0.0)).product(),
            Region::Ball { radius, .. } => 4.0 / 3.0 * PI * radius.powi(3),
            Region::Everywhere => f64::INFINITY,
        }
    }

    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        match self {
            Region::Box { min, max } => Some((*min, *max)),
            Region::Ball { center, radius } => Some((
                [center[0] - radius, center[1] - radius, center[2] - radius],
                [center[0] + radius, center[1] + radius, center[2] + radius],
            )),
            Region::Everywhere => None,
        }
    }

    /// Whether the region meets the open box (lo, hi).
    pub fn meets_box(&self, lo: Vec3, hi: Vec3) -> bool {
        match self.bounds() {
            None => true,
            Some((a, b)) => {
                if !(0..3).all(|k| a[k] < hi[k] && b[k] > lo[k]) {
                    return false;
                }
                if let Region::Ball { center, radius } = self {
                    let mut d2 = 0.0;
                    for k in 0..3 {
                        let c = center[k].clamp(lo[k], hi[k]);
                        d2 += (c - center[k]).powi(2);
                    }
                    return d2 < radius * radius;
                }
                true
            }
        }
    }

    fn contains_box(&self, lo: Vec3, hi: Vec3) -> bool {
        match self {
            Region::Everywhere => true,
            Region::Box { min, max } => (0..3).all(|k| lo[k] >= min[k] && hi[k] <= max[k]),
            Region::Ball { center, radius } => {
                let far: Vec3 = std::array::from_fn(|k| (lo[k] - center[k]).abs().max((hi[k] - center[k]).abs()));
                norm(far) <= *radius
            }
        }
    }

    fn clip(&self, lo: Vec3, hi: Vec3) -> Option<(Vec3, Vec3)> {
        let (a, b) = match self.bounds() {
            None => (lo, hi),
            Some(ab) => ab,
        };
        let l = [lo[0].max(a[0]), lo[1].max(a[1]), lo[2].max(a[2])];
        let h = [hi[0].min(b[0]), hi[1].min(b[1]), hi[2].min(b[2])];
        if (0..3).all(|k| l[k] < h[k]) {
            Some((l, h))
        } else {
            None
        }
    }

    pub fn is_disjoint(&self, other: &Region) -> bool {
        match (self, other) {
            (Region::Everywhere, _) | (_, Region::Everywhere) => false,
            (Region::Ball { center: c1, radius: r1 }, Region::Ball { center: c2, radius: r2 }) => {
                norm(sub(*c1, *c2)) >= r1 + r2
            }
            (r, Region::Box { min, max }) | (Region::Box { min, max }, r) => !r.meets_box(*min, *max),
        }
    }
}

/// One density piece carried through a localized integral: a component at
/// two placements with weights (+1 at `a`, −1 at `b`), or at one placement.
struct Carrier {
    prim: Primitive,
    at: Vec3,
    minus: Option<Vec3>,
}

impl Carrier {
    fn density(&self, x: Vec3) -> f64 {
        let mut v = self.prim.density_at(norm(sub(x, self.at)));
        if let Some(b) = self.minus {
            v -= self.prim.density_at(norm(sub(x, b)));
        }
        v
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LocalOptions {
    pub quad: QuadOptions,
}

impl Default for LocalOptions {
    fn default() -> Self {
        LocalOptions { quad: QuadOptions { abs_tol: 0.0, rel_tol: 1e-6, max_work: 4_000_000 } }
    }
}

/// Σ_c ∫_{A ∩ supp c} density_c(x)·g(x) d³x. Gaussian carriers are
/// integrated on their bounding box; spheres in spherical coordinates so
/// the surface discontinuity never lands inside a cell.
fn localized_integral<G>(carriers: &[Carrier], region: &Region, g: G, scale: f64, opts: &LocalOptions) -> Result<(f64, f64)>
where
    G: Fn(Vec3) -> f64,
{
    let n = carriers.len().max(1) as f64;
    let mut total = 0.0;
    let mut err = 0.0;
    for c in carriers {
        let reach = c.prim.reach();
        match c.prim.shape {
            Shape::Gauss(_) => {
                let mut lo = [0.0; 3];
                let mut hi = [0.0; 3];
                for k in 0..3 {
                    let b = c.minus.unwrap_or(c.at);
                    lo[k] = c.at[k].min(b[k]) - reach;
                    hi[k] = c.at[k].max(b[k]) + reach;
                }
                let Some((l, h)) = region.clip(lo, hi) else { continue };
                if !region.meets_box(lo, hi) {
                    continue;
                }
                let q = QuadOptions { abs_tol: opts.quad.rel_tol * scale * 1e-3 / n, ..opts.quad };
                let ball = matches!(region, Region::Ball { .. });
                let e = cubature3(
                    |x| {
                        if ball && !region.contains(x) {
                            0.0
                        } else {
                            c.density(x) * g(x)
                        }
                    },
                    l,
                    h,
                    2,
                    &q,
                )?;
                total += e.value;
                err += e.error;
            }
            Shape::Sphere(r) => {
                let centers = std::iter::once((c.at, 1.0)).chain(c.minus.map(|b| (b, -1.0)));
                for (ctr, sign) in centers {
                    let lo = [ctr[0] - r, ctr[1] - r, ctr[2] - r];
                    let hi = [ctr[0] + r, ctr[1] + r, ctr[2] + r];
                    if !region.meets_box(lo, hi) {
                        continue;
                    }
                    let rho0 = c.prim.density_at(0.0);
                    let q = QuadOptions { abs_tol: opts.quad.rel_tol * scale * 1e-3 / n, ..opts.quad };
                    let e = cubature3(
                        |u| {
                            let (rr, th, ph) = (u[0], u[1], u[2]);
                            let st = th.sin();
                            let x = [ctr[0] + rr * st * ph.cos(), ctr[1] + rr * st * ph.sin(), ctr[2] + rr * th.cos()];
                            if region.contains(x) {
                                rho0 * g(x) * rr * rr * st
                            } else {
                                0.0
                            }
                        },
                        [0.0, 0.0, 0.0],
                        [r, PI, 2.0 * PI],
                        2,
                        &q,
                    )?;
                    total += sign * e.value;
                    err += e.error;
                }
            }
        }
    }
    Ok((total, err))
}

/// Per-part displacements of both distributions, and the flag list of
/// parts that moved relative to each other.
fn moved_parts(k: &MassDistribution, v: &MassDistribution, t: f64) -> (Vec<Vec3>, Vec<Vec3>, Vec<bool>) {
    let dk: Vec<Vec3> = k.parts.iter().map(|p| p.displacement.at(t)).collect();
    let dv: Vec<Vec3> = v.parts.iter().map(|p| p.displacement.at(t)).collect();
    let moved = dk.iter().zip(&dv).map(|(a, b)| a != b).collect();
    (dk, dv, moved)
}

fn carriers_for(k: &MassDistribution, v: &MassDistribution, t: f64) -> Vec<Carrier> {
    let mut out = Vec::new();
    if k.same_world(v) {
        let (dk, dv, moved) = moved_parts(k, v, t);
        for (i, p) in k.parts.iter().enumerate() {
            if !moved[i] {
                continue;
            }
            for q in p.primitives() {
                out.push(Carrier { prim: *q, at: add(q.center, dk[i]), minus: Some(add(q.center, dv[i])) });
            }
        }
    } else {
        for (rho, sign) in [(k, true), (v, false)] {
            for p in &rho.parts {
                let d = p.displacement.at(t);
                for q in p.primitives() {
                    let mut prim = *q;
                    if !sign {
                        prim.mass = -prim.mass;
                    }
                    out.push(Carrier { prim, at: add(q.center, d), minus: None });
                }
            }
        }
    }
    out
}

/// Gaussian carriers on `region` as signed points, dropping those wholly
/// outside; `None` if one straddles the boundary or is not Gaussian.
fn gaussian_points(carriers: &[Carrier], region: &Region) -> Option<Vec<(Vec3, f64, f64)>> {
    let mut out = Vec::new();
    for c in carriers {
        let Shape::Gauss(s) = c.prim.shape else { return None };
        let r = c.prim.reach();
        for (p, m) in std::iter::once((c.at, c.prim.mass)).chain(c.minus.map(|b| (b, -c.prim.mass))) {
            let (lo, hi) = ([p[0] - r, p[1] - r, p[2] - r], [p[0] + r, p[1] + r, p[2] + r]);
            if region.contains_box(lo, hi) {
                out.push((p, s, m));
            } else if region.meets_box(lo, hi) {
                return None;
            }
        }
    }
    Some(out)
}

/// ∫ρ_aρ_b over all space for signed Gaussian points.
fn gaussian_overlap(a: &[(Vec3, f64, f64)], b: &[(Vec3, f64, f64)]) -> f64 {
    let mut s = 0.0;
    for (pa, sa, ma) in a {
        for (pb, sb, mb) in b {
            let v = sa * sa + sb * sb;
            let d = norm(sub(*pa, *pb));
            s += ma * mb * (-0.5 * d * d / v).exp() / (2.0 * PI * v).powf(1.5);
        }
    }
    s
}

/// ∫_A Δρ ∫ Δρ/|x−y| as a pair sum when every carrier lies either wholly
/// inside or wholly outside the area; `None` if one straddles it.
fn separated_local_energy(carriers: &[Carrier], area: &Region) -> Result<Option<f64>> {
    let mut pts: Vec<(Shape, Vec3, f64, bool)> = Vec::new();
    for c in carriers {
        let r = c.prim.reach();
        let signed = std::iter::once((c.at, c.prim.mass)).chain(c.minus.map(|b| (b, -c.prim.mass)));
        for (p, m) in signed {
            let (lo, hi) = ([p[0] - r, p[1] - r, p[2] - r], [p[0] + r, p[1] + r, p[2] + r]);
            let inside = area.contains_box(lo, hi);
            if !inside && area.meets_box(lo, hi) {
                return Ok(None);
            }
            pts.push((c.prim.shape, p, m, inside));
        }
    }
    let mut s = 0.0;
    for a in pts.iter().filter(|a| a.3) {
        for b in &pts {
            s += a.2 * b.2 * pair_kernel(a.0, b.0, norm(sub(a.1, b.1)))?;
        }
    }
    Ok(Some(s))
}

/// E^A = ½∫_A (ρκ−ρν)(Φν−Φκ) d³x by adaptive cubature.
pub fn dp_energy_local(
    rho_k: &MassDistribution,
    rho_v: &MassDistribution,
    area: &Region,
    t: f64,
    units: &UnitSystem,
    opts: &LocalOptions,
) -> Result<f64> {
    let carriers = carriers_for(rho_k, rho_v, t);
    if carriers.is_empty() {
        return Ok(0.0);
    }
    let scale = dp_energy(rho_k, rho_v, t, units)? / units.g;
    if scale == 0.0 {
        return Ok(0.0);
    }
    if !matches!(area, Region::Everywhere) {
        if let Some(e) = separated_local_energy(&carriers, area)? {
            return Ok((0.5 * units.g * e).max(0.0));
        }
    }
    // Potential difference (Φν − Φκ)/G from the moved components only.
    let mut placed: Vec<(Primitive, Vec3, Vec3)> = Vec::new();
    if rho_k.same_world(rho_v) {
        let (dk, dv, moved) = moved_parts(rho_k, rho_v, t);
        for (i, p) in rho_k.parts.iter().enumerate() {
            if moved[i] {
                placed.extend(p.primitives().iter().map(|q| (*q, add(q.center, dk[i]), add(q.center, dv[i]))));
            }
        }
    }
    let dphi = |x: Vec3| -> f64 {
        if !placed.is_empty() {
            placed
                .iter()
                .map(|(q, ak, av)| q.kernel_at(norm(sub(x, *ak))) - q.kernel_at(norm(sub(x, *av))))
                .sum()
        } else {
            let pk = grav_potential(rho_k, x, t, &UnitSystem::dimensionless()).unwrap_or(0.0);
            let pv = grav_potential(rho_v, x, t, &UnitSystem::dimensionless()).unwrap_or(0.0);
            pv - pk
        }
    };
    let (value, _) = localized_integral(&carriers, area, dphi, 2.0 * scale, opts)?;
    Ok((0.5 * units.g * value).max(0.0))
}

/// Direct cubature of E_G12 over all space, used to cross-check `dp_energy`.
pub fn dp_energy_by_cubature(rho1: &MassDistribution, rho2: &MassDistribution, t: f64, units: &UnitSystem, opts: &LocalOptions) -> Result<f64> {
    dp_energy_local(rho1, rho2, &Region::Everywhere, t, units, opts)
}

/// ‖ρ1−ρ2‖_A / max(‖ρ1‖_A, ‖ρ2‖_A); zero when nothing differs on A.
pub fn restricted_l2_difference(rho1: &MassDistribution, rho2: &MassDistribution, area: &Region, t: f64, opts: &LocalOptions) -> Result<f64> {
    let diff = carriers_for(rho1, rho2, t);
    let touches = diff.iter().any(|c| {
        let r = c.prim.reach();
        [Some(c.at), c.minus].into_iter().flatten().any(|p| {
            area.meets_box([p[0] - r, p[1] - r, p[2] - r], [p[0] + r, p[1] + r, p[2] + r])
        })
    });
    if !touches {
        return Ok(0.0);
    }
    let whole = |rho: &MassDistribution| -> Vec<Carrier> {
        rho.parts
            .iter()
            .flat_map(|p| {
                let d = p.displacement.at(t);
                p.primitives().iter().map(move |q| Carrier { prim: *q, at: add(q.center, d), minus: None })
            })
            .collect()
    };
    let c1 = whole(rho1);
    let c2 = whole(rho2);
    let closed = (gaussian_points(&c1, area), gaussian_points(&c2, area), gaussian_points(&diff, area));
    if let (Some(g1), Some(g2), Some(gd)) = closed {
        let nd = gaussian_overlap(&g1, &g1).max(gaussian_overlap(&g2, &g2));
        let dd = gaussian_overlap(&gd, &gd);
        return Ok(if nd > 0.0 { (dd.max(0.0) / nd).sqrt() } else { 0.0 });
    }
    let d1 = |x: Vec3| rho1.density(x, t);
    let d2 = |x: Vec3| rho2.density(x, t);
    let peak: f64 = c1.iter().chain(&c2).map(|c| c.prim.mass.abs() * c.prim.density_at(0.0)).sum();
    let (n1, _) = localized_integral(&c1, area, d1, peak, opts)?;
    let (n2, _) = localized_integral(&c2, area, d2, peak, opts)?;
    let nd = n1.max(n2);
    if nd <= 0.0 {
        return Ok(0.0);
    }
    let g = |x: Vec3| rho1.density(x, t) - rho2.density(x, t);
    let (dd, _) = localized_integral(&diff, area, g, nd * 1e-14, opts)?;
    Ok((dd.max(0.0) / nd).sqrt())
}
