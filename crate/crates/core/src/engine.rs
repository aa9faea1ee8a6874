//! Critical reduction times, reconfiguration solutions and the stochastic
//! reconfiguration rule.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;

use crate::actions::{ActionModel, Scope};
use crate::error::{Error, Result};
use crate::mass::{interaction_energy, norm, self_energy, sub, LocalOptions};
use crate::quadrature::QuadOptions;
use crate::scenario::{bundles_for, AreaBundles, Experiment, LocalBundle};
use crate::units::UnitSystem;

#[derive(Debug, Clone)]
pub struct EngineOptions {
    /// Search horizon; `None` means 10³·ħ/E past the search start.
    pub t_max: Option<f64>,
    pub match_tol: f64,
    pub local: LocalOptions,
    pub time_quad: QuadOptions,
    /// Eigenvalues this close to the target count as one fixed point.
    pub eigen_tol: f64,
    pub bisect_rel: f64,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            t_max: None,
            match_tol: 1e-9,
            local: LocalOptions::default(),
            time_quad: QuadOptions::rel(1e-9),
            eigen_tol: 1e-6,
            bisect_rel: 1e-13,
        }
    }
}

/// Bundles of one area, after merging correlated scenarios, with their
/// pairwise actions (and energies, once attached).
#[derive(Debug, Clone, PartialEq)]
pub struct AreaSystem {
    pub area: String,
    pub scope: Scope,
    /// Scenario indices per bundle.
    pub bundles: Vec<Vec<usize>>,
    pub intensities: Vec<f64>,
    pub actions: DMatrix<f64>,
    pub energies: Option<DMatrix<f64>>,
}

/// Everything the reconfiguration equation needs at one border position.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconfigurationSystem {
    pub border: f64,
    /// Full intensity vector, normalized over the surviving scenarios.
    pub intensities: Vec<f64>,
    /// Scenarios with non-zero intensity, in index order.
    pub alive: Vec<usize>,
    /// Config ids of all scenarios, for labels.
    pub ids: Vec<usize>,
    pub hbar: f64,
    pub areas: Vec<AreaSystem>,
}

impl ReconfigurationSystem {
    /// Every area has at most two competing bundles.
    pub fn is_typical(&self) -> bool {
        self.areas.iter().all(|a| a.bundles.len() <= 2)
    }

    fn local_index(&self) -> HashMap<usize, usize> {
        self.alive.iter().enumerate().map(|(k, &i)| (i, k)).collect()
    }

    /// Matrix M of dI = M dI over the surviving scenarios. Two-bundle areas
    /// enter as S/ħ times the identity (norm conservation makes the inner
    /// factor exactly dI_κ); larger areas use pro-rata shifts inside bundles.
    pub fn operator(&self) -> DMatrix<f64> {
        let n = self.alive.len();
        let idx = self.local_index();
        let inten: Vec<f64> = self.alive.iter().map(|&i| self.intensities[i]).collect();
        let mut m = DMatrix::zeros(n, n);
        for a in &self.areas {
            match a.bundles.len() {
                0 | 1 => {}
                2 => {
                    let c = a.actions[(0, 1)] / self.hbar;
                    for k in 0..n {
                        m[(k, k)] += c;
                    }
                }
                nb => {
                    for k in 0..nb {
                        let ik = a.intensities[k];
                        for v in (0..nb).filter(|&v| v != k) {
                            let s = a.actions[(k, v)] / self.hbar;
                            let iv = a.intensities[v];
                            for &si in &a.bundles[k] {
                                let r = idx[&si];
                                for &sj in &a.bundles[k] {
                                    m[(r, idx[&sj])] += s * inten[r] * iv / ik;
                                }
                                for &sj in &a.bundles[v] {
                                    m[(r, idx[&sj])] -= s * inten[r];
                                }
                            }
                        }
                    }
                }
            }
        }
        m
    }

    /// M on the norm-conserving subspace in the basis e_k − e_n.
    pub fn reduced_operator(&self) -> DMatrix<f64> {
        let m = self.operator();
        let n = m.nrows();
        DMatrix::from_fn(n.saturating_sub(1), n.saturating_sub(1), |i, k| m[(i, k)] - m[(i, n - 1)])
    }

    fn real_eigenvalues(&self) -> Vec<f64> {
        let ms = self.reduced_operator();
        if ms.nrows() == 0 {
            return Vec::new();
        }
        let scale = ms.amax().max(1.0);
        ms.complex_eigenvalues()
            .iter()
            .filter(|z| z.im.abs() <= 1e-9 * scale)
            .map(|z| z.re)
            .collect()
    }

    /// Largest real eigenvalue of the reduced operator. Reduction becomes
    /// possible once it reaches 1.
    pub fn lambda_star(&self) -> f64 {
        if self.alive.len() < 2 {
            return 0.0;
        }
        if self.is_typical() {
            return self.areas.iter().filter(|a| a.bundles.len() == 2).map(|a| a.actions[(0, 1)] / self.hbar).sum();
        }
        self.real_eigenvalues().into_iter().fold(0.0, f64::max)
    }

    /// Orthonormal basis of norm-conserving solutions of dI = (M/λ) dI
    /// for eigenvalues λ within `tol` of `target`; full-length vectors.
    pub fn solve_near(&self, target: f64, tol: f64) -> Vec<Vec<f64>> {
        let ms = self.reduced_operator();
        let m = ms.nrows();
        if m == 0 {
            return Vec::new();
        }
        let group: Vec<f64> = self.real_eigenvalues().into_iter().filter(|l| (l - target).abs() <= tol).collect();
        if group.is_empty() {
            return Vec::new();
        }
        let mean = group.iter().sum::<f64>() / group.len() as f64;
        let spread = group.iter().map(|l| (l - mean).abs()).fold(0.0, f64::max);
        let a = &ms - DMatrix::identity(m, m) * mean;
        let thr = (1e-9f64).max(10.0 * spread) * ms.amax().max(1.0);
        let svd = a.svd(false, true);
        let vt = svd.v_t.expect("right singular vectors requested");
        let mut raw: Vec<Vec<f64>> = Vec::new();
        for (k, s) in svd.singular_values.iter().enumerate() {
            if *s <= thr {
                let y: Vec<f64> = (0..m).map(|c| vt[(k, c)]).collect();
                let mut full = vec![0.0; self.intensities.len()];
                for (c, &i) in self.alive[..m].iter().enumerate() {
                    full[i] = y[c];
                }
                full[self.alive[m]] = -y.iter().sum::<f64>();
                raw.push(full);
            }
        }
        orthonormalize(raw)
    }

    /// Per-area, per-bundle decay-trigger rates E^A_κ/ħ. Needs energies.
    pub fn rates(&self) -> Result<Vec<Vec<f64>>> {
        let units = UnitSystem { hbar: self.hbar, ..UnitSystem::dimensionless() };
        self.areas
            .iter()
            .map(|a| {
                let e = a.energies.as_ref().ok_or_else(|| Error::Numerical("bundle energies not evaluated".into()))?;
                Ok(decay_trigger_rates(&energy_increases(&a.intensities, e), &units))
            })
            .collect()
    }
}

fn orthonormalize(vs: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mut v in vs {
        for u in &out {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-10 {
            v.iter_mut().for_each(|x| *x /= n);
            // Largest component positive; ties go to the later index.
            let mut k = 0;
            for (i, x) in v.iter().enumerate() {
                if x.abs() >= v[k].abs() - 1e-12 {
                    k = i;
                }
            }
            if v[k] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            out.push(v);
        }
    }
    out
}

/// E_κ = Σ_{ν≠κ} I_ν E_κν for each bundle κ.
pub fn energy_increases(intensities: &[f64], energies: &DMatrix<f64>) -> Vec<f64> {
    (0..intensities.len())
        .map(|k| (0..intensities.len()).filter(|&v| v != k).map(|v| intensities[v] * energies[(k, v)]).sum())
        .collect()
}

pub fn decay_trigger_rates(energy_increases: &[f64], units: &UnitSystem) -> Vec<f64> {
    energy_increases.iter().map(|e| e / units.hbar).collect()
}

/// Solutions at the fixed point λ = 1; empty below criticality.
pub fn solve_reconfiguration(sys: &ReconfigurationSystem) -> Vec<Vec<f64>> {
    sys.solve_near(1.0, EngineOptions::default().eigen_tol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub intensities: Vec<f64>,
    pub probability: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionEvent {
    pub t_c: f64,
    pub basis: Vec<Vec<f64>>,
    pub outcomes: Vec<Outcome>,
    pub system: ReconfigurationSystem,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reduction {
    /// Only one scenario carries intensity.
    Collapsed { survivor: usize },
    NoReduction { t_max: f64 },
    Event(ReductionEvent),
}

fn step_to_boundary(intensities: &[f64], d: &[f64]) -> Option<(f64, Vec<usize>)> {
    let big = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut alpha = f64::INFINITY;
    for (i, x) in d.iter().enumerate() {
        if *x < -1e-12 * big {
            alpha = alpha.min(intensities[i] / -x);
        }
    }
    if !alpha.is_finite() {
        return None;
    }
    let hit = d
        .iter()
        .enumerate()
        .filter(|(i, x)| **x < -1e-12 * big && (intensities[*i] / -**x - alpha).abs() <= 1e-9 * alpha.max(1e-300))
        .map(|(i, _)| i)
        .collect();
    Some((alpha, hit))
}

fn shifted(intensities: &[f64], d: &[f64], alpha: f64, hit: &[usize]) -> Vec<f64> {
    let mut v: Vec<f64> = intensities.iter().zip(d).map(|(i, x)| (i + alpha * x).max(0.0)).collect();
    for &h in hit {
        v[h] = 0.0;
    }
    for x in v.iter_mut() {
        if *x < 1e-14 {
            *x = 0.0;
        }
    }
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn finish(mut raw: Vec<Outcome>) -> Result<Vec<Outcome>> {
    raw.retain(|o| o.probability > 0.0);
    let total: f64 = raw.iter().map(|o| o.probability).sum();
    if raw.is_empty() || !(total > 0.0) {
        return Err(Error::DegenerateEvent);
    }
    let mut out: Vec<Outcome> = Vec::new();
    for o in raw {
        match out.iter_mut().find(|p| p.intensities.iter().zip(&o.intensities).all(|(a, b)| (a - b).abs() <= 1e-14)) {
            Some(p) => {
                p.probability += o.probability;
                p.label = format!("{}; {}", p.label, o.label);
            }
            None => out.push(o),
        }
    }
    out.iter_mut().for_each(|o| o.probability /= total);
    Ok(out)
}

/// Outcomes of the reconfiguration rule: the two-sided rule on a
/// one-dimensional basis, per-area bundle decays on larger bases of the
/// two-bundle pattern.
pub fn apply_reconfiguration_rule(sys: &ReconfigurationSystem, basis: &[Vec<f64>]) -> Result<Vec<Outcome>> {
    let inten = &sys.intensities;
    if sys.alive.len() == 1 {
        return Ok(vec![Outcome { intensities: inten.clone(), probability: 1.0, label: "collapsed".into() }]);
    }
    let rates = sys.rates()?;
    match basis.len() {
        0 => Err(Error::Numerical("no reconfiguration solution at the critical border".into())),
        1 => {
            let d = &basis[0];
            let big = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let (mut p_plus, mut p_minus) = (0.0, 0.0);
            for (a, r) in sys.areas.iter().zip(&rates) {
                for (b, rate) in a.bundles.iter().zip(r) {
                    let proj: f64 = b.iter().map(|&i| d[i]).sum();
                    if proj < -1e-12 * big {
                        p_plus += rate;
                    } else if proj > 1e-12 * big {
                        p_minus += rate;
                    }
                }
            }
            let mut raw = Vec::new();
            if let Some((alpha, hit)) = step_to_boundary(inten, d) {
                raw.push(Outcome { intensities: shifted(inten, d, alpha, &hit), probability: p_plus, label: "+dI".into() });
            }
            let neg: Vec<f64> = d.iter().map(|x| -x).collect();
            if let Some((alpha, hit)) = step_to_boundary(inten, &neg) {
                raw.push(Outcome { intensities: shifted(inten, &neg, alpha, &hit), probability: p_minus, label: "-dI".into() });
            }
            finish(raw)
        }
        _ if sys.is_typical() => {
            let mut raw = Vec::new();
            for a in sys.areas.iter().filter(|a| a.bundles.len() == 2) {
                let e = a.energies.as_ref().expect("rates() checked energies");
                for (k, members) in a.bundles.iter().enumerate() {
                    let ik = a.intensities[k];
                    let mut v = vec![0.0; inten.len()];
                    for &i in members {
                        v[i] = inten[i] / ik;
                    }
                    let ids: Vec<String> = members.iter().map(|&i| sys.ids.get(i).copied().unwrap_or(i).to_string()).collect();
                    raw.push(Outcome {
                        intensities: v,
                        probability: ik * e[(k, 1 - k)] / sys.hbar,
                        label: format!("{}: {{{}}}", a.area, ids.join(",")),
                    });
                }
            }
            finish(raw)
        }
        dim => Err(Error::UnsupportedSolutionSpace(dim)),
    }
}

/// `out[i][j]` is true iff scenarios i and j are decorrelated at `t`: some
/// part is displaced relative to its counterpart by more than its
/// decorrelation scale (6σ for Gaussian components).
pub fn decorrelation_check(exp: &Experiment, t: f64) -> Vec<Vec<bool>> {
    let n = exp.scenarios.len();
    let mut out = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (a, b) = (&exp.scenarios[i].trajectory, &exp.scenarios[j].trajectory);
            out[i][j] = !a.same_world(b)
                || a.parts.iter().zip(&b.parts).any(|(p, q)| {
                    norm(sub(p.displacement.at(t), q.displacement.at(t))) > p.decorrelation_scale()
                });
        }
    }
    out
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    parent[x] = r;
    r
}

type Structure = Vec<Vec<Vec<usize>>>;

pub struct Engine<'a> {
    exp: &'a Experiment,
    opts: EngineOptions,
    model: ActionModel<'a>,
    structures: Mutex<HashMap<Vec<u64>, Arc<Structure>>>,
}

impl<'a> Engine<'a> {
    pub fn new(exp: &'a Experiment, opts: EngineOptions) -> Self {
        let model = ActionModel::new(exp, opts.local, opts.time_quad);
        Engine { exp, opts, model, structures: Mutex::new(HashMap::new()) }
    }

    pub fn experiment(&self) -> &Experiment {
        self.exp
    }

    pub fn options(&self) -> &EngineOptions {
        &self.opts
    }

    pub fn model(&self) -> &ActionModel<'a> {
        &self.model
    }

    /// Bundles of the surviving scenarios at `t`, merged where scenarios
    /// are still correlated.
    fn structure(&self, alive: &[usize], t: f64) -> Result<Arc<Structure>> {
        let mut key: Vec<u64> = alive.iter().map(|&i| i as u64).collect();
        for &i in alive {
            for p in &self.exp.scenarios[i].trajectory.parts {
                key.extend(p.displacement.at(t).iter().map(|x| x.to_bits()));
            }
        }
        if let Some(s) = self.structures.lock().expect("structure cache poisoned").get(&key) {
            return Ok(s.clone());
        }
        let zeros = vec![0.0; self.exp.scenarios.len()];
        let raw = bundles_for(self.exp, alive, &zeros, t, self.opts.match_tol, &self.opts.local)?;
        let corr = decorrelation_check(self.exp, t);
        let mut out = Vec::new();
        for ab in raw {
            let nb = ab.bundles.len();
            let mut parent: Vec<usize> = (0..nb).collect();
            for x in 0..nb {
                for y in x + 1..nb {
                    let correlated = ab.bundles[x]
                        .members
                        .iter()
                        .any(|&i| ab.bundles[y].members.iter().any(|&j| !corr[i][j]));
                    if correlated {
                        let (rx, ry) = (find(&mut parent, x), find(&mut parent, y));
                        parent[rx.max(ry)] = rx.min(ry);
                    }
                }
            }
            let mut groups: Vec<Vec<usize>> = Vec::new();
            let mut root_of: HashMap<usize, usize> = HashMap::new();
            for x in 0..nb {
                let r = find(&mut parent, x);
                let g = *root_of.entry(r).or_insert_with(|| {
                    groups.push(Vec::new());
                    groups.len() - 1
                });
                groups[g].extend(&ab.bundles[x].members);
            }
            for g in groups.iter_mut() {
                g.sort_unstable();
            }
            groups.sort();
            out.push(groups);
        }
        let s = Arc::new(out);
        self.structures.lock().expect("structure cache poisoned").insert(key, s.clone());
        Ok(s)
    }

    fn bundle_average<F>(inten: &[f64], k: &[usize], v: &[usize], mut f: F) -> Result<f64>
    where
        F: FnMut(usize, usize) -> Result<f64>,
    {
        let (mut num, mut den) = (0.0, 0.0);
        for &i in k {
            for &j in v {
                let w = inten[i] * inten[j];
                num += w * f(i, j)?;
                den += w;
            }
        }
        if den > 0.0 {
            Ok(num / den)
        } else {
            // Members without intensity: plain mean.
            let mut s = 0.0;
            for &i in k {
                for &j in v {
                    s += f(i, j)?;
                }
            }
            Ok(s / (k.len() * v.len()) as f64)
        }
    }

    /// Reconfiguration system at border `t` for intensities `intensities`
    /// (renormalized over the non-zero entries). Energies are not evaluated.
    pub fn system(&self, intensities: &[f64], t: f64) -> Result<ReconfigurationSystem> {
        let total: f64 = intensities.iter().filter(|x| **x > 0.0).sum();
        if !(total > 0.0) {
            return Err(Error::Invalid("intensity vector has no positive entry".into()));
        }
        let inten: Vec<f64> = intensities.iter().map(|x| if *x > 0.0 { x / total } else { 0.0 }).collect();
        let alive: Vec<usize> = (0..inten.len()).filter(|&i| inten[i] > 0.0).collect();
        let st = self.structure(&alive, t)?;
        let mut areas = Vec::new();
        for (k, groups) in st.iter().enumerate() {
            let nb = groups.len();
            let mut actions = DMatrix::zeros(nb, nb);
            for x in 0..nb {
                for y in x + 1..nb {
                    let s = Self::bundle_average(&inten, &groups[x], &groups[y], |i, j| {
                        self.model.action(Scope::Area(k), i, j, t)
                    })?;
                    actions[(x, y)] = s;
                    actions[(y, x)] = s;
                }
            }
            areas.push(AreaSystem {
                area: self.model.areas()[k].id.clone(),
                scope: Scope::Area(k),
                intensities: groups.iter().map(|g| g.iter().map(|&i| inten[i]).sum()).collect(),
                bundles: groups.clone(),
                actions,
                energies: None,
            });
        }
        Ok(ReconfigurationSystem {
            border: t,
            intensities: inten,
            alive,
            ids: self.exp.scenarios.iter().map(|s| s.id).collect(),
            hbar: self.exp.units.hbar,
            areas,
        })
    }

    /// Fills in the bundle energies E^A_κν at the system's border.
    pub fn attach_energies(&self, sys: &mut ReconfigurationSystem) -> Result<()> {
        let t = sys.border;
        for a in sys.areas.iter_mut() {
            let nb = a.bundles.len();
            let mut e = DMatrix::zeros(nb, nb);
            for x in 0..nb {
                for y in x + 1..nb {
                    let v = Self::bundle_average(&sys.intensities, &a.bundles[x], &a.bundles[y], |i, j| {
                        self.model.energy(a.scope, i, j, t)
                    })?;
                    e[(x, y)] = v;
                    e[(y, x)] = v;
                }
            }
            a.energies = Some(e);
        }
        Ok(())
    }

    fn crossed(&self, intensities: &[f64], t: f64) -> Result<bool> {
        Ok(self.system(intensities, t)?.lambda_star() >= 1.0)
    }

    /// Smallest border ≥ `t_lo` at which the reconfiguration equation has a
    /// norm-conserving solution, or `Err(t_max)` when none before the horizon.
    pub fn critical_time(&self, intensities: &[f64], t_lo: f64) -> Result<std::result::Result<f64, f64>> {
        let alive: Vec<usize> = (0..intensities.len()).filter(|&i| intensities[i] > 0.0).collect();
        let scale = self.model.energy_scale(&alive, t_lo)?;
        let hbar = self.exp.units.hbar;
        let t_max = match self.opts.t_max {
            Some(t) => t,
            None if scale > 0.0 => t_lo + 1e3 * hbar / scale,
            None => return Ok(Err(t_lo)),
        };
        if self.crossed(intensities, t_lo)? {
            return Ok(Ok(t_lo));
        }
        if !(t_max > t_lo) || scale == 0.0 {
            return Ok(Err(t_max));
        }
        let mut cand: Vec<f64> = self.exp.breakpoints().into_iter().filter(|&b| b > t_lo && b < t_max).collect();
        let mut h = (hbar / scale).min(t_max - t_lo) / 64.0;
        while t_lo + h < t_max {
            cand.push(t_lo + h);
            h *= 2.0;
        }
        cand.push(t_max);
        cand.sort_by(f64::total_cmp);
        cand.dedup();
        let mut lo = t_lo;
        for c in cand {
            if self.crossed(intensities, c)? {
                let mut hi = c;
                while hi - lo > self.opts.bisect_rel * hi.abs().max(f64::MIN_POSITIVE) {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.crossed(intensities, mid)? {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Ok(Ok(hi));
            }
            lo = c;
        }
        Ok(Err(t_max))
    }

    /// Next reduction event for `intensities`, searching from `t_lo`.
    pub fn reduce(&self, intensities: &[f64], t_lo: f64) -> Result<Reduction> {
        let alive: Vec<usize> = (0..intensities.len()).filter(|&i| intensities[i] > 0.0).collect();
        if alive.len() == 1 {
            return Ok(Reduction::Collapsed { survivor: alive[0] });
        }
        let t_c = match self.critical_time(intensities, t_lo)? {
            Ok(t) => t,
            Err(t_max) => return Ok(Reduction::NoReduction { t_max }),
        };
        let mut sys = self.system(intensities, t_c)?;
        // Normally λ* ≈ 1 here; it exceeds 1 only when the search started
        // past criticality, and then that eigenvalue is the fixed point.
        let basis = sys.solve_near(sys.lambda_star(), self.opts.eigen_tol);
        self.attach_energies(&mut sys)?;
        let outcomes = apply_reconfiguration_rule(&sys, &basis)?;
        Ok(Reduction::Event(ReductionEvent { t_c, basis, outcomes, system: sys }))
    }

    /// First event of the experiment from its latest split time.
    pub fn first_reduction(&self) -> Result<Reduction> {
        self.reduce(&self.exp.intensities(), self.exp.max_split_time())
    }
}

/// Critical border of the experiment's first reduction, or `None`.
pub fn critical_tau(exp: &Experiment, t_max: Option<f64>) -> Result<Option<f64>> {
    let engine = Engine::new(exp, EngineOptions { t_max, ..Default::default() });
    Ok(engine.critical_time(&exp.intensities(), exp.max_split_time())?.ok())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreaActions {
    pub area: String,
    pub bundles: Vec<LocalBundle>,
    /// S^A_κν, symmetric.
    pub pair: DMatrix<f64>,
    /// S^A_κ = Σ_{ν≠κ} I_ν S^A_κν.
    pub detuning: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionState {
    pub border: f64,
    pub areas: Vec<AreaActions>,
    /// Whole-space pair actions S_Gij between scenarios.
    pub global: DMatrix<f64>,
}

/// Competition and detuning actions at border `t_bar` for the given
/// bundles; `dt` caps the initial panel width of the time integration.
pub fn accumulate_actions(exp: &Experiment, bundles: &[AreaBundles], t_bar: f64, dt: f64) -> Result<ActionState> {
    if !(t_bar >= exp.t_start) {
        return Err(Error::Domain(format!("border {t_bar} precedes t_start {}", exp.t_start)));
    }
    if !(dt > 0.0) {
        return Err(Error::Domain("time step must be positive".into()));
    }
    let model = ActionModel::new(exp, LocalOptions::default(), QuadOptions::rel(1e-9)).with_max_step(dt);
    let inten = exp.intensities();
    let mut areas = Vec::new();
    for ab in bundles {
        let scope = match model.areas().iter().position(|a| a.id == ab.area.id) {
            Some(k) => Scope::Area(k),
            None if ab.area.id == "all" => Scope::Global,
            None => return Err(Error::Invalid(format!("unknown bundle area '{}'", ab.area.id))),
        };
        let nb = ab.bundles.len();
        let mut pair = DMatrix::zeros(nb, nb);
        for x in 0..nb {
            for y in x + 1..nb {
                let s = Engine::bundle_average(&inten, &ab.bundles[x].members, &ab.bundles[y].members, |i, j| {
                    model.action(scope, i, j, t_bar)
                })?;
                pair[(x, y)] = s;
                pair[(y, x)] = s;
            }
        }
        let bi: Vec<f64> = ab.bundles.iter().map(|b| b.intensity).collect();
        let detuning = energy_increases(&bi, &pair);
        areas.push(AreaActions { area: ab.area.id.clone(), bundles: ab.bundles.clone(), pair, detuning });
    }
    let n = exp.scenarios.len();
    let mut global = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let s = model.action(Scope::Global, i, j, t_bar)?;
            global[(i, j)] = s;
            global[(j, i)] = s;
        }
    }
    Ok(ActionState { border: t_bar, areas, global })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergySample {
    pub t: f64,
    pub energy: f64,
    /// E(t) − E(t_s).
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTrace {
    pub baseline: f64,
    pub collapse: Option<f64>,
    pub samples: Vec<EnergySample>,
}

/// Total energy of a two-state superposition sampled on `samples` points
/// over [t_s, t_end]. Before collapse the mean-field energy is used; after
/// it the surviving state's.
pub fn energy_trace(exp: &Experiment, t_end: f64, samples: usize, opts: EngineOptions) -> Result<EnergyTrace> {
    if exp.scenarios.len() != 2 {
        return Err(Error::Invalid("energy trace needs a two-state experiment".into()));
    }
    let engine = Engine::new(exp, opts);
    let t_s = exp.max_split_time();
    let (collapse, after) = match engine.reduce(&exp.intensities(), t_s)? {
        Reduction::Event(ev) => {
            let best = ev
                .outcomes
                .iter()
                .max_by(|a, b| a.probability.total_cmp(&b.probability))
                .expect("events carry outcomes");
            (Some(ev.t_c), best.intensities.clone())
        }
        _ => (None, exp.intensities()),
    };
    let units = &exp.units;
    let (r0, r1) = (&exp.scenarios[0].trajectory, &exp.scenarios[1].trajectory);
    // Energy of a state alone: its gravitational self-energy −½W_ii.
    let baseline = -0.5 * self_energy(r0, t_s, units)?;
    let offset = |inten: &[f64], t: f64| -> Result<f64> {
        if exp.energies.is_some() {
            return Ok(inten[0] * inten[1] * engine.model().energy(Scope::Global, 0, 1, t)?);
        }
        // ½Σ I_i W_ii − ½ΣΣ I_i I_j W_ij.
        let w = [[self_energy(r0, t, units)?, interaction_energy(r0, r1, t, units)?], [
            interaction_energy(r1, r0, t, units)?,
            self_energy(r1, t, units)?,
        ]];
        let mut own = 0.0;
        let mut shared = 0.0;
        for i in 0..2 {
            own += inten[i] * w[i][i];
            for j in 0..2 {
                shared += inten[i] * inten[j] * w[i][j];
            }
        }
        Ok(0.5 * own - 0.5 * shared)
    };
    let n = samples.max(2);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let t = t_s + (t_end - t_s) * k as f64 / (n - 1) as f64;
        let inten = match collapse {
            Some(tc) if t >= tc => after.clone(),
            _ => exp.intensities(),
        };
        let off = offset(&inten, t)?;
        out.push(EnergySample { t, energy: baseline + off, offset: off });
    }
    Ok(EnergyTrace { baseline, collapse, samples: out })
}
