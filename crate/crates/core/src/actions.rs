//! Pair DP energies of scenarios (from geometry or a prescribed table) and
//! their time integrals, the competition actions.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::Result;
use crate::mass::{dp_energy, dp_energy_local, LocalOptions, MassDistribution, Region};
use crate::quadrature::{integrate_try, QuadOptions};
use crate::scenario::{BundleArea, Experiment};

/// Where a pair energy is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scope {
    /// Index into the model's competition areas.
    Area(usize),
    Global,
}

/// Both distributions carry the same bodies at the same places at `t`.
pub fn identical_at(a: &MassDistribution, b: &MassDistribution, t: f64) -> bool {
    a.same_world(b) && a.parts.iter().zip(&b.parts).all(|(p, q)| p.displacement.at(t) == q.displacement.at(t))
}

/// Cumulative action of one pair at the time knots; between knots the
/// energy is either constant (`Some`) or integrated on demand.
#[derive(Debug, Clone)]
struct ActionTable {
    split: f64,
    knots: Vec<f64>,
    cumulative: Vec<f64>,
    constant: Vec<Option<f64>>,
    tail: f64,
}

pub struct ActionModel<'a> {
    exp: &'a Experiment,
    areas: Vec<BundleArea>,
    local: LocalOptions,
    time_quad: QuadOptions,
    max_step: Option<f64>,
    knots: Vec<f64>,
    tables: Mutex<HashMap<(Scope, usize, usize), Arc<ActionTable>>>,
    energies: Mutex<HashMap<(Scope, usize, usize, u64), f64>>,
}

impl<'a> ActionModel<'a> {
    pub fn new(exp: &'a Experiment, local: LocalOptions, time_quad: QuadOptions) -> Self {
        ActionModel {
            exp,
            areas: exp.competition_areas(),
            local,
            time_quad,
            max_step: None,
            knots: exp.breakpoints(),
            tables: Mutex::new(HashMap::new()),
            energies: Mutex::new(HashMap::new()),
        }
    }

    /// Caps the width of the panels the time integration starts from.
    pub fn with_max_step(mut self, dt: f64) -> Self {
        self.max_step = (dt > 0.0 && dt.is_finite()).then_some(dt);
        self
    }

    pub fn experiment(&self) -> &Experiment {
        self.exp
    }

    pub fn areas(&self) -> &[BundleArea] {
        &self.areas
    }

    pub fn local_options(&self) -> &LocalOptions {
        &self.local
    }

    pub fn split_time(&self, i: usize, j: usize) -> f64 {
        let s = &self.exp.scenarios;
        s[i].split_time.max(s[j].split_time).max(self.exp.t_start)
    }

    /// E_Gij(t) on `scope`, for scenario indices `i`, `j`.
    pub fn energy(&self, scope: Scope, i: usize, j: usize, t: f64) -> Result<f64> {
        if i == j {
            return Ok(0.0);
        }
        let key = (scope, i.min(j), i.max(j), t.to_bits());
        if let Some(e) = self.energies.lock().expect("energy cache poisoned").get(&key) {
            return Ok(*e);
        }
        let e = self.compute_energy(scope, key.1, key.2, t)?;
        self.energies.lock().expect("energy cache poisoned").insert(key, e);
        Ok(e)
    }

    fn compute_energy(&self, scope: Scope, i: usize, j: usize, t: f64) -> Result<f64> {
        let (si, sj) = (&self.exp.scenarios[i], &self.exp.scenarios[j]);
        if identical_at(&si.trajectory, &sj.trajectory, t) {
            return Ok(0.0);
        }
        let area_id = match scope {
            Scope::Area(k) => self.areas[k].id.as_str(),
            Scope::Global => "all",
        };
        if let Some(table) = &self.exp.energies {
            let pair = |e: &&crate::scenario::TabulatedEnergy| {
                (e.a == si.id && e.b == sj.id) || (e.a == sj.id && e.b == si.id)
            };
            let here: Vec<_> = table.iter().filter(pair).filter(|e| e.area == area_id).collect();
            // A global query with only per-area entries sums the areas.
            let used = if here.is_empty() && area_id == "all" { table.iter().filter(pair).collect() } else { here };
            return Ok(used.iter().map(|e| e.value_at(t)).sum());
        }
        let region = match scope {
            Scope::Area(k) => &self.areas[k].region,
            Scope::Global => &Region::Everywhere,
        };
        match region {
            Region::Everywhere => dp_energy(&si.trajectory, &sj.trajectory, t, &self.exp.units),
            r => dp_energy_local(&si.trajectory, &sj.trajectory, r, t, &self.exp.units, &self.local),
        }
    }

    fn constant_between(&self, i: usize, j: usize, a: f64, b: f64) -> bool {
        let mid = 0.5 * (a + b);
        [i, j].iter().all(|&k| {
            self.exp.scenarios[k].trajectory.parts.iter().all(|p| p.displacement.at(a) == p.displacement.at(mid))
        })
    }

    fn table(&self, scope: Scope, i: usize, j: usize) -> Result<Arc<ActionTable>> {
        let key = if i < j { (scope, i, j) } else { (scope, j, i) };
        if let Some(t) = self.tables.lock().expect("action cache poisoned").get(&key) {
            return Ok(t.clone());
        }
        let (i, j) = (key.1, key.2);
        let split = self.split_time(i, j);
        let mut knots = vec![split];
        for &k in self.knots.iter().filter(|&&k| k > split) {
            if let Some(h) = self.max_step {
                let last = *knots.last().expect("non-empty");
                let n = ((k - last) / h).ceil().max(1.0) as usize;
                knots.extend((1..n).map(|m| last + (k - last) * m as f64 / n as f64));
            }
            knots.push(k);
        }
        let mut cumulative = vec![0.0];
        let mut constant = Vec::new();
        let mut s = 0.0;
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            if self.constant_between(i, j, a, b) {
                let e = self.energy(scope, i, j, 0.5 * (a + b))?;
                s += e * (b - a);
                constant.push(Some(e));
            } else {
                s += integrate_try(|t| self.energy(scope, i, j, t), a, b, &[], &self.time_quad)?.value;
                constant.push(None);
            }
            cumulative.push(s);
        }
        let tail = self.energy(scope, i, j, *knots.last().expect("non-empty"))?;
        let table = Arc::new(ActionTable { split, knots, cumulative, constant, tail });
        self.tables.lock().expect("action cache poisoned").insert(key, table.clone());
        Ok(table)
    }

    /// S_Gij(t̄) = ∫ E_Gij dt from the pair's split time to `t`.
    pub fn action(&self, scope: Scope, i: usize, j: usize, t: f64) -> Result<f64> {
        if i == j {
            return Ok(0.0);
        }
        let tab = self.table(scope, i, j)?;
        if t <= tab.split {
            return Ok(0.0);
        }
        let k = tab.knots.partition_point(|&x| x <= t) - 1;
        let base = tab.cumulative[k];
        let t0 = tab.knots[k];
        if k + 1 == tab.knots.len() {
            return Ok(base + tab.tail * (t - t0));
        }
        match tab.constant[k] {
            Some(e) => Ok(base + e * (t - t0)),
            None => Ok(base + integrate_try(|x| self.energy(scope, i, j, x), t0, t, &[], &self.time_quad)?.value),
        }
    }

    /// Largest summed pair energy over the areas, sampled at `from` and at
    /// every later knot; a scale for search horizons.
    pub fn energy_scale(&self, alive: &[usize], from: f64) -> Result<f64> {
        let mut times = vec![from];
        times.extend(self.knots.iter().copied().filter(|&k| k > from));
        let scopes: Vec<Scope> = (0..self.areas.len()).map(Scope::Area).collect();
        let mut best: f64 = 0.0;
        for t in times {
            let mut sum = 0.0;
            for &sc in &scopes {
                for (a, &i) in alive.iter().enumerate() {
                    for &j in &alive[a + 1..] {
                        if t >= self.split_time(i, j) {
                            sum += self.energy(sc, i, j, t)?;
                        }
                    }
                }
            }
            best = best.max(sum);
        }
        Ok(best)
    }
}
