//! CSV tables behind the command-line subcommands. Columns are fixed and
//! floats carry 17 significant digits so outputs can be compared byte for
//! byte.

use crate::actions::Scope;
use crate::cascade::{
    delayed_displacement_scan, locate_transition, signalling_statistic, sweep_three_state, three_state_probability,
    Cascade,
};
use crate::config::{ScenarioConfig, SweepKind};
use crate::engine::{energy_trace, Engine, EngineOptions, Reduction};
use crate::error::{Error, Result};
use crate::scenario::Experiment;
use crate::units::UnitSystem;
use crate::wavepacket::path_intensity_drop;

pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

fn vector(v: &[f64]) -> String {
    v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(";")
}

struct Table(csv::Writer<Vec<u8>>);

impl Table {
    fn new(header: &[&str]) -> Result<Self> {
        let mut t = Table(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new()));
        t.row(header.iter().map(|s| s.to_string()))?;
        Ok(t)
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<()> {
        self.0.write_record(fields.into_iter().collect::<Vec<_>>()).map_err(|e| Error::Numerical(e.to_string()))
    }

    fn finish(self) -> Result<String> {
        let bytes = self.0.into_inner().map_err(|e| Error::Numerical(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Numerical(e.to_string()))
    }
}

/// Border after every schedule knot, where the pair energies settle.
fn settled_time(exp: &Experiment) -> f64 {
    exp.breakpoints().last().copied().unwrap_or(exp.t_start).max(exp.max_split_time())
}

/// Pair DP energies on every competition area and lifetimes ħ/E.
pub fn dpenergy(exp: &Experiment, opts: &EngineOptions) -> Result<String> {
    let engine = Engine::new(exp, opts.clone());
    let model = engine.model();
    let t = settled_time(exp);
    let mut scopes: Vec<(String, Scope)> =
        model.areas().iter().enumerate().map(|(k, a)| (a.id.clone(), Scope::Area(k))).collect();
    if !scopes.iter().any(|s| s.0 == "all") {
        scopes.push(("all".into(), Scope::Global));
    }
    let mut tab = Table::new(&["area", "scenario_a", "scenario_b", "t", "e_g", "lifetime"])?;
    let n = exp.scenarios.len();
    for (id, sc) in &scopes {
        for i in 0..n {
            for j in i + 1..n {
                let e = model.energy(*sc, i, j, t)?;
                let life = if e > 0.0 { num(exp.units.hbar / e) } else { "no reduction".into() };
                tab.row([
                    id.clone(),
                    exp.scenarios[i].id.to_string(),
                    exp.scenarios[j].id.to_string(),
                    num(t),
                    num(e),
                    life,
                ])?;
            }
        }
    }
    tab.finish()
}

/// First event's outcomes, then the exact survivor distribution.
pub fn reduce(exp: &Experiment, opts: &EngineOptions) -> Result<String> {
    let cascade = Cascade::new(exp, opts.clone());
    let mut tab = Table::new(&["row", "label", "t_c", "probability", "intensities"])?;
    let first = cascade.step(&exp.intensities(), exp.max_split_time())?;
    match &*first {
        Reduction::NoReduction { t_max } => {
            tab.row(["no_reduction".into(), String::new(), num(*t_max), String::new(), vector(&exp.intensities())])?;
            return tab.finish();
        }
        Reduction::Collapsed { .. } => {
            tab.row(["outcome".into(), "collapsed".into(), num(exp.max_split_time()), num(1.0), vector(&exp.intensities())])?;
        }
        Reduction::Event(ev) => {
            for o in &ev.outcomes {
                tab.row(["outcome".into(), o.label.clone(), num(ev.t_c), num(o.probability), vector(&o.intensities)])?;
            }
        }
    }
    let tree = cascade.tree()?;
    for (k, p) in tree.survivor.iter().enumerate() {
        tab.row(["survivor".into(), exp.scenarios[k].id.to_string(), String::new(), num(*p), String::new()])?;
    }
    for (inten, p) in &tree.unresolved {
        tab.row(["unresolved".into(), "no reduction".into(), String::new(), num(*p), vector(inten)])?;
    }
    tab.finish()
}

/// Survivor frequencies over all trials, their errors and the exact tree
/// value.
pub fn montecarlo(exp: &Experiment, opts: &EngineOptions, trials: u64, seed: u64) -> Result<String> {
    let cascade = Cascade::new(exp, opts.clone());
    let tree = cascade.tree()?;
    let est = cascade.estimate(trials, seed)?;
    let mut tab = Table::new(&["scenario_id", "frequency", "stderr", "analytic_p"])?;
    for (k, s) in exp.scenarios.iter().enumerate() {
        let (p, se) = est.share_of_all(k);
        tab.row([s.id.to_string(), num(p), num(se), num(tree.survivor[k])])?;
    }
    if est.unresolved > 0 || tree.unresolved_probability() > 0.0 {
        let q = est.unresolved as f64 / trials as f64;
        tab.row(["unresolved".into(), num(q), num((q * (1.0 - q) / trials as f64).sqrt()), num(tree.unresolved_probability())])?;
    }
    tab.finish()
}

/// The sweep named in the config: three-state I₂ grid, delay scan or the
/// signalling ratios. Delay scans also return the located transition.
pub fn sweep(cfg: &ScenarioConfig, exp: &Experiment, trials: u64, seed: u64) -> Result<(String, Option<String>)> {
    let sw = cfg.sweep.as_ref().ok_or_else(|| Error::Config("config has no [sweep] section".into()))?;
    match sw.kind {
        SweepKind::ThreeState => {
            let mut tab = Table::new(&["i2", "analytic", "exact", "mc", "stderr"])?;
            let rows = sweep_three_state(exp, &sw.values, trials, seed)?;
            let note = rows.first().and_then(|r| r.warning.clone());
            for r in rows {
                tab.row([num(r.i2), num(r.analytic), num(r.exact), num(r.mc), num(r.stderr)])?;
            }
            Ok((tab.finish()?, note))
        }
        SweepKind::Delay => {
            let mut tab = Table::new(&["delay", "exact", "mc", "stderr"])?;
            let rows = delayed_displacement_scan(exp, &sw.values, trials, seed)?;
            let i2 = exp.intensities().get(2).copied().unwrap_or(f64::NAN);
            let note = match locate_transition(&rows, three_state_probability(i2), i2) {
                Some((a, b)) => format!("transition between delays {} and {}", num(a), num(b)),
                None => "no transition on the grid".into(),
            };
            for r in rows {
                tab.row([num(r.delay), num(r.exact), num(r.mc), num(r.stderr)])?;
            }
            Ok((tab.finish()?, Some(note)))
        }
        SweepKind::Signalling => {
            let s = signalling_statistic(exp, trials, seed)?;
            let mut tab = Table::new(&["aperture", "analytic", "mc", "stderr"])?;
            for (name, r) in [("in", s.aperture_in), ("out", s.aperture_out)] {
                tab.row([name.to_string(), num(r.analytic), num(r.mc), num(r.stderr)])?;
            }
            Ok((tab.finish()?, None))
        }
    }
}

/// Energy trace of a two-state experiment up to `t_end` (default: three
/// times the collapse border).
pub fn energy(exp: &Experiment, opts: &EngineOptions, t_end: Option<f64>, samples: usize) -> Result<String> {
    let t_s = exp.max_split_time();
    let end = match t_end {
        Some(t) => t,
        None => match Engine::new(exp, opts.clone()).critical_time(&exp.intensities(), t_s)? {
            Ok(tc) if tc > t_s => t_s + 3.0 * (tc - t_s),
            _ => t_s + 1.0,
        },
    };
    let tr = energy_trace(exp, end, samples, opts.clone())?;
    let mut tab = Table::new(&["t", "energy", "offset", "phase"])?;
    for s in &tr.samples {
        let phase = match tr.collapse {
            Some(tc) if s.t >= tc => "post",
            _ => "pre",
        };
        tab.row([num(s.t), num(s.energy), num(s.offset), phase.to_string()])?;
    }
    tab.finish()
}

/// I'(dS/ħ) on `points` values in [0, ds_max].
pub fn wavepacket(duration: f64, ds_max: f64, points: usize) -> Result<String> {
    if points < 2 {
        return Err(Error::Config("need at least two grid points".into()));
    }
    let u = UnitSystem::dimensionless();
    let mut tab = Table::new(&["ds_over_hbar", "numeric", "linear", "residual"])?;
    for k in 0..points {
        let s = ds_max * k as f64 / (points - 1) as f64;
        let d = path_intensity_drop(s, duration, &u)?;
        tab.row([num(s), num(d.numeric), num(d.linear), num(d.numeric - d.linear)])?;
    }
    tab.finish()
}
