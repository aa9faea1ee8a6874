//! Reduction cascades: repeated events until one scenario survives, exact
//! outcome-tree expectations and Monte-Carlo estimates.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::actions::Scope;
use crate::engine::{Engine, EngineOptions, Reduction};
use crate::error::{Error, Result};
use crate::scenario::Experiment;

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeStep {
    pub t_c: f64,
    pub outcome: usize,
    pub intensities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeResult {
    /// Surviving scenario index, `None` when the cascade stalled.
    pub survivor: Option<usize>,
    pub intensities: Vec<f64>,
    pub events: Vec<CascadeStep>,
    pub seed: u64,
    pub trial: u64,
}

type Memo = Mutex<HashMap<(Vec<u64>, u64), Result<Arc<Reduction>>>>;

/// An engine plus a memo of reduction events keyed by the intensity vector
/// and search start, shared by all trials.
pub struct Cascade<'a> {
    engine: Engine<'a>,
    memo: Memo,
}

fn key(intensities: &[f64], t: f64) -> (Vec<u64>, u64) {
    (intensities.iter().map(|x| x.to_bits()).collect(), t.to_bits())
}

impl<'a> Cascade<'a> {
    pub fn new(exp: &'a Experiment, opts: EngineOptions) -> Self {
        Cascade { engine: Engine::new(exp, opts), memo: Mutex::new(HashMap::new()) }
    }

    pub fn engine(&self) -> &Engine<'a> {
        &self.engine
    }

    pub fn step(&self, intensities: &[f64], t_lo: f64) -> Result<Arc<Reduction>> {
        let k = key(intensities, t_lo);
        if let Some(r) = self.memo.lock().expect("cascade memo poisoned").get(&k) {
            return r.clone();
        }
        let r = self.engine.reduce(intensities, t_lo).map(Arc::new);
        self.memo.lock().expect("cascade memo poisoned").insert(k, r.clone());
        r
    }

    fn start(&self) -> (Vec<f64>, f64) {
        let exp = self.engine.experiment();
        (exp.intensities(), exp.max_split_time())
    }

    /// One cascade driven by trial stream `trial` of master seed `seed`.
    pub fn run(&self, seed: u64, trial: u64) -> Result<CascadeResult> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        let (mut inten, mut t) = self.start();
        let mut events = Vec::new();
        let n = inten.len();
        for _ in 0..=n {
            match &*self.step(&inten, t)? {
                Reduction::Collapsed { survivor } => {
                    return Ok(CascadeResult { survivor: Some(*survivor), intensities: inten, events, seed, trial });
                }
                Reduction::NoReduction { .. } => break,
                Reduction::Event(ev) => {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    let mut pick = ev.outcomes.len() - 1;
                    for (k, o) in ev.outcomes.iter().enumerate() {
                        acc += o.probability;
                        if u < acc {
                            pick = k;
                            break;
                        }
                    }
                    inten = ev.outcomes[pick].intensities.clone();
                    t = ev.t_c;
                    events.push(CascadeStep { t_c: ev.t_c, outcome: pick, intensities: inten.clone() });
                }
            }
        }
        Ok(CascadeResult { survivor: None, intensities: inten, events, seed, trial })
    }

    /// Exhaustive expectation over the outcome tree.
    pub fn tree(&self) -> Result<TreeDistribution> {
        let (inten, t) = self.start();
        let mut d = TreeDistribution { survivor: vec![0.0; inten.len()], unresolved: Vec::new(), max_depth: 0, min_depth: usize::MAX };
        self.walk(&inten, t, 1.0, 0, &mut d)?;
        Ok(d)
    }

    fn walk(&self, inten: &[f64], t: f64, weight: f64, depth: usize, d: &mut TreeDistribution) -> Result<()> {
        if depth > inten.len() {
            return Err(Error::Numerical("outcome tree deeper than the scenario count".into()));
        }
        match &*self.step(inten, t)? {
            Reduction::Collapsed { survivor } => {
                d.survivor[*survivor] += weight;
                d.max_depth = d.max_depth.max(depth);
                d.min_depth = d.min_depth.min(depth);
            }
            Reduction::NoReduction { .. } => d.unresolved.push((inten.to_vec(), weight)),
            Reduction::Event(ev) => {
                for o in &ev.outcomes {
                    self.walk(&o.intensities, ev.t_c, weight * o.probability, depth + 1, d)?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeDistribution {
    /// Probability that each scenario ends up the sole survivor.
    pub survivor: Vec<f64>,
    /// Stalled branches and their probabilities.
    pub unresolved: Vec<(Vec<f64>, f64)>,
    /// Event counts along the shortest and longest resolved paths.
    pub max_depth: usize,
    pub min_depth: usize,
}

impl TreeDistribution {
    pub fn unresolved_probability(&self) -> f64 {
        self.unresolved.iter().map(|u| u.1).sum()
    }
}

pub fn run_cascade(exp: &Experiment, seed: u64) -> Result<CascadeResult> {
    Cascade::new(exp, EngineOptions::default()).run(seed, 0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityEstimate {
    /// Survivor counts per scenario.
    pub counts: Vec<u64>,
    pub unresolved: u64,
    pub trials: u64,
    /// Frequencies over resolved trials.
    pub frequencies: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl ProbabilityEstimate {
    pub fn resolved(&self) -> u64 {
        self.trials - self.unresolved
    }

    /// Fraction of all trials that ended in scenario `i`, with its error.
    pub fn share_of_all(&self, i: usize) -> (f64, f64) {
        let n = self.trials as f64;
        let p = self.counts[i] as f64 / n;
        (p, (p * (1.0 - p) / n).sqrt())
    }
}

impl<'a> Cascade<'a> {
    /// `trials` independent cascades; trial k uses stream k of `seed`, so
    /// the counts do not depend on scheduling.
    pub fn estimate(&self, trials: u64, seed: u64) -> Result<ProbabilityEstimate> {
        if trials == 0 {
            return Err(Error::Invalid("need at least one trial".into()));
        }
        let n = self.engine.experiment().scenarios.len();
        // Warm the memo along one path so parallel trials mostly hit it.
        self.run(seed, 0)?;
        let counts = (0..trials)
            .into_par_iter()
            .map(|k| self.run(seed, k).map(|r| r.survivor))
            .try_fold(
                || vec![0u64; n + 1],
                |mut acc, s| {
                    acc[s?.unwrap_or(n)] += 1;
                    Ok::<_, Error>(acc)
                },
            )
            .try_reduce(
                || vec![0u64; n + 1],
                |mut a, b| {
                    a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                    Ok(a)
                },
            )?;
        let unresolved = counts[n];
        let resolved = (trials - unresolved) as f64;
        let frequencies: Vec<f64> =
            counts[..n].iter().map(|&c| if resolved > 0.0 { c as f64 / resolved } else { 0.0 }).collect();
        let stderr = frequencies.iter().map(|p| if resolved > 0.0 { (p * (1.0 - p) / resolved).sqrt() } else { 0.0 }).collect();
        Ok(ProbabilityEstimate { counts: counts[..n].to_vec(), unresolved, trials, frequencies, stderr })
    }
}

pub fn estimate_probabilities(exp: &Experiment, trials: u64, seed: u64) -> Result<ProbabilityEstimate> {
    Cascade::new(exp, EngineOptions::default()).estimate(trials, seed)
}

/// Closed form of the isolated state's reduction probability for three
/// solid states with E01 ≈ 0 and E02 ≈ E12.
pub fn three_state_probability(i2: f64) -> f64 {
    2.0 * i2 / (1.0 + i2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub i2: f64,
    pub analytic: f64,
    /// Exhaustive outcome-tree value.
    pub exact: f64,
    pub mc: f64,
    pub stderr: f64,
    pub warning: Option<String>,
}

/// I0 = I1 = (1 − I2)/2 for the isolated scenario index 2.
pub fn three_state_intensities(i2: f64) -> Vec<f64> {
    vec![0.5 * (1.0 - i2), 0.5 * (1.0 - i2), i2]
}

/// Checks E01 ≪ E and E02 ≈ E12 on the summed pair energies after the
/// last schedule knot.
pub fn degeneracy_warning(exp: &Experiment, tol: f64) -> Result<Option<String>> {
    if exp.scenarios.len() != 3 {
        return Ok(Some("three-state sweep expects exactly three scenarios".into()));
    }
    let engine = Engine::new(exp, EngineOptions::default());
    let model = engine.model();
    let t = exp.breakpoints().last().copied().unwrap_or(exp.t_start).max(exp.max_split_time());
    let e = |i, j| -> Result<f64> {
        let mut s = 0.0;
        for k in 0..model.areas().len() {
            s += model.energy(Scope::Area(k), i, j, t)?;
        }
        Ok(s)
    };
    let (e01, e02, e12) = (e(0, 1)?, e(0, 2)?, e(1, 2)?);
    let scale = e02.max(e12);
    if !(scale > 0.0) {
        return Ok(Some("isolated state has no DP energy against the others".into()));
    }
    let mut w = Vec::new();
    if e01 / scale > tol {
        w.push(format!("E01/E = {:.3e} exceeds {tol}", e01 / scale));
    }
    if (e02 - e12).abs() / scale > tol {
        w.push(format!("|E02 − E12|/E = {:.3e} exceeds {tol}", (e02 - e12).abs() / scale));
    }
    Ok((!w.is_empty()).then(|| w.join("; ")))
}

pub fn sweep_three_state(base: &Experiment, grid: &[f64], trials: u64, seed: u64) -> Result<Vec<SweepRow>> {
    let warning = degeneracy_warning(base, 0.05)?;
    grid.iter()
        .map(|&i2| {
            if !(0.0..=1.0).contains(&i2) {
                return Err(Error::Invalid(format!("I2 = {i2} outside [0, 1]")));
            }
            let exp = base.with_intensities(&three_state_intensities(i2));
            let c = Cascade::new(&exp, EngineOptions::default());
            let exact = c.tree()?.survivor[2];
            let (mc, stderr) = if trials > 0 { c.estimate(trials, seed)?.share_of_all(2) } else { (f64::NAN, f64::NAN) };
            Ok(SweepRow { i2, analytic: three_state_probability(i2), exact, mc, stderr, warning: warning.clone() })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioEstimate {
    pub analytic: f64,
    pub mc: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignallingResult {
    pub aperture_in: RatioEstimate,
    pub aperture_out: RatioEstimate,
}

fn ratio(exp: &Experiment, trials: u64, seed: u64) -> Result<RatioEstimate> {
    let c = Cascade::new(exp, EngineOptions::default());
    let p = c.tree()?.survivor[2];
    let analytic = p / (1.0 - p);
    if trials == 0 {
        return Ok(RatioEstimate { analytic, mc: f64::NAN, stderr: f64::NAN });
    }
    let (q, se) = c.estimate(trials, seed)?.share_of_all(2);
    // p_H/p_V = q/(1 − q); delta method for its error.
    Ok(RatioEstimate { analytic, mc: q / (1.0 - q), stderr: se / ((1.0 - q) * (1.0 - q)) })
}

/// p_H/p_V seen by Alice. Bob's H photon feeds the isolated scenario 2
/// (½), V feeds scenarios 0 and 1 (¼ each). With the aperture in, V cannot
/// reach the second displacement, so scenario 1 follows scenario 0's
/// trajectory.
pub fn signalling_statistic(three_state: &Experiment, trials: u64, seed: u64) -> Result<SignallingResult> {
    let out = three_state.with_intensities(&three_state_intensities(0.5));
    let mut inside = out.clone();
    inside.scenarios[1].trajectory = inside.scenarios[0].trajectory.clone();
    Ok(SignallingResult { aperture_in: ratio(&inside, trials, seed)?, aperture_out: ratio(&out, trials, seed)? })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayRow {
    pub delay: f64,
    pub exact: f64,
    pub mc: f64,
    pub stderr: f64,
}

/// Experiment with every move of scenario 1 started `delay` later.
pub fn with_delay(base: &Experiment, delay: f64) -> Experiment {
    let mut e = base.clone();
    for p in e.scenarios[1].trajectory.parts.iter_mut() {
        p.displacement.delay = delay;
    }
    e
}

pub fn delayed_displacement_scan(base: &Experiment, delays: &[f64], trials: u64, seed: u64) -> Result<Vec<DelayRow>> {
    delays
        .iter()
        .map(|&dt| {
            if !(dt >= 0.0) {
                return Err(Error::Invalid(format!("delay {dt} must be ≥ 0")));
            }
            let exp = with_delay(base, dt);
            let c = Cascade::new(&exp, EngineOptions::default());
            let exact = c.tree()?.survivor[2];
            let (mc, stderr) = if trials > 0 { c.estimate(trials, seed)?.share_of_all(2) } else { (f64::NAN, f64::NAN) };
            Ok(DelayRow { delay: dt, exact, mc, stderr })
        })
        .collect()
}

/// Grid interval where p₂ drops from the enhanced value towards Born's:
/// the first pair of neighbours straddling the midpoint of the two.
pub fn locate_transition(rows: &[DelayRow], enhanced: f64, born: f64) -> Option<(f64, f64)> {
    let mid = 0.5 * (enhanced + born);
    rows.windows(2).find(|w| (w[0].exact - mid) * (w[1].exact - mid) < 0.0).map(|w| (w[0].delay, w[1].delay))
}
