//! Bundled experiments, built as configs so they can be written out and
//! re-read.

use toml::Spanned;

use crate::config::{
    AreaConfig, BodyConfig, BodyShape, EnergyEntry, ModeConfig, MoveConfig, RegionConfig, RunConfig, ScenarioConfig,
    ScenarioEntry, StepConfig, SweepConfig, SweepKind, UnitsConfig, SCHEMA,
};

fn sp<T>(v: T) -> Spanned<T> {
    Spanned::new(0..0, v)
}

fn scenario(id: usize, intensity: f64, split_time: f64, moves: Vec<MoveConfig>) -> ScenarioEntry {
    ScenarioEntry { id, intensity: sp(intensity), split_time, moves }
}

fn step(part: &str, at: f64, to: [f64; 3]) -> MoveConfig {
    MoveConfig { part: sp(part.into()), step: Some(StepConfig { at, to }), knots: None, delay: 0.0 }
}

fn energy(area: &str, a: usize, b: usize, value: f64) -> EnergyEntry {
    EnergyEntry { area: sp(area.into()), pair: sp([a, b]), value: Some(value), segments: None }
}

fn base(name: &str, mode: ModeConfig) -> ScenarioConfig {
    ScenarioConfig {
        schema: sp(SCHEMA.into()),
        name: name.into(),
        units: UnitsConfig::default(),
        run: RunConfig { mode, ..Default::default() },
        sweep: None,
        bodies: Vec::new(),
        areas: Vec::new(),
        scenarios: Vec::new(),
        energies: Vec::new(),
    }
}

/// A Gaussian ball split into two places at `t_s` (whole-space competition).
pub fn two_state(i1: f64, t_s: f64) -> ScenarioConfig {
    let mut c = base("two-state", ModeConfig::Global);
    c.bodies.push(BodyConfig { part: "ball".into(), shape: BodyShape::Gaussian { center: [0.0; 3], sigma: 0.5, mass: 1.0 } });
    c.scenarios.push(scenario(1, i1, t_s, vec![]));
    c.scenarios.push(scenario(2, 1.0 - i1, t_s, vec![step("ball", t_s, [5.0, 0.0, 0.0])]));
    c
}

/// Two-state split with a prescribed constant DP energy.
pub fn two_state_tabulated(i1: f64, e: f64, t_s: f64) -> ScenarioConfig {
    let mut c = two_state(i1, t_s);
    c.name = "two-state-constant-energy".into();
    c.energies.push(energy("all", 1, 2, e));
    c
}

/// `n` pointer detectors 10 length units apart; scenario k displaces
/// detector k by one unit (ten nucleus-widths) at t = 0. One bundle area
/// per detector.
pub fn detectors(n: usize, intensities: &[f64]) -> ScenarioConfig {
    let name = if n == 3 { "three-detector".to_string() } else { format!("film-{n}") };
    let mut c = base(&name, ModeConfig::Local);
    c.run.trials = 100_000;
    for k in 1..=n {
        let x = 10.0 * (k - 1) as f64;
        let part = format!("d{k}");
        c.bodies.push(BodyConfig { part: part.clone(), shape: BodyShape::Gaussian { center: [x, 0.0, 0.0], sigma: 0.1, mass: 1.0 } });
        c.areas.push(AreaConfig { id: format!("D{k}"), region: RegionConfig::Ball { center: [x, 0.0, 0.0], radius: 3.0 } });
        c.scenarios.push(scenario(k, intensities[k - 1], 0.0, vec![step(&part, 0.0, [1.0, 0.0, 0.0])]));
    }
    c
}

fn solid_sites() -> Vec<[f64; 3]> {
    let mut s = Vec::new();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                s.push([0.4 * i as f64, 0.4 * j as f64, 0.4 * k as f64]);
            }
        }
    }
    s
}

/// Solid of Gaussian nuclei (σ_n = 0.05) in three states: at rest, shifted
/// by Δs01 = 0.5 (beyond 6σ_n) and by Δs02 = 4. Energies follow the
/// E01 = 0, E02 = E12 = 1 pattern exactly.
pub fn three_state(i2: f64) -> ScenarioConfig {
    let mut c = three_state_geometry(i2);
    c.name = "three-state".into();
    c.energies = vec![energy("solid", 0, 1, 0.0), energy("solid", 0, 2, 1.0), energy("solid", 1, 2, 1.0)];
    c
}

/// The same solid with DP energies from the nuclei themselves.
pub fn three_state_geometry(i2: f64) -> ScenarioConfig {
    let mut c = base("three-state-geometry", ModeConfig::Local);
    c.run.trials = 100_000;
    c.bodies.push(BodyConfig {
        part: "solid".into(),
        shape: BodyShape::Lattice { sites: solid_sites(), nucleus_mass: 0.125, sigma_n: 0.05 },
    });
    c.areas.push(AreaConfig { id: "solid".into(), region: RegionConfig::Ball { center: [0.2, 0.2, 0.2], radius: 20.0 } });
    let rest = 0.5 * (1.0 - i2);
    c.scenarios.push(scenario(0, rest, 0.0, vec![]));
    c.scenarios.push(scenario(1, rest, 0.0, vec![step("solid", 0.0, [0.5, 0.0, 0.0])]));
    c.scenarios.push(scenario(2, i2, 0.0, vec![step("solid", 0.0, [0.0, 4.0, 0.0])]));
    c.sweep = Some(SweepConfig { kind: SweepKind::ThreeState, values: vec![0.1, 0.25, 0.5] });
    c
}

/// Bob's apparatus of the signalling experiment: the three-state solid
/// fed by one photon of a Bell pair.
pub fn bell() -> ScenarioConfig {
    let mut c = three_state(0.5);
    c.name = "bell".into();
    c.sweep = Some(SweepConfig { kind: SweepKind::Signalling, values: vec![] });
    c
}

/// Delay grid straddling ħ/E = 1 without touching it.
pub fn delay_grid() -> Vec<f64> {
    (0..20).map(|k| 0.05 + 0.1 * k as f64).collect()
}

/// Three-state solid whose 0–1 displacement starts after a delay.
pub fn delayed() -> ScenarioConfig {
    let mut c = three_state(0.25);
    c.name = "delayed-displacement".into();
    c.sweep = Some(SweepConfig { kind: SweepKind::Delay, values: delay_grid() });
    c
}

pub fn all() -> Vec<ScenarioConfig> {
    vec![
        two_state(0.5, 0.0),
        two_state_tabulated(0.5, 2.0, 0.0),
        detectors(3, &[0.2, 0.3, 0.5]),
        detectors(4, &[0.25; 4]),
        three_state(0.25),
        three_state_geometry(0.25),
        bell(),
        delayed(),
    ]
}
