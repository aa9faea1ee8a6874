//! Classical scenarios, experiments and local bundles.

use std::collections::HashSet;

use crate::error::Result;
use crate::mass::{restricted_l2_difference, LocalOptions, MassDistribution, Region};
use crate::units::UnitSystem;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalScenario {
    pub id: usize,
    pub intensity: f64,
    pub split_time: f64,
    pub trajectory: MassDistribution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleArea {
    pub id: String,
    pub region: Region,
}

impl BundleArea {
    pub fn everywhere() -> Self {
        BundleArea { id: "all".into(), region: Region::Everywhere }
    }
}

/// Which competition actions drive reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CompetitionMode {
    /// Per-area local actions over the experiment's bundle areas.
    #[default]
    Local,
    /// One area covering all space.
    Global,
}

/// Prescribed DP energy for one scenario pair on one area: piecewise
/// constant, `segments[k] = (from, value)`, zero before the first segment.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedEnergy {
    pub area: String,
    pub a: usize,
    pub b: usize,
    pub segments: Vec<(f64, f64)>,
}

impl TabulatedEnergy {
    pub fn constant(area: impl Into<String>, a: usize, b: usize, value: f64) -> Self {
        TabulatedEnergy { area: area.into(), a, b, segments: vec![(f64::NEG_INFINITY, value)] }
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let mut v = 0.0;
        for (from, e) in &self.segments {
            if t >= *from {
                v = *e;
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub name: String,
    pub scenarios: Vec<ClassicalScenario>,
    pub areas: Vec<BundleArea>,
    pub units: UnitSystem,
    pub t_start: f64,
    pub mode: CompetitionMode,
    /// When present, pair energies come from this table instead of the
    /// geometry; the geometry still decides bundles and decorrelation.
    pub energies: Option<Vec<TabulatedEnergy>>,
}

impl Experiment {
    pub fn intensities(&self) -> Vec<f64> {
        self.scenarios.iter().map(|s| s.intensity).collect()
    }

    pub fn with_intensities(&self, intensities: &[f64]) -> Experiment {
        let mut e = self.clone();
        for (s, i) in e.scenarios.iter_mut().zip(intensities) {
            s.intensity = *i;
        }
        e
    }

    /// Areas on which bundles compete under the current mode.
    pub fn competition_areas(&self) -> Vec<BundleArea> {
        match self.mode {
            CompetitionMode::Global => vec![BundleArea::everywhere()],
            CompetitionMode::Local => self.areas.clone(),
        }
    }

    pub fn index_of(&self, id: usize) -> Option<usize> {
        self.scenarios.iter().position(|s| s.id == id)
    }

    pub fn max_split_time(&self) -> f64 {
        self.scenarios.iter().map(|s| s.split_time).fold(self.t_start, f64::max)
    }

    /// Every time at which some scenario's displacement has a knot.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.scenarios.iter().flat_map(|s| s.trajectory.breakpoints()).collect();
        b.extend(self.scenarios.iter().map(|s| s.split_time));
        if let Some(tab) = &self.energies {
            b.extend(tab.iter().flat_map(|t| t.segments.iter().map(|s| s.0)).filter(|x| x.is_finite()));
        }
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalBundle {
    pub area: String,
    /// Scenario indices (positions in `Experiment::scenarios`).
    pub members: Vec<usize>,
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreaBundles {
    pub area: BundleArea,
    pub bundles: Vec<LocalBundle>,
}

impl AreaBundles {
    pub fn bundle_of(&self, scenario: usize) -> Option<usize> {
        self.bundles.iter().position(|b| b.members.contains(&scenario))
    }
}

/// Do scenarios `i` and `j` have the same mass distribution on `area` at `t`?
pub fn same_on_area(
    a: &MassDistribution,
    b: &MassDistribution,
    area: &Region,
    t: f64,
    match_tol: f64,
    opts: &LocalOptions,
) -> Result<bool> {
    if a.same_world(b) && a.parts.iter().zip(&b.parts).all(|(p, q)| p.displacement.at(t) == q.displacement.at(t)) {
        return Ok(true);
    }
    Ok(restricted_l2_difference(a, b, area, t, opts)? < match_tol)
}

/// Partition of the `alive` scenarios on each area, bundles ordered by
/// their smallest member.
pub fn bundles_for(
    exp: &Experiment,
    alive: &[usize],
    intensities: &[f64],
    t: f64,
    match_tol: f64,
    opts: &LocalOptions,
) -> Result<Vec<AreaBundles>> {
    let mut out = Vec::new();
    for area in exp.competition_areas() {
        let mut bundles: Vec<LocalBundle> = Vec::new();
        for &i in alive {
            let mut placed = false;
            for b in bundles.iter_mut() {
                let rep = b.members[0];
                if same_on_area(&exp.scenarios[rep].trajectory, &exp.scenarios[i].trajectory, &area.region, t, match_tol, opts)? {
                    b.members.push(i);
                    b.intensity += intensities[i];
                    placed = true;
                    break;
                }
            }
            if !placed {
                bundles.push(LocalBundle { area: area.id.clone(), members: vec![i], intensity: intensities[i] });
            }
        }
        out.push(AreaBundles { area, bundles });
    }
    Ok(out)
}

/// Bundles of all scenarios of `exp` at `t_probe`.
pub fn derive_local_bundles(exp: &Experiment, t_probe: f64, match_tol: f64) -> Result<Vec<AreaBundles>> {
    let alive: Vec<usize> = (0..exp.scenarios.len()).collect();
    bundles_for(exp, &alive, &exp.intensities(), t_probe, match_tol, &LocalOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiagnosticCode {
    TooFewScenarios,
    Normalization,
    IntensityRange,
    DuplicateId,
    OverlappingAreas,
    AreaVolume,
    DuplicateArea,
    Geometry,
    SplitTime,
    MismatchedWorld,
    EnergyReference,
    Units,
}

impl DiagnosticCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DiagnosticCode::TooFewScenarios => "too_few_scenarios",
            DiagnosticCode::Normalization => "normalization",
            DiagnosticCode::IntensityRange => "intensity_range",
            DiagnosticCode::DuplicateId => "duplicate_id",
            DiagnosticCode::OverlappingAreas => "overlapping_areas",
            DiagnosticCode::AreaVolume => "area_volume",
            DiagnosticCode::DuplicateArea => "duplicate_area",
            DiagnosticCode::Geometry => "geometry",
            DiagnosticCode::SplitTime => "split_time",
            DiagnosticCode::MismatchedWorld => "mismatched_world",
            DiagnosticCode::EnergyReference => "energy_reference",
            DiagnosticCode::Units => "units",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub code: DiagnosticCode,
    pub message: String,
    /// Index of the offending scenario, area or energy entry, when there is one.
    pub subject: Option<usize>,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}", self.code.as_str(), self.message)
    }
}

pub fn validate(exp: &Experiment) -> Vec<Diagnostic> {
    let mut d = Vec::new();
    let mut push = |code, message: String, subject| d.push(Diagnostic { code, message, subject });
    if let Err(e) = exp.units.check() {
        push(DiagnosticCode::Units, e.to_string(), None);
    }
    if exp.scenarios.len() < 2 {
        push(DiagnosticCode::TooFewScenarios, format!("needs ≥2 scenarios, found {}", exp.scenarios.len()), None);
    }
    let total: f64 = exp.scenarios.iter().map(|s| s.intensity).sum();
    if !exp.scenarios.is_empty() && (total - 1.0).abs() > 1e-12 {
        push(DiagnosticCode::Normalization, format!("intensities sum to {total}, expected 1"), None);
    }
    let mut ids = HashSet::new();
    for (k, s) in exp.scenarios.iter().enumerate() {
        if !(0.0..=1.0).contains(&s.intensity) {
            push(DiagnosticCode::IntensityRange, format!("scenario {} intensity {} outside [0, 1]", s.id, s.intensity), Some(k));
        }
        if !ids.insert(s.id) {
            push(DiagnosticCode::DuplicateId, format!("scenario id {} used twice", s.id), Some(k));
        }
        if let Err(e) = s.trajectory.check() {
            push(DiagnosticCode::Geometry, format!("scenario {}: {e}", s.id), Some(k));
        }
        if !s.split_time.is_finite() || s.split_time < exp.t_start {
            push(DiagnosticCode::SplitTime, format!("scenario {} splits before t_start", s.id), Some(k));
        }
        if k > 0 && !exp.scenarios[0].trajectory.same_world(&s.trajectory) {
            push(
                DiagnosticCode::MismatchedWorld,
                format!("scenario {} is built from different bodies than scenario {}", s.id, exp.scenarios[0].id),
                Some(k),
            );
        }
    }
    let mut area_ids = HashSet::new();
    for (k, a) in exp.areas.iter().enumerate() {
        if !(a.region.volume() > 0.0) {
            push(DiagnosticCode::AreaVolume, format!("area '{}' has no volume", a.id), Some(k));
        }
        if !area_ids.insert(a.id.clone()) {
            push(DiagnosticCode::DuplicateArea, format!("area id '{}' used twice", a.id), Some(k));
        }
        for (j, b) in exp.areas.iter().enumerate().skip(k + 1) {
            if !a.region.is_disjoint(&b.region) {
                push(DiagnosticCode::OverlappingAreas, format!("areas '{}' and '{}' overlap", a.id, b.id), Some(j));
            }
        }
    }
    if exp.mode == CompetitionMode::Local && exp.areas.is_empty() {
        push(DiagnosticCode::AreaVolume, "local mode needs at least one bundle area".into(), None);
    }
    if let Some(tab) = &exp.energies {
        for (k, e) in tab.iter().enumerate() {
            let known_area = e.area == "all" || exp.areas.iter().any(|a| a.id == e.area);
            if !known_area || exp.index_of(e.a).is_none() || exp.index_of(e.b).is_none() || e.a == e.b {
                push(
                    DiagnosticCode::EnergyReference,
                    format!("energy entry ({}, {}) on '{}' does not resolve", e.a, e.b, e.area),
                    Some(k),
                );
            }
            if e.segments.iter().any(|s| !(s.1 >= 0.0 && s.1.is_finite())) {
                push(DiagnosticCode::EnergyReference, format!("energy entry ({}, {}) has a negative value", e.a, e.b), Some(k));
            }
        }
    }
    d
}
