//! TOML experiment files.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::error::{Error, Result};
use crate::mass::{Displacement, MassBody, MassDistribution, Region, RigidPart, Vec3};
use crate::scenario::{validate, BundleArea, ClassicalScenario, CompetitionMode, Experiment, TabulatedEnergy};
use crate::units::{UnitMode, UnitSystem, G_SI, HBAR_SI};

pub const SCHEMA: &str = "dstc/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: Spanned<String>,
    pub name: String,
    #[serde(default)]
    pub units: UnitsConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    pub bodies: Vec<BodyConfig>,
    #[serde(default)]
    pub areas: Vec<AreaConfig>,
    pub scenarios: Vec<ScenarioEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub energies: Vec<EnergyEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct UnitsConfig {
    #[serde(default)]
    pub mode: UnitMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hbar: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModeConfig {
    #[default]
    Local,
    Global,
}

impl From<ModeConfig> for CompetitionMode {
    fn from(m: ModeConfig) -> Self {
        match m {
            ModeConfig::Local => CompetitionMode::Local,
            ModeConfig::Global => CompetitionMode::Global,
        }
    }
}

fn default_trials() -> u64 {
    10_000
}
fn default_seed() -> u64 {
    1
}
fn default_match_tol() -> f64 {
    1e-9
}
fn default_quad_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub t_start: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub mode: ModeConfig,
    #[serde(default = "default_match_tol")]
    pub match_tol: f64,
    #[serde(default = "default_quad_tol")]
    pub quad_rel_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            t_start: 0.0,
            t_max: None,
            trials: default_trials(),
            seed: default_seed(),
            mode: ModeConfig::Local,
            match_tol: default_match_tol(),
            quad_rel_tol: default_quad_tol(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    ThreeState,
    Delay,
    Signalling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub kind: SweepKind,
    /// I₂ values (three-state) or delays (delay); unused for signalling.
    #[serde(default)]
    pub values: Vec<f64>,
}

fn default_part() -> String {
    "body".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyConfig {
    #[serde(default = "default_part")]
    pub part: String,
    #[serde(flatten)]
    pub shape: BodyShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BodyShape {
    Gaussian { center: Vec3, sigma: f64, mass: f64 },
    Sphere { center: Vec3, radius: f64, mass: f64 },
    Lattice { sites: Vec<Vec3>, nucleus_mass: f64, sigma_n: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaConfig {
    pub id: String,
    #[serde(flatten)]
    pub region: RegionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum RegionConfig {
    Ball { center: Vec3, radius: f64 },
    Box { min: Vec3, max: Vec3 },
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEntry {
    pub id: usize,
    pub intensity: Spanned<f64>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub split_time: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub moves: Vec<MoveConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepConfig {
    pub at: f64,
    pub to: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoveConfig {
    pub part: Spanned<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<StepConfig>,
    /// `[t, x, y, z]` rows of a piecewise-linear schedule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knots: Option<Vec<[f64; 4]>>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub delay: f64,
}

fn default_area() -> Spanned<String> {
    Spanned::new(0..0, "all".into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyEntry {
    #[serde(default = "default_area")]
    pub area: Spanned<String>,
    pub pair: Spanned<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    /// `[from, value]` rows of a piecewise-constant energy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<Vec<[f64; 2]>>,
}

fn line_of(src: Option<&str>, span: std::ops::Range<usize>) -> String {
    match src {
        Some(s) if span.start < s.len() && span.end > 0 => {
            format!("line {}: ", s[..span.start].matches('\n').count() + 1)
        }
        _ => String::new(),
    }
}

impl ScenarioConfig {
    pub fn parse(src: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(src).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        if cfg.schema.get_ref() != SCHEMA {
            return Err(Error::Config(format!(
                "{}unsupported schema '{}', expected '{SCHEMA}'",
                line_of(Some(src), cfg.schema.span()),
                cfg.schema.get_ref()
            )));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Builds and validates the experiment. `src` is the text the config
    /// was parsed from, used to anchor errors to lines.
    pub fn build(&self, src: Option<&str>) -> Result<Experiment> {
        let units = match self.units.mode {
            UnitMode::Dimensionless => UnitSystem::new(self.units.g.unwrap_or(1.0), self.units.hbar.unwrap_or(1.0), UnitMode::Dimensionless),
            UnitMode::Si => UnitSystem::new(self.units.g.unwrap_or(G_SI), self.units.hbar.unwrap_or(HBAR_SI), UnitMode::Si),
        }
        .map_err(|e| Error::Config(format!("[units] {e}")))?;

        let mut order: Vec<String> = Vec::new();
        let mut groups: HashMap<String, Vec<MassBody>> = HashMap::new();
        for b in &self.bodies {
            let body = match &b.shape {
                BodyShape::Gaussian { center, sigma, mass } => MassBody::GaussianBall { center: *center, sigma: *sigma, mass: *mass },
                BodyShape::Sphere { center, radius, mass } => MassBody::HomogeneousSphere { center: *center, radius: *radius, mass: *mass },
                BodyShape::Lattice { sites, nucleus_mass, sigma_n } => MassBody::GaussianNucleusLattice {
                    sites: sites.clone(),
                    nucleus_mass: *nucleus_mass,
                    sigma_n: *sigma_n,
                },
            };
            if !groups.contains_key(&b.part) {
                order.push(b.part.clone());
            }
            groups.entry(b.part.clone()).or_default().push(body);
        }
        let parts: Vec<(String, Arc<Vec<MassBody>>)> =
            order.iter().map(|n| (n.clone(), Arc::new(groups.remove(n).expect("grouped")))).collect();

        let mut scenarios = Vec::new();
        for s in &self.scenarios {
            let mut disp: Vec<Displacement> = vec![Displacement::none(); parts.len()];
            for m in &s.moves {
                let k = parts.iter().position(|p| &p.0 == m.part.get_ref()).ok_or_else(|| {
                    Error::Config(format!("{}scenario {} moves unknown part '{}'", line_of(src, m.part.span()), s.id, m.part.get_ref()))
                })?;
                let d = match (&m.step, &m.knots) {
                    (Some(st), None) => Displacement::step(st.at, st.to),
                    (None, Some(kn)) => Displacement { knots: kn.iter().map(|r| (r[0], [r[1], r[2], r[3]])).collect(), delay: 0.0 },
                    _ => {
                        return Err(Error::Config(format!(
                            "{}move of part '{}' needs exactly one of `step` or `knots`",
                            line_of(src, m.part.span()),
                            m.part.get_ref()
                        )))
                    }
                };
                disp[k] = d.with_delay(m.delay);
            }
            let rigid = parts
                .iter()
                .zip(disp)
                .map(|((name, bodies), d)| RigidPart::new(name.clone(), bodies.clone(), d))
                .collect();
            scenarios.push(ClassicalScenario {
                id: s.id,
                intensity: *s.intensity.get_ref(),
                split_time: s.split_time,
                trajectory: MassDistribution::new(rigid),
            });
        }

        let areas = self
            .areas
            .iter()
            .map(|a| BundleArea {
                id: a.id.clone(),
                region: match &a.region {
                    RegionConfig::Ball { center, radius } => Region::Ball { center: *center, radius: *radius },
                    RegionConfig::Box { min, max } => Region::Box { min: *min, max: *max },
                },
            })
            .collect();

        let energies = if self.energies.is_empty() {
            None
        } else {
            let mut tab = Vec::new();
            for e in &self.energies {
                let segments = match (e.value, &e.segments) {
                    (Some(v), None) => vec![(f64::NEG_INFINITY, v)],
                    (None, Some(rows)) => rows.iter().map(|r| (r[0], r[1])).collect(),
                    _ => {
                        return Err(Error::Config(format!(
                            "{}energy entry needs exactly one of `value` or `segments`",
                            line_of(src, e.pair.span())
                        )))
                    }
                };
                let [a, b] = *e.pair.get_ref();
                tab.push(TabulatedEnergy { area: e.area.get_ref().clone(), a, b, segments });
            }
            Some(tab)
        };

        let exp = Experiment {
            name: self.name.clone(),
            scenarios,
            areas,
            units,
            t_start: self.run.t_start,
            mode: self.run.mode.into(),
            energies,
        };
        let diags = validate(&exp);
        if !diags.is_empty() {
            let msgs: Vec<String> = diags
                .iter()
                .map(|d| {
                    let anchor = match (d.code.as_str(), d.subject) {
                        ("overlapping_areas" | "area_volume" | "duplicate_area", _) => String::new(),
                        ("energy_reference", Some(k)) if k < self.energies.len() => line_of(src, self.energies[k].pair.span()),
                        (_, Some(k)) if k < self.scenarios.len() => line_of(src, self.scenarios[k].intensity.span()),
                        ("normalization", _) if !self.scenarios.is_empty() => line_of(src, self.scenarios[0].intensity.span()),
                        _ => String::new(),
                    };
                    format!("{anchor}{d}")
                })
                .collect();
            return Err(Error::Config(msgs.join("\n")));
        }
        Ok(exp)
    }

    pub fn engine_options(&self) -> crate::engine::EngineOptions {
        let mut o = crate::engine::EngineOptions { t_max: self.run.t_max, match_tol: self.run.match_tol, ..Default::default() };
        o.local.quad.rel_tol = self.run.quad_rel_tol;
        o
    }
}

/// Reads, parses and builds a config file.
pub fn load(path: &Path) -> Result<(ScenarioConfig, Experiment)> {
    let src = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let cfg = ScenarioConfig::parse(&src).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })?;
    let exp = cfg.build(Some(&src)).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })?;
    Ok((cfg, exp))
}
