use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UnitMode {
    Si,
    #[default]
    Dimensionless,
}

/// Gravitational constant and quantum of action used throughout a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitSystem {
    pub g: f64,
    pub hbar: f64,
    pub mode: UnitMode,
}

pub const G_SI: f64 = 6.674_30e-11;
pub const HBAR_SI: f64 = 1.054_571_817e-34;

impl UnitSystem {
    pub fn dimensionless() -> Self {
        UnitSystem { g: 1.0, hbar: 1.0, mode: UnitMode::Dimensionless }
    }

    pub fn si() -> Self {
        UnitSystem { g: G_SI, hbar: HBAR_SI, mode: UnitMode::Si }
    }

    pub fn new(g: f64, hbar: f64, mode: UnitMode) -> Result<Self> {
        let u = UnitSystem { g, hbar, mode };
        u.check()?;
        Ok(u)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.g > 0.0 && self.g.is_finite()) {
            return Err(Error::Domain(format!("G must be positive, got {}", self.g)));
        }
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return Err(Error::Domain(format!("hbar must be positive, got {}", self.hbar)));
        }
        Ok(())
    }
}

impl Default for UnitSystem {
    fn default() -> Self {
        Self::dimensionless()
    }
}
