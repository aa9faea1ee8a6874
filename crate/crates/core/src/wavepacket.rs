//! Intensity drop of a detuned path from the spectral broadening of its
//! wavepacket, with a reflected wave at the spacetime border.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadOptions};
use crate::units::UnitSystem;

/// σ_ω = √(π dS/ħ)/T.
pub fn spectral_broadening(ds: f64, duration: f64, units: &UnitSystem) -> Result<f64> {
    if !(ds >= 0.0) || !ds.is_finite() {
        return Err(Error::Domain(format!("detuning action must be ≥ 0, got {ds}")));
    }
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::Domain(format!("duration must be > 0, got {duration}")));
    }
    Ok((PI * ds / units.hbar).sqrt() / duration)
}

/// e^{−σ²(t − t_ref)²}.
pub fn intensity_profile(sigma: f64, t: f64, t_ref: f64) -> f64 {
    let x = sigma * (t - t_ref);
    (-x * x).exp()
}

/// The same profile as |∫ g(ω) e^{iωτ} dω|² with a normalized Gaussian
/// spectrum g of width σ, by quadrature over ±12σ.
pub fn intensity_profile_quadrature(sigma: f64, t: f64, t_ref: f64) -> Result<f64> {
    if !(sigma >= 0.0) {
        return Err(Error::Domain(format!("spectral width must be ≥ 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(1.0);
    }
    let tau = t - t_ref;
    let g = |w: f64| (-0.5 * w * w / (sigma * sigma)).exp() / ((2.0 * PI).sqrt() * sigma);
    let opts = QuadOptions { abs_tol: 1e-13, rel_tol: 1e-11, max_work: 20_000 };
    let lim = 12.0 * sigma;
    let re = integrate(|w| g(w) * (w * tau).cos(), -lim, lim, &[0.0], &opts)?.value;
    let im = integrate(|w| g(w) * (w * tau).sin(), -lim, lim, &[0.0], &opts)?.value;
    Ok(re * re + im * im)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntensityDrop {
    /// Time average of forward and reflected profiles over [t_s, t̄].
    pub numeric: f64,
    /// 1 − (π/3) dS/ħ.
    pub linear: f64,
    pub warning: Option<String>,
}

/// Values of dS/ħ above this leave the linearized regime.
pub const LINEAR_REGIME: f64 = 0.3;

pub fn path_intensity_drop(ds: f64, duration: f64, units: &UnitSystem) -> Result<IntensityDrop> {
    let sigma = spectral_broadening(ds, duration, units)?;
    let opts = QuadOptions { abs_tol: 1e-15, rel_tol: 1e-13, max_work: 2000 };
    let forward = integrate(|t| intensity_profile(sigma, t, 0.0), 0.0, duration, &[], &opts)?.value;
    let reflected = integrate(|t| intensity_profile(sigma, t, duration), 0.0, duration, &[], &opts)?.value;
    let s = ds / units.hbar;
    let warning = (s > LINEAR_REGIME)
        .then(|| format!("dS/ħ = {s} is outside the linearized regime (≤ {LINEAR_REGIME})"));
    Ok(IntensityDrop { numeric: (forward + reflected) / (2.0 * duration), linear: 1.0 - PI / 3.0 * s, warning })
}
