//! Newtonian-limit simulator for gravity-triggered reduction of superposed
//! mass configurations.

pub mod actions;
pub mod cascade;
pub mod config;
pub mod engine;
pub mod error;
pub mod mass;
pub mod presets;
pub mod quadrature;
pub mod report;
pub mod scenario;
pub mod units;
pub mod wavepacket;

pub use error::{Error, Result};
