//! Phase-field dynamics under a temperature-dependent hysteresis constraint.

pub mod checks;
pub mod cli;
pub mod config;
pub mod curves;
pub mod diagnostics;
pub mod dynamics;
pub mod exprlang;
pub mod hysteresis;
pub mod io;
pub mod periodic;
pub mod spatial;
