//! Monte-Carlo model of backflash emission from fast-gated InGaAs avalanche
//! photodiodes, together with the analysis chain used to turn monitor-detector
//! time tags into an information-leakage figure and a leakage-aware BB84 key
//! rate.
//!
//! The crate is organised along the measurement chain:
//!
//! * [`apd`] simulates the gated detector: signal clicks, dark counts,
//!   afterpulses and the click-conditional backflash emissions.
//! * [`optics`] carries emissions and laser backreflections to the monitor
//!   detector and adds its dark counts.
//! * [`analysis`] folds monitor tags into laser-period histograms, removes the
//!   APD-off baseline and estimates the leakage probability.
//! * [`keyrate`] evaluates the leakage-aware secure key rate and distance sweeps.
//! * [`darkcurrent`] models the dark-current dependence of the backflash rate.
//! * [`pipeline`], [`config`] and [`timetag`] tie these together for the CLI.

pub mod analysis;
pub mod apd;
pub mod config;
pub mod darkcurrent;
pub mod error;
pub mod keyrate;
pub mod optics;
pub mod pipeline;
mod rng;
pub use rng::derive_seed;
pub mod timetag;

pub use error::{Error, Result};

/// Picoseconds per second.
pub const PS_PER_S: f64 = 1e12;
/// Picoseconds per nanosecond.
pub const PS_PER_NS: f64 = 1e3;

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("{value} is not a probability in [0, 1]")))
    }
}

/// Converts a run duration to whole picoseconds, rejecting non-positive or
/// non-finite values.
pub fn duration_ps(duration_s: f64) -> Result<u64> {
    if !duration_s.is_finite() || duration_s <= 0.0 {
        return Err(Error::invalid("duration", format!("{duration_s} s must be positive")));
    }
    let ps = (duration_s * PS_PER_S).round();
    if ps >= u64::MAX as f64 {
        return Err(Error::invalid("duration", format!("{duration_s} s is too long")));
    }
    Ok(ps as u64)
}
