//! Backflash-aware secure key rate for single-photon BB84.
//!
//! The leakage-aware bound scales the privacy term by `(1 − P_L)`:
//!
//! ```text
//! R = q · P_click · [(1 − P_L)(1 − h(e)) − f · h(e)]
//! ```
//!
//! Because the leakage probability is conditioned on a click, the reduction is
//! proportional to the click rate at every distance. The pessimistic variant
//! treats `P_L` as an absolute, distance-independent probability instead and
//! subtracts `q · P_L (1 − h(e))`, which dominates once `P_click` drops towards
//! `P_L`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{check_probability, Error, Result};

pub const CURVE_CSV_HEADER: &str = "distance_km,leakage,click_prob,qber,rate_per_gate,rate_per_second";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeyRateParams {
    /// Basis choice probability `q`.
    pub basis_prob: f64,
    /// Error-correction inefficiency `f ≥ 1`.
    pub ec_efficiency: f64,
    pub mean_photons: f64,
    pub bob_efficiency: f64,
    pub dark_count_prob_per_gate: f64,
    pub fiber_loss_db_per_km: f64,
    /// Intrinsic optical error probability `e_det`.
    pub detector_error: f64,
    pub clock_rate_hz: f64,
    /// Extra fixed loss in front of Bob, e.g. an isolator.
    pub insertion_loss_db: f64,
}

impl Default for KeyRateParams {
    fn default() -> Self {
        KeyRateParams {
            basis_prob: 0.5,
            ec_efficiency: 1.16,
            mean_photons: 0.1,
            bob_efficiency: 0.17,
            dark_count_prob_per_gate: 1.9e-6,
            fiber_loss_db_per_km: 0.2,
            detector_error: 0.01,
            clock_rate_hz: 1e9,
            insertion_loss_db: 0.0,
        }
    }
}

impl KeyRateParams {
    pub fn validate(&self) -> Result<()> {
        check_probability("keyrate.basis_prob", self.basis_prob)?;
        check_probability("keyrate.bob_efficiency", self.bob_efficiency)?;
        check_probability("keyrate.dark_count_prob_per_gate", self.dark_count_prob_per_gate)?;
        check_probability("keyrate.detector_error", self.detector_error)?;
        if !(self.ec_efficiency >= 1.0 && self.ec_efficiency.is_finite()) {
            return Err(Error::invalid("keyrate.ec_efficiency", format!("{} < 1", self.ec_efficiency)));
        }
        let non_negative = [
            ("keyrate.mean_photons", self.mean_photons),
            ("keyrate.fiber_loss_db_per_km", self.fiber_loss_db_per_km),
            ("keyrate.clock_rate_hz", self.clock_rate_hz),
            ("keyrate.insertion_loss_db", self.insertion_loss_db),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, format!("{v} must be non-negative")));
            }
        }
        Ok(())
    }
}

/// Which bound to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    /// Leakage scaled by the click probability.
    Standard,
    /// Constant conditional leakage, not scaled by the click probability.
    Pessimistic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRatePoint {
    pub distance_km: f64,
    pub leakage: f64,
    pub click_prob: f64,
    pub qber: f64,
    /// Secure bits per gate, clamped at zero.
    pub rate: f64,
    pub rate_per_second: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyRateCurve {
    pub leakage: f64,
    pub bound: Bound,
    pub points: Vec<KeyRatePoint>,
}

/// Binary Shannon entropy in bits, with `h(0) = h(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    check_probability("x", x)?;
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

fn entropy(e: f64) -> f64 {
    binary_entropy(e.clamp(0.0, 1.0)).unwrap_or(0.0)
}

pub fn secure_key_rate(q: f64, click_prob: f64, info_leakage: f64, qber: f64, ec_efficiency: f64) -> f64 {
    let h = entropy(qber);
    let raw = q * click_prob * ((1.0 - info_leakage) * (1.0 - h) - ec_efficiency * h);
    raw.max(0.0)
}

pub fn pessimistic_key_rate(q: f64, click_prob: f64, info_leakage: f64, qber: f64, ec_efficiency: f64) -> f64 {
    let h = entropy(qber);
    let raw = q * (click_prob * (1.0 - h) - info_leakage * (1.0 - h) - click_prob * ec_efficiency * h);
    raw.max(0.0)
}

/// Click probability and QBER at Bob after `distance_km` of fibre.
pub fn channel_model(params: &KeyRateParams, distance_km: f64) -> (f64, f64) {
    let loss_db = params.fiber_loss_db_per_km * distance_km + params.insertion_loss_db;
    let transmission = params.bob_efficiency * 10f64.powf(-loss_db / 10.0);
    let p_signal = -(-params.mean_photons * transmission).exp_m1();
    let p_dark = params.dark_count_prob_per_gate;
    let click_prob = 1.0 - (1.0 - p_signal) * (1.0 - p_dark);
    let qber = if click_prob > 0.0 { (params.detector_error * p_signal + 0.5 * p_dark) / click_prob } else { 0.0 };
    (click_prob, qber)
}

/// One curve per leakage value over ascending `distances`.
pub fn key_rate_vs_distance(
    params: &KeyRateParams,
    distances: &[f64],
    leakages: &[f64],
    bound: Bound,
) -> Result<Vec<KeyRateCurve>> {
    params.validate()?;
    if distances.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::invalid("distances", "must be finite and non-negative"));
    }
    if !distances.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::invalid("distances", "must be strictly ascending"));
    }
    for &l in leakages {
        check_probability("leakages", l)?;
    }
    let rate_fn = match bound {
        Bound::Standard => secure_key_rate,
        Bound::Pessimistic => pessimistic_key_rate,
    };
    let channel: Vec<(f64, f64)> = distances.iter().map(|&d| channel_model(params, d)).collect();
    Ok(leakages
        .iter()
        .map(|&leakage| KeyRateCurve {
            leakage,
            bound,
            points: distances
                .iter()
                .zip(&channel)
                .map(|(&distance_km, &(click_prob, qber))| {
                    let rate = rate_fn(params.basis_prob, click_prob, leakage, qber, params.ec_efficiency);
                    KeyRatePoint {
                        distance_km,
                        leakage,
                        click_prob,
                        qber,
                        rate,
                        rate_per_second: rate * params.clock_rate_hz,
                    }
                })
                .collect(),
        })
        .collect())
}

pub fn write_curves_csv<W: Write>(mut w: W, curves: &[KeyRateCurve]) -> std::io::Result<()> {
    writeln!(w, "{CURVE_CSV_HEADER}")?;
    for curve in curves {
        for p in &curve.points {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                p.distance_km, p.leakage, p.click_prob, p.qber, p.rate, p.rate_per_second
            )?;
        }
    }
    Ok(())
}
