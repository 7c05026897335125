//! Backflash rate versus APD dark current, measured with the laser off.
//!
//! Below the onset current the monitor sees only its own floor. Above the
//! linear threshold the rate follows `floor + slope · I`. In between, a cubic
//! Hermite segment joins the two with matching values and slopes, which stays
//! monotone for any `0 ≤ onset < threshold`.

use std::io::Write;

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::optics::{detected_fraction, MonitorParams};
use crate::rng::{self, STREAM_DARK_SWEEP};
use crate::{duration_ps, Error, Result};

pub const SWEEP_CSV_HEADER: &str = "dark_current_nA,snspd_rate_cps";

/// Synthetic defaults: the onset and threshold currents follow the measured
/// curve shape, the slope and floor are illustrative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DarkCurrentCurve {
    pub onset_current_na: f64,
    pub linear_threshold_na: f64,
    /// Emitted backflash rate per nA in the linear regime (before monitor losses).
    pub slope_cps_per_na: f64,
    pub monitor_floor_cps: f64,
}

impl Default for DarkCurrentCurve {
    fn default() -> Self {
        DarkCurrentCurve {
            onset_current_na: 10.0,
            linear_threshold_na: 100.0,
            slope_cps_per_na: 2.0,
            monitor_floor_cps: 100.0,
        }
    }
}

impl DarkCurrentCurve {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = (self.onset_current_na, self.linear_threshold_na);
        if !(a.is_finite() && b.is_finite() && a >= 0.0) {
            return Err(Error::invalid("darksweep.curve.onset_current_na", "must be finite and non-negative"));
        }
        if !(a < b || (a == 0.0 && b == 0.0)) {
            return Err(Error::invalid(
                "darksweep.curve.linear_threshold_na",
                format!("threshold {b} nA must exceed onset {a} nA"),
            ));
        }
        if !(self.slope_cps_per_na.is_finite() && self.slope_cps_per_na >= 0.0) {
            return Err(Error::invalid("darksweep.curve.slope_cps_per_na", "must be non-negative"));
        }
        if !(self.monitor_floor_cps.is_finite() && self.monitor_floor_cps >= 0.0) {
            return Err(Error::invalid("darksweep.curve.monitor_floor_cps", "must be non-negative"));
        }
        Ok(())
    }
}

/// Model count rate at dark current `current_na`.
pub fn backflash_rate_model(current_na: f64, curve: &DarkCurrentCurve) -> f64 {
    let floor = curve.monitor_floor_cps;
    let slope = curve.slope_cps_per_na;
    let (x0, x1) = (curve.onset_current_na, curve.linear_threshold_na);
    if current_na >= x1 {
        return floor + slope * current_na;
    }
    if current_na <= x0 {
        return floor;
    }
    let span = x1 - x0;
    let t = (current_na - x0) / span;
    let t2 = t * t;
    let t3 = t2 * t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    floor + h01 * slope * x1 + h11 * span * slope
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub current_na: f64,
    pub rate_cps: f64,
}

/// Simulated monitor rates for a dark-current sweep.
///
/// The excess over the floor is attenuated by `η_det·η_ch`; the floor is the
/// monitor's own and is not.
pub fn simulate_dark_sweep(
    currents: &[f64],
    curve: &DarkCurrentCurve,
    duration_s: f64,
    monitor: &MonitorParams,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    curve.validate()?;
    monitor.validate()?;
    duration_ps(duration_s)?;
    if currents.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(Error::invalid("currents", "must be finite and non-negative"));
    }
    if !currents.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::invalid("currents", "must be strictly ascending"));
    }
    let eta = detected_fraction(monitor);
    let mut rng = rng::stream(seed, STREAM_DARK_SWEEP);
    Ok(currents
        .iter()
        .map(|&current_na| {
            let model = backflash_rate_model(current_na, curve);
            let floor = curve.monitor_floor_cps;
            let mean = (floor + (model - floor) * eta) * duration_s;
            let counts =
                if mean > 0.0 { Poisson::new(mean).expect("finite positive mean").sample(&mut rng) } else { 0.0 };
            SweepPoint { current_na, rate_cps: counts / duration_s }
        })
        .collect())
}

/// `n` points from `start` to `stop` inclusive, evenly spaced in log10.
pub fn log_spaced(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![start],
        _ => {
            let (a, b) = (start.log10(), stop.log10());
            (0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

/// Ordinary least squares over the points with `x ≥ x_min`.
pub fn linear_fit(points: &[(f64, f64)], x_min: f64) -> Result<FitResult> {
    let used: Vec<(f64, f64)> = points.iter().copied().filter(|&(x, _)| x >= x_min).collect();
    let n = used.len();
    if n < 2 {
        return Err(Error::Statistics(format!("linear fit needs 2 points with x ≥ {x_min}, got {n}")));
    }
    let nf = n as f64;
    let mx = used.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = used.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in &used {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::Statistics("linear fit over a single x value".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = used.iter().map(|&(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    Ok(FitResult { slope, intercept, r_squared, points_used: n })
}

pub fn write_sweep_csv<W: Write>(mut w: W, points: &[SweepPoint]) -> std::io::Result<()> {
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    for p in points {
        writeln!(w, "{},{}", p.current_na, p.rate_cps)?;
    }
    Ok(())
}
