use serde::{Deserialize, Serialize};

use super::Histogram;
use crate::apd::{ApdParams, GateConfig};
use crate::optics::{detected_fraction, MonitorParams};
use crate::{duration_ps, Error, Result};

/// A background-corrected event count and its variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Count {
    pub value: f64,
    pub variance: f64,
}

impl Count {
    /// A raw Poisson count.
    pub fn poisson(n: f64) -> Self {
        Count { value: n, variance: n.abs() }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Information-leakage estimate `P_L = N_B / (N_A η_det η_ch)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakageEstimate {
    pub n_backflash: f64,
    pub n_apd_valid: f64,
    pub monitor: MonitorParams,
    pub leakage: f64,
    pub std_error: f64,
}

impl LeakageEstimate {
    /// Whether `value` lies within `n_sigma` standard errors of the estimate.
    pub fn consistent_with(&self, value: f64, n_sigma: f64) -> bool {
        (self.leakage - value).abs() <= n_sigma * self.std_error
    }
}

/// Number of detected backflashes in a baseline-subtracted histogram.
///
/// Sums every bin (signed) and removes `residual_dark_rate_cps × duration`
/// expected monitor dark counts. When the baseline is a measured APD-off run
/// its dark counts already cancel the on-run ones and the residual rate is 0.
pub fn count_backflashes(subtracted: &Histogram, residual_dark_rate_cps: f64) -> Count {
    Count {
        value: subtracted.total() as f64 - residual_dark_rate_cps * subtracted.duration_s(),
        variance: subtracted.total_variance(),
    }
}

/// Valid APD counts: clicks in laser-synchronised gates less the expected
/// dark clicks in those gates. Afterpulses mostly land in unsynchronised gates
/// and so drop out.
pub fn count_valid_apd<I>(gate_indices: I, gate: &GateConfig, apd: &ApdParams, duration_s: f64) -> Result<Count>
where
    I: IntoIterator<Item = u64>,
{
    gate.validate()?;
    let synced_gates = gate.synchronized_gate_count(gate.gate_count(duration_ps(duration_s)?));
    let clicks = gate_indices.into_iter().filter(|&g| gate.is_synchronized(g)).count() as f64;
    Ok(Count { value: clicks - apd.dark_count_prob_per_gate * synced_gates as f64, variance: clicks })
}

pub fn estimate_leakage(n_backflash: Count, n_apd_valid: Count, monitor: &MonitorParams) -> Result<LeakageEstimate> {
    let eta = detected_fraction(monitor);
    if eta <= 0.0 {
        return Err(Error::Statistics("monitor detects nothing (η_det·η_ch = 0)".into()));
    }
    if n_apd_valid.value.is_nan() || n_apd_valid.value <= 0.0 {
        return Err(Error::Statistics(format!("no valid APD counts (N_A = {})", n_apd_valid.value)));
    }
    let denom = n_apd_valid.value * eta;
    let leakage = n_backflash.value / denom;
    let d_b = 1.0 / denom;
    let d_a = leakage / n_apd_valid.value;
    let std_error = (d_b * d_b * n_backflash.variance + d_a * d_a * n_apd_valid.variance).sqrt();
    Ok(LeakageEstimate {
        n_backflash: n_backflash.value,
        n_apd_valid: n_apd_valid.value,
        monitor: *monitor,
        leakage,
        std_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::fold_histogram;

    fn monitor(d: f64, c: f64) -> MonitorParams {
        MonitorParams { detector_efficiency: d, channel_transmission: c, dark_rate_cps: 0.0 }
    }

    #[test]
    fn backflash_count_examples() {
        let zero = fold_histogram(&[], 64_000, 250, 10.0).unwrap();
        assert_eq!(count_backflashes(&zero, 0.0).value, 0.0);

        let events: Vec<u64> = (0..5000u64).map(|i| i * 1_000_000).collect();
        let h = fold_histogram(&events, 64_000, 250, 10.0).unwrap();
        let n = count_backflashes(&h, 100.0);
        assert_eq!(n.value, 4000.0);
        assert_eq!(n.variance, 5000.0);
    }

    #[test]
    fn leakage_examples() {
        let m = monitor(0.80, 0.78);
        let est = estimate_leakage(Count::poisson(3120.0), Count::poisson(1e6), &m).unwrap();
        assert!((est.leakage - 0.005).abs() < 1e-15);

        let est = estimate_leakage(Count::poisson(0.0), Count::poisson(1e6), &m).unwrap();
        assert_eq!(est.leakage, 0.0);
        assert_eq!(est.std_error, 0.0);

        let est = estimate_leakage(Count::poisson(1e4), Count::poisson(1e4), &monitor(1.0, 1.0)).unwrap();
        assert_eq!(est.leakage, 1.0);
    }

    #[test]
    fn zero_denominator_is_a_statistics_error() {
        let m = monitor(0.8, 0.78);
        assert!(matches!(estimate_leakage(Count::poisson(1.0), Count::poisson(0.0), &m), Err(Error::Statistics(_))));
        assert!(matches!(
            estimate_leakage(Count::poisson(1.0), Count::poisson(10.0), &monitor(0.0, 0.78)),
            Err(Error::Statistics(_))
        ));
    }

    #[test]
    fn standard_error_propagation() {
        // σ² = N_B/(N_A η)² + (N_B/(N_A² η))² N_A
        let m = monitor(0.5, 0.5);
        let est = estimate_leakage(Count::poisson(400.0), Count::poisson(10_000.0), &m).unwrap();
        let expected = (400.0 / (2500.0f64 * 2500.0) + (400.0f64 / (1e8 * 0.25)).powi(2) * 1e4).sqrt();
        assert!((est.std_error - expected).abs() < 1e-15);
        assert!(est.consistent_with(0.16, 1.0));
    }

    #[test]
    fn leakage_homogeneous_and_linear() {
        let m = monitor(0.8, 0.78);
        let p = |b: f64, a: f64| estimate_leakage(Count::poisson(b), Count::poisson(a), &m).unwrap().leakage;
        for &(b, a) in &[(12.0, 5000.0), (3120.0, 1e6), (7.5, 33.0)] {
            for k in [2.0, 10.0, 0.5] {
                assert!((p(k * b, k * a) - p(b, a)).abs() < 1e-15 * p(b, a).max(1.0));
                assert!((p(k * b, a) - k * p(b, a)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn valid_counts_only_from_synchronized_gates() {
        let gate = GateConfig::default();
        let apd = ApdParams { dark_count_prob_per_gate: 1e-3, ..ApdParams::default() };
        // 1 µs run: 1000 gates, 16 synchronised.
        let gates = [0u64, 1, 63, 64, 128, 129, 640];
        let n = count_valid_apd(gates, &gate, &apd, 1e-6).unwrap();
        assert_eq!(n.variance, 4.0);
        assert!((n.value - (4.0 - 16.0 * 1e-3)).abs() < 1e-12);
    }
}
