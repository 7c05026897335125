//! Optical path from the APD to the monitor detector.
//!
//! Three independent processes reach the monitor: backflash photons (only while
//! the APD is biased), passive laser backreflections at fixed delays, and the
//! monitor's own dark counts.

use rand::Rng;
use rand_distr::{Distribution, Exp, Geometric, Normal};
use serde::{Deserialize, Serialize};

use crate::apd::GateConfig;
use crate::rng::{self, STREAM_MONITOR_BACKFLASH, STREAM_MONITOR_DARK, STREAM_REFLECTION_BASE};
use crate::{check_probability, duration_ps, Error, Result, PS_PER_NS, PS_PER_S};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReflectionPoint {
    /// Round-trip delay referenced to laser emission.
    pub delay_ns: f64,
    /// Probability per laser pulse that a reflected photon is registered by the monitor.
    pub effective_return_prob: f64,
    /// Gaussian timing spread of the reflected peak.
    pub width_ns: f64,
}

impl Default for ReflectionPoint {
    fn default() -> Self {
        Self { delay_ns: 0.0, effective_return_prob: 0.0, width_ns: 0.2 }
    }
}

impl ReflectionPoint {
    /// Connector and APD-surface reflections at 17 ns and 49 ns, each scaled so
    /// that the tallest bin of a 10 s, 250 ps-binned APD-off histogram sits near 40 counts.
    pub fn standard_pair() -> Vec<ReflectionPoint> {
        [17.0, 49.0]
            .into_iter()
            .map(|delay_ns| ReflectionPoint { delay_ns, effective_return_prob: 6.5e-7, width_ns: 0.2 })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delay_ns.is_finite() && self.delay_ns >= 0.0) {
            return Err(Error::invalid("reflections.delay_ns", "must be non-negative"));
        }
        check_probability("reflections.effective_return_prob", self.effective_return_prob)?;
        if !(self.width_ns.is_finite() && self.width_ns >= 0.0) {
            return Err(Error::invalid("reflections.width_ns", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorParams {
    pub detector_efficiency: f64,
    pub channel_transmission: f64,
    pub dark_rate_cps: f64,
}

impl Default for MonitorParams {
    fn default() -> Self {
        Self { detector_efficiency: 0.80, channel_transmission: 0.78, dark_rate_cps: 100.0 }
    }
}

impl MonitorParams {
    pub fn validate(&self) -> Result<()> {
        check_probability("monitor.detector_efficiency", self.detector_efficiency)?;
        check_probability("monitor.channel_transmission", self.channel_transmission)?;
        if !(self.dark_rate_cps.is_finite() && self.dark_rate_cps >= 0.0) {
            return Err(Error::invalid("monitor.dark_rate_cps", "must be non-negative"));
        }
        Ok(())
    }
}

/// Fraction of emitted backflash photons that the monitor registers.
pub fn detected_fraction(monitor: &MonitorParams) -> f64 {
    monitor.detector_efficiency * monitor.channel_transmission
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MonitorOrigin {
    Backflash,
    Backreflection,
    Dark,
}

impl MonitorOrigin {
    pub fn as_str(self) -> &'static str {
        match self {
            MonitorOrigin::Backflash => "backflash",
            MonitorOrigin::Backreflection => "backreflection",
            MonitorOrigin::Dark => "dark",
        }
    }
}

/// A monitor detection. `origin` is simulation ground truth for tests and
/// CSV dumps only; the analysis path works on bare timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonitorEvent {
    pub timestamp_ps: u64,
    pub origin: MonitorOrigin,
}

/// Laser pulses at `first_ps + k * period_ps` for `k < count`.
///
/// Held implicitly: a 10 s run at 15.625 MHz has 1.6e8 pulses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PulseTrain {
    pub first_ps: u64,
    pub period_ps: u64,
    pub count: u64,
}

impl PulseTrain {
    /// The pulses that illuminate the synchronised gates of a run.
    pub fn for_gates(gate: &GateConfig, duration_ps: u64) -> Self {
        PulseTrain {
            first_ps: 0,
            period_ps: gate.laser_period_ps(),
            count: gate.synchronized_gate_count(gate.gate_count(duration_ps)),
        }
    }

    pub fn time_of(&self, k: u64) -> u64 {
        self.first_ps + k * self.period_ps
    }
}

#[allow(clippy::too_many_arguments)]
pub fn propagate(
    backflash_emissions: &[u64],
    pulses: &PulseTrain,
    reflections: &[ReflectionPoint],
    monitor: &MonitorParams,
    apd_active: bool,
    duration_s: f64,
    seed: u64,
) -> Result<Vec<MonitorEvent>> {
    monitor.validate()?;
    for r in reflections {
        r.validate()?;
    }
    let duration_ps = duration_ps(duration_s)?;
    if !backflash_emissions.windows(2).all(|w| w[0] <= w[1]) {
        return Err(Error::Unsorted("backflash_emissions"));
    }
    if let Some(&last) = backflash_emissions.last() {
        if last >= duration_ps {
            return Err(Error::OutOfRun { timestamp_ps: last, duration_ps });
        }
    }

    let mut out = Vec::new();

    if apd_active {
        let mut rng = rng::stream(seed, STREAM_MONITOR_BACKFLASH);
        let p = detected_fraction(monitor);
        out.extend(
            backflash_emissions
                .iter()
                .filter(|_| rng.random_bool(p))
                .map(|&timestamp_ps| MonitorEvent { timestamp_ps, origin: MonitorOrigin::Backflash }),
        );
    }

    for (i, r) in reflections.iter().enumerate() {
        if r.effective_return_prob == 0.0 {
            continue;
        }
        let mut rng = rng::stream(seed, STREAM_REFLECTION_BASE + i as u64);
        let skip = Geometric::new(r.effective_return_prob).expect("probability validated");
        let jitter = Normal::new(r.delay_ns * PS_PER_NS, r.width_ns * PS_PER_NS).expect("width validated");
        let mut k = 0u64;
        loop {
            k = k.saturating_add(skip.sample(&mut rng));
            if k >= pulses.count {
                break;
            }
            let t = pulses.time_of(k) as f64 + jitter.sample(&mut rng);
            let t = t.max(0.0).round() as u64;
            if t < duration_ps {
                out.push(MonitorEvent { timestamp_ps: t, origin: MonitorOrigin::Backreflection });
            }
            k += 1;
        }
    }

    if monitor.dark_rate_cps > 0.0 {
        let mut rng = rng::stream(seed, STREAM_MONITOR_DARK);
        let gap = Exp::new(monitor.dark_rate_cps).expect("rate validated");
        let mut t_s = 0.0;
        loop {
            t_s += gap.sample(&mut rng);
            let t = (t_s * PS_PER_S).floor();
            if t >= duration_ps as f64 {
                break;
            }
            out.push(MonitorEvent { timestamp_ps: t as u64, origin: MonitorOrigin::Dark });
        }
    }

    out.sort_by_key(|e| (e.timestamp_ps, e.origin));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn train(count: u64) -> PulseTrain {
        PulseTrain { first_ps: 0, period_ps: 64_000, count }
    }

    fn count(events: &[MonitorEvent], origin: MonitorOrigin) -> usize {
        events.iter().filter(|e| e.origin == origin).count()
    }

    #[test]
    fn detected_fraction_examples() {
        let m = |d, c| MonitorParams { detector_efficiency: d, channel_transmission: c, dark_rate_cps: 0.0 };
        assert_eq!(detected_fraction(&m(1.0, 1.0)), 1.0);
        assert!((detected_fraction(&m(0.80, 0.78)) - 0.624).abs() < 1e-15);
        assert_eq!(detected_fraction(&m(0.5, 0.5)), 0.25);
    }

    #[test]
    fn apd_off_without_darks_gives_only_reflections() {
        let emissions: Vec<u64> = (0..1000).map(|i| i * 1_000_000).collect();
        let refl = vec![ReflectionPoint { delay_ns: 17.0, effective_return_prob: 0.01, width_ns: 0.2 }];
        let monitor = MonitorParams { dark_rate_cps: 0.0, ..MonitorParams::default() };
        let out = propagate(&emissions, &train(100_000), &refl, &monitor, false, 0.01, 1).unwrap();
        assert!(!out.is_empty());
        assert!(out.iter().all(|e| e.origin == MonitorOrigin::Backreflection));
    }

    #[test]
    fn opaque_channel_blocks_backflashes() {
        let emissions: Vec<u64> = (0..10_000).map(|i| i * 1000).collect();
        let monitor = MonitorParams { channel_transmission: 0.0, dark_rate_cps: 0.0, ..MonitorParams::default() };
        let out = propagate(&emissions, &train(10), &[], &monitor, true, 0.01, 1).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn backflash_detection_is_binomial() {
        let n = 1_000_000u64;
        let emissions: Vec<u64> = (0..n).map(|i| i * 10).collect();
        let monitor = MonitorParams::default();
        let out =
            propagate(&emissions, &train(0), &[], &MonitorParams { dark_rate_cps: 0.0, ..monitor }, true, 0.01, 9)
                .unwrap();
        let p = 0.624;
        let mean = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        let got = count(&out, MonitorOrigin::Backflash) as f64;
        assert!((got - mean).abs() < 4.0 * sigma, "{got} vs {mean} ± {sigma}");
    }

    #[test]
    fn reflections_ignore_apd_state() {
        let emissions: Vec<u64> = (0..5000).map(|i| i * 100_000).collect();
        let refl = vec![ReflectionPoint { delay_ns: 49.0, effective_return_prob: 0.02, width_ns: 0.2 }];
        let monitor = MonitorParams { dark_rate_cps: 0.0, ..MonitorParams::default() };
        let on = propagate(&emissions, &train(100_000), &refl, &monitor, true, 0.01, 4).unwrap();
        let off = propagate(&emissions, &train(100_000), &refl, &monitor, false, 0.01, 4).unwrap();
        let on_refl: Vec<_> = on.iter().filter(|e| e.origin == MonitorOrigin::Backreflection).collect();
        let off_refl: Vec<_> = off.iter().collect();
        assert_eq!(on_refl.len(), off_refl.len());
        assert!(on_refl.iter().zip(&off_refl).all(|(a, b)| a == b));
        // 1e5 pulses at 2%: 2000 ± 4σ
        let n = off_refl.len() as f64;
        assert!((n - 2000.0).abs() < 4.0 * (2000.0f64 * 0.98).sqrt());
    }

    #[test]
    fn dark_counts_are_poisson() {
        let monitor = MonitorParams { dark_rate_cps: 1e4, ..MonitorParams::default() };
        let out = propagate(&[], &train(0), &[], &monitor, true, 1.0, 2).unwrap();
        let n = count(&out, MonitorOrigin::Dark) as f64;
        assert!((n - 1e4).abs() < 4.0 * 100.0);
        assert!(out.windows(2).all(|w| w[0].timestamp_ps <= w[1].timestamp_ps));
    }

    #[test]
    fn rejects_unsorted_emissions() {
        let err = propagate(&[5, 3], &train(0), &[], &MonitorParams::default(), true, 1e-6, 0).unwrap_err();
        assert!(matches!(err, Error::Unsorted(_)));
    }

    #[test]
    fn output_is_sorted_merge() {
        let emissions: Vec<u64> = (0..20_000).map(|i| i * 400_000 + 7).collect();
        let refl = ReflectionPoint::standard_pair()
            .into_iter()
            .map(|r| ReflectionPoint { effective_return_prob: 1e-3, ..r })
            .collect::<Vec<_>>();
        let monitor = MonitorParams { dark_rate_cps: 1e4, ..MonitorParams::default() };
        let out = propagate(&emissions, &train(125_000), &refl, &monitor, true, 0.01, 5).unwrap();
        assert!(out.windows(2).all(|w| w[0].timestamp_ps <= w[1].timestamp_ps));
        assert!(count(&out, MonitorOrigin::Backflash) > 0);
        assert!(count(&out, MonitorOrigin::Backreflection) > 0);
        assert!(count(&out, MonitorOrigin::Dark) > 0);
    }
}
