//! End-to-end orchestration: simulate an APD-on and an APD-off run, then
//! analyse the monitor tags exactly as a bench measurement would be.

use crate::analysis::{
    count_backflashes, count_valid_apd, estimate_leakage, fold_histogram, subtract_baseline, Count, Histogram,
    LeakageEstimate,
};
use crate::apd::{simulate_apd, ApdRun};
use crate::config::ExperimentConfig;
use crate::optics::{propagate, MonitorEvent, PulseTrain};
use crate::rng::derive_seed;
use crate::{duration_ps, Result};

const LABEL_APD: u64 = 1;
const LABEL_MONITOR_ON: u64 = 2;
const LABEL_MONITOR_OFF: u64 = 3;

/// Ground-truth output of one simulated measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRun {
    pub apd: ApdRun,
    /// Monitor tags with the APD biased and gated.
    pub monitor_on: Vec<MonitorEvent>,
    /// Monitor tags with the APD bias and gating disabled.
    pub monitor_off: Vec<MonitorEvent>,
}

impl ExperimentRun {
    pub fn apd_timestamps(&self) -> Vec<u64> {
        self.apd.events.iter().map(|e| e.timestamp_ps).collect()
    }

    pub fn monitor_on_timestamps(&self) -> Vec<u64> {
        self.monitor_on.iter().map(|e| e.timestamp_ps).collect()
    }

    pub fn monitor_off_timestamps(&self) -> Vec<u64> {
        self.monitor_off.iter().map(|e| e.timestamp_ps).collect()
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRun> {
    cfg.validate()?;
    let apd = simulate_apd(&cfg.gate, &cfg.apd, &cfg.backflash, cfg.duration_s, derive_seed(cfg.seed, LABEL_APD))?;
    let pulses = PulseTrain::for_gates(&cfg.gate, duration_ps(cfg.duration_s)?);
    let monitor_on = propagate(
        &apd.backflash_emissions,
        &pulses,
        &cfg.reflections,
        &cfg.monitor,
        true,
        cfg.duration_s,
        derive_seed(cfg.seed, LABEL_MONITOR_ON),
    )?;
    let monitor_off = propagate(
        &[],
        &pulses,
        &cfg.reflections,
        &cfg.monitor,
        false,
        cfg.duration_s,
        derive_seed(cfg.seed, LABEL_MONITOR_OFF),
    )?;
    Ok(ExperimentRun { apd, monitor_on, monitor_off })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub on: Histogram,
    pub off: Histogram,
    pub subtracted: Histogram,
    pub n_backflash: Count,
    pub n_apd_valid: Count,
    pub leakage: LeakageEstimate,
}

/// Analyses bare time tags. Both monitor runs are assumed to span
/// `cfg.duration_s`.
pub fn analyze(apd_tags: &[u64], monitor_on: &[u64], monitor_off: &[u64], cfg: &ExperimentConfig) -> Result<Analysis> {
    cfg.validate()?;
    let period = cfg.gate.laser_period_ps();
    let on = fold_histogram(monitor_on, period, cfg.bin_width_ps, cfg.duration_s)?;
    let off = fold_histogram(monitor_off, period, cfg.bin_width_ps, cfg.duration_s)?;
    let subtracted = subtract_baseline(&on, &off)?;
    // The off run carries the same monitor darks, so none remain to remove.
    let n_backflash = count_backflashes(&subtracted, 0.0);
    let n_apd_valid =
        count_valid_apd(apd_tags.iter().map(|&t| cfg.gate.gate_of(t)), &cfg.gate, &cfg.apd, cfg.duration_s)?;
    let leakage = estimate_leakage(n_backflash, n_apd_valid, &cfg.monitor)?;
    Ok(Analysis { on, off, subtracted, n_backflash, n_apd_valid, leakage })
}

pub fn run_and_analyze(cfg: &ExperimentConfig) -> Result<(ExperimentRun, Analysis)> {
    let run = run_experiment(cfg)?;
    let analysis = analyze(&run.apd_timestamps(), &run.monitor_on_timestamps(), &run.monitor_off_timestamps(), cfg)?;
    Ok((run, analysis))
}
