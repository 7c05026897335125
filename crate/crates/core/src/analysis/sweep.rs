use std::io::Write;

use rayon::prelude::*;

use super::LeakageEstimate;
use crate::config::ExperimentConfig;
use crate::pipeline::run_and_analyze;
use crate::rng::derive_seed;
use crate::{Error, Result};

pub const EFFICIENCY_CSV_HEADER: &str = "efficiency,n_apd_valid,n_backflash,leakage,std_error";

/// Leakage as a function of APD detection efficiency, everything else fixed.
///
/// Point `i` runs the full pipeline with a seed derived from the base seed and
/// `i`, so points are statistically independent and the sweep is reproducible.
pub fn sweep_efficiency(efficiencies: &[f64], base: &ExperimentConfig) -> Result<Vec<(f64, LeakageEstimate)>> {
    for &e in efficiencies {
        if !(e > 0.0 && e <= 1.0) {
            return Err(Error::invalid("sweep.efficiencies", format!("{e} not in (0, 1]")));
        }
    }
    efficiencies
        .par_iter()
        .enumerate()
        .map(|(i, &efficiency)| {
            let mut cfg = base.clone();
            cfg.apd.detection_efficiency = efficiency;
            cfg.seed = derive_seed(base.seed, 0x5eed_0000 + i as u64);
            let (_, analysis) = run_and_analyze(&cfg)?;
            Ok((efficiency, analysis.leakage))
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(mut w: W, points: &[(f64, LeakageEstimate)]) -> std::io::Result<()> {
    writeln!(w, "{EFFICIENCY_CSV_HEADER}")?;
    for (eff, est) in points {
        writeln!(w, "{},{},{},{},{}", eff, est.n_apd_valid, est.n_backflash, est.leakage, est.std_error)?;
    }
    Ok(())
}
