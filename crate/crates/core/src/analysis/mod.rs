//! Time-tag analysis: period folding, baseline subtraction and leakage estimation.

mod histogram;
mod leakage;
mod sweep;

pub use histogram::{fold_histogram, subtract_baseline, Histogram, HISTOGRAM_CSV_HEADER};
pub use leakage::{count_backflashes, count_valid_apd, estimate_leakage, Count, LeakageEstimate};
pub use sweep::{sweep_efficiency, write_sweep_csv, EFFICIENCY_CSV_HEADER};
