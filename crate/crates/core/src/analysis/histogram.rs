use std::io::Write;
use std::ops::Add;

use crate::{duration_ps, Error, Result};

pub const HISTOGRAM_CSV_HEADER: &str = "bin_start_ps,count";

/// Counts folded modulo one laser period.
///
/// Bins are signed: a baseline-subtracted histogram legitimately has negative
/// bins. `variance` carries the Poisson variance of each bin through
/// subtraction and scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    bin_width_ps: u64,
    period_ps: u64,
    counts: Vec<i64>,
    variance: Vec<f64>,
    duration_s: f64,
}

impl Histogram {
    pub fn zeros(period_ps: u64, bin_width_ps: u64, duration_s: f64) -> Result<Self> {
        if bin_width_ps == 0 || period_ps == 0 || !period_ps.is_multiple_of(bin_width_ps) {
            return Err(Error::BinningMismatch(format!(
                "period {period_ps} ps is not a positive multiple of bin width {bin_width_ps} ps"
            )));
        }
        duration_ps(duration_s)?;
        let n = (period_ps / bin_width_ps) as usize;
        Ok(Histogram { bin_width_ps, period_ps, counts: vec![0; n], variance: vec![0.0; n], duration_s })
    }

    pub fn bin_width_ps(&self) -> u64 {
        self.bin_width_ps
    }

    pub fn period_ps(&self) -> u64 {
        self.period_ps
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    pub fn counts(&self) -> &[i64] {
        &self.counts
    }

    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    pub fn bin_count(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_start_ps(&self, bin: usize) -> u64 {
        bin as u64 * self.bin_width_ps
    }

    pub fn bin_of(&self, timestamp_ps: u64) -> usize {
        ((timestamp_ps % self.period_ps) / self.bin_width_ps) as usize
    }

    pub fn total(&self) -> i64 {
        self.counts.iter().sum()
    }

    pub fn total_variance(&self) -> f64 {
        self.variance.iter().sum()
    }

    /// Index of the largest bin; the first one on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }

    pub fn same_binning(&self, other: &Histogram) -> Result<()> {
        if self.bin_width_ps != other.bin_width_ps || self.period_ps != other.period_ps {
            return Err(Error::BinningMismatch(format!(
                "{} ps bins over {} ps vs {} ps bins over {} ps",
                self.bin_width_ps, self.period_ps, other.bin_width_ps, other.period_ps
            )));
        }
        Ok(())
    }

    /// Multiplies every bin by `factor`, rounding counts half-to-even.
    pub fn scaled(&self, factor: f64) -> Histogram {
        Histogram {
            counts: self.counts.iter().map(|&c| (c as f64 * factor).round_ties_even() as i64).collect(),
            variance: self.variance.iter().map(|&v| v * factor * factor).collect(),
            ..self.clone()
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{HISTOGRAM_CSV_HEADER}")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(w, "{},{}", self.bin_start_ps(i), c)?;
        }
        Ok(())
    }
}

/// Merging shards of one run: counts and variances add, durations do not.
impl Add for &Histogram {
    type Output = Result<Histogram>;

    fn add(self, rhs: &Histogram) -> Result<Histogram> {
        self.same_binning(rhs)?;
        Ok(Histogram {
            counts: self.counts.iter().zip(&rhs.counts).map(|(a, b)| a + b).collect(),
            variance: self.variance.iter().zip(&rhs.variance).map(|(a, b)| a + b).collect(),
            ..self.clone()
        })
    }
}

/// Folds picosecond timestamps modulo `period_ps`.
pub fn fold_histogram(events: &[u64], period_ps: u64, bin_width_ps: u64, duration_s: f64) -> Result<Histogram> {
    let mut h = Histogram::zeros(period_ps, bin_width_ps, duration_s)?;
    let duration_ps = duration_ps(duration_s)?;
    for &t in events {
        if t >= duration_ps {
            return Err(Error::OutOfRun { timestamp_ps: t, duration_ps });
        }
        let bin = h.bin_of(t);
        h.counts[bin] += 1;
    }
    h.variance = h.counts.iter().map(|&c| c as f64).collect();
    Ok(h)
}

/// Bin-wise `on - off`, without clamping.
///
/// When the runs differ in length the baseline is first rescaled to the
/// duration of `on`.
pub fn subtract_baseline(on: &Histogram, off: &Histogram) -> Result<Histogram> {
    on.same_binning(off)?;
    let off = if on.duration_s == off.duration_s { off.clone() } else { off.scaled(on.duration_s / off.duration_s) };
    Ok(Histogram {
        counts: on.counts.iter().zip(&off.counts).map(|(a, b)| a - b).collect(),
        variance: on.variance.iter().zip(&off.variance).map(|(a, b)| a + b).collect(),
        ..on.clone()
    })
}
