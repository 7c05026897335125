//! Configuration files and run records.
//!
//! Configs are TOML with dotted section names (`[experiment.apd]`,
//! `[keyrate]`, ...). Every field except `experiment.seed` has a default,
//! and unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::apd::{ApdParams, BackflashParams, GateConfig};
use crate::darkcurrent::DarkCurrentCurve;
use crate::keyrate::KeyRateParams;
use crate::optics::{MonitorParams, ReflectionPoint};
use crate::{duration_ps, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Mandatory: there is no wall-clock fallback.
    pub seed: u64,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_bin_width")]
    pub bin_width_ps: u64,
    #[serde(default)]
    pub gate: GateConfig,
    #[serde(default)]
    pub apd: ApdParams,
    #[serde(default)]
    pub backflash: BackflashParams,
    #[serde(default = "ReflectionPoint::standard_pair")]
    pub reflections: Vec<ReflectionPoint>,
    #[serde(default)]
    pub monitor: MonitorParams,
}

fn default_duration() -> f64 {
    10.0
}

fn default_bin_width() -> u64 {
    250
}

impl ExperimentConfig {
    /// The 1 GHz, 1/64-illuminated, 0.1 photon/pulse setup with a 10 s run.
    pub fn standard(seed: u64) -> Self {
        ExperimentConfig {
            seed,
            duration_s: default_duration(),
            bin_width_ps: default_bin_width(),
            gate: GateConfig::default(),
            apd: ApdParams::default(),
            backflash: BackflashParams::default(),
            reflections: ReflectionPoint::standard_pair(),
            monitor: MonitorParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        duration_ps(self.duration_s)?;
        self.gate.validate()?;
        self.apd.validate()?;
        self.backflash.validate()?;
        self.monitor.validate()?;
        for r in &self.reflections {
            r.validate()?;
        }
        let period = self.gate.laser_period_ps();
        if self.bin_width_ps == 0 || !period.is_multiple_of(self.bin_width_ps) {
            return Err(Error::invalid(
                "experiment.bin_width_ps",
                format!("{} ps does not divide the {period} ps laser period", self.bin_width_ps),
            ));
        }
        Ok(())
    }

    /// Sets the bin width so that one laser period holds `bins` bins.
    pub fn set_bins(&mut self, bins: u64) -> Result<()> {
        let period = self.gate.laser_period_ps();
        if bins == 0 || !period.is_multiple_of(bins) {
            return Err(Error::invalid("bins", format!("{bins} bins do not divide {period} ps evenly")));
        }
        self.bin_width_ps = period / bins;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeyRateConfig {
    pub params: KeyRateParams,
    pub distance_start_km: f64,
    pub distance_stop_km: f64,
    pub distance_step_km: f64,
    pub leakages: Vec<f64>,
    /// Also emit the constant-leakage (pessimistic) curves.
    pub pessimistic: bool,
}

impl Default for KeyRateConfig {
    fn default() -> Self {
        KeyRateConfig {
            params: KeyRateParams::default(),
            distance_start_km: 0.0,
            distance_stop_km: 200.0,
            distance_step_km: 1.0,
            leakages: vec![0.0, 5e-3, 5e-2],
            pessimistic: true,
        }
    }
}

impl KeyRateConfig {
    pub fn distances(&self) -> Result<Vec<f64>> {
        let (a, b, s) = (self.distance_start_km, self.distance_stop_km, self.distance_step_km);
        if !(a.is_finite() && b.is_finite() && s.is_finite()) || a < 0.0 || b < a || s <= 0.0 {
            return Err(Error::invalid("keyrate.distance_*", format!("bad grid {a}..{b} step {s}")));
        }
        let n = ((b - a) / s + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| a + i as f64 * s).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DarkSweepConfig {
    pub curve: DarkCurrentCurve,
    pub current_start_na: f64,
    pub current_stop_na: f64,
    pub points: usize,
    pub duration_s: f64,
    /// Only points at or above this current enter the linear fit.
    pub fit_min_current_na: f64,
}

impl Default for DarkSweepConfig {
    fn default() -> Self {
        DarkSweepConfig {
            curve: DarkCurrentCurve::default(),
            current_start_na: 1.0,
            current_stop_na: 1000.0,
            points: 31,
            duration_s: 10.0,
            fit_min_current_na: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EfficiencySweepConfig {
    pub efficiencies: Vec<f64>,
}

impl Default for EfficiencySweepConfig {
    fn default() -> Self {
        EfficiencySweepConfig { efficiencies: vec![0.02, 0.05, 0.08, 0.10, 0.12, 0.15, 0.17, 0.20, 0.25, 0.30] }
    }
}

/// Top level of a config file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<ExperimentConfig>,
    #[serde(default)]
    pub keyrate: KeyRateConfig,
    #[serde(default)]
    pub darksweep: DarkSweepConfig,
    #[serde(default)]
    pub sweep: EfficiencySweepConfig,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn experiment(&self) -> Result<&ExperimentConfig> {
        self.experiment
            .as_ref()
            .ok_or_else(|| Error::Config("missing [experiment] section; experiment.seed is required".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub n_apd_valid: f64,
    pub n_backflash: f64,
    pub leakage: f64,
    pub std_error: f64,
}

/// What a `simulate` run wrote and what it measured. Re-running `config`
/// reproduces `summary` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub outputs: Vec<String>,
    pub summary: RunSummary,
    pub config: ConfigFile,
}

impl RunRecord {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ConfigFile::parse("[experiment]\nseed = 7\n").unwrap();
        assert_eq!(cfg.experiment().unwrap(), &ExperimentConfig::standard(7));
        assert_eq!(cfg.keyrate, KeyRateConfig::default());
    }

    #[test]
    fn dotted_sections_override_fields() {
        let text = r#"
[experiment]
seed = 1
duration_s = 0.5

[experiment.apd]
detection_efficiency = 0.25

[[experiment.reflections]]
delay_ns = 20.0
effective_return_prob = 1e-6
"#;
        let cfg = ConfigFile::parse(text).unwrap();
        let exp = cfg.experiment().unwrap();
        assert_eq!(exp.duration_s, 0.5);
        assert_eq!(exp.apd.detection_efficiency, 0.25);
        assert_eq!(exp.apd.dark_count_prob_per_gate, 1.9e-6);
        assert_eq!(exp.reflections.len(), 1);
        assert_eq!(exp.reflections[0].width_ns, 0.2);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = ConfigFile::parse("[experiment]\nseed = 1\n[experiment.apd]\ndetection_eff = 0.2\n").unwrap_err();
        assert!(err.to_string().contains("detection_eff"), "{err}");
        let err = ConfigFile::parse("[experiment]\nsed = 1\n").unwrap_err();
        assert!(err.to_string().contains("sed"), "{err}");
    }

    #[test]
    fn seed_is_mandatory() {
        let err = ConfigFile::parse("[experiment]\nduration_s = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn validation_names_the_parameter() {
        let mut exp = ExperimentConfig::standard(1);
        exp.bin_width_ps = 300;
        assert!(exp.validate().unwrap_err().to_string().contains("bin_width_ps"));
        exp.bin_width_ps = 250;
        exp.duration_s = 0.0;
        assert!(exp.validate().unwrap_err().to_string().contains("duration"));
    }

    #[test]
    fn bins_override() {
        let mut exp = ExperimentConfig::standard(1);
        exp.set_bins(128).unwrap();
        assert_eq!(exp.bin_width_ps, 500);
        assert!(exp.set_bins(300).is_err());
    }

    #[test]
    fn distance_grid() {
        let d = KeyRateConfig::default().distances().unwrap();
        assert_eq!(d.len(), 201);
        assert_eq!(d[200], 200.0);
    }

    #[test]
    fn run_record_round_trips() {
        let mut cfg = ConfigFile { experiment: Some(ExperimentConfig::standard(99)), ..Default::default() };
        cfg.keyrate.leakages = vec![0.0, 6e-2];
        let rec = RunRecord {
            outputs: vec!["apd_on.bin".into()],
            summary: RunSummary { n_apd_valid: 1.5, n_backflash: -2.0, leakage: 0.1, std_error: 1e-3 },
            config: cfg,
        };
        let text = rec.to_toml().unwrap();
        assert_eq!(RunRecord::parse(&text).unwrap(), rec);
    }
}
