use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gscm::ScenarioConfig;
use crate::localization::{CrlbParams, InversionOptions};
use crate::rx::RateMode;
use crate::scheduler::GusVariant;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Gus,
    Gwc,
    Random,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::Gus => "GUS",
            Self::Gwc => "GWC",
            Self::Random => "RANDOM",
        }
    }
}

/// How the BS obtains the channel of the selected users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CsiMode {
    #[default]
    Perfect,
    /// MMSE estimate from orthogonal pilots and a sample covariance.
    Mmse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub trials: usize,
    pub base_seed: u64,
    pub algorithms: Vec<Algorithm>,
    /// Total transmit power grid, W.
    pub powers_w: Vec<f64>,
    pub k_s: Vec<usize>,
    pub omegas: Vec<u32>,
    pub mode: RateMode,
    pub gus_variant: GusVariant,
    pub csi: CsiMode,
    /// Fading re-draws used for the MMSE covariance.
    pub covariance_draws: usize,
    pub bandwidth: f64,
    pub noise_temperature: f64,
    pub noise_figure_db: f64,
    /// Antenna counts swept by the load table.
    pub antenna_sweep: Vec<usize>,
    /// Pool sizes swept by the load table.
    pub user_sweep: Vec<usize>,
    pub output: Option<PathBuf>,
    pub scenario: ScenarioConfig,
    pub crlb: CrlbParams,
    pub inversion: InversionOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            trials: 50,
            base_seed: 1,
            algorithms: vec![Algorithm::Gus, Algorithm::Gwc, Algorithm::Random],
            powers_w: vec![0.1, 1.0, 10.0, 100.0, 1000.0, 10000.0],
            k_s: vec![5, 10],
            omegas: vec![0],
            mode: RateMode::Physical,
            gus_variant: GusVariant::Last,
            csi: CsiMode::Perfect,
            covariance_draws: 500,
            bandwidth: 20e6,
            noise_temperature: 290.0,
            noise_figure_db: 9.0,
            antenna_sweep: vec![50, 100, 150, 200, 250, 300, 350, 400],
            user_sweep: vec![20, 50, 100],
            output: None,
            scenario: ScenarioConfig::default(),
            crlb: CrlbParams::default(),
            inversion: InversionOptions::default(),
        }
    }
}

impl ExperimentConfig {
    /// Sum-rate versus total power for GUS, GWC and random selection.
    pub fn figure2() -> Self {
        Self::default()
    }

    /// Sum-rate versus localisation error scale Ω.
    pub fn figure4() -> Self {
        Self {
            algorithms: vec![Algorithm::Gus, Algorithm::Random],
            powers_w: vec![100.0],
            omegas: (0..=5).collect(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.algorithms.is_empty()
            || self.powers_w.is_empty()
            || self.k_s.is_empty()
            || self.omegas.is_empty()
        {
            return Err(Error::Config(
                "algorithm, power, K_s and Ω grids must be non-empty".into(),
            ));
        }
        if self.powers_w.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Config(
                "powers must be finite and nonnegative".into(),
            ));
        }
        for &k_s in &self.k_s {
            if k_s == 0 || k_s > self.scenario.num_users || k_s > self.scenario.antenna_count {
                return Err(Error::Config(format!(
                    "K_s = {k_s} must lie in 1..=min(users, antennas)"
                )));
            }
        }
        if self.csi == CsiMode::Mmse && self.covariance_draws == 0 {
            return Err(Error::Config(
                "MMSE needs at least one covariance draw".into(),
            ));
        }
        if !(self.bandwidth > 0.0
            && self.noise_temperature > 0.0
            && self.noise_figure_db.is_finite())
        {
            return Err(Error::Config("noise parameters must be positive".into()));
        }
        self.scenario.validate()?;
        self.crlb.validate()?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg = Self::from_toml_str_unchecked(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without [`validate`](Self::validate), for callers that override
    /// fields before checking.
    pub fn from_toml_str_unchecked(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn noise_power(&self) -> f64 {
        crate::rx::noise_power(self.bandwidth, self.noise_temperature, self.noise_figure_db)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        for cfg in [ExperimentConfig::figure2(), ExperimentConfig::figure4()] {
            cfg.validate().unwrap();
            let text = cfg.to_toml_string().unwrap();
            assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "schema_version = 1\ntrials = 3\nalgorithms = [\"gus\"]\n[scenario]\nnum_users = 12\n",
        )
        .unwrap();
        assert_eq!(cfg.trials, 3);
        assert_eq!(cfg.algorithms, vec![Algorithm::Gus]);
        assert_eq!(cfg.scenario.num_users, 12);
        assert_eq!(cfg.scenario.vr_radius, 50.0);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml_str("schema_version = 2").is_err());
        assert!(ExperimentConfig::from_toml_str("trials = 0").is_err());
        assert!(ExperimentConfig::from_toml_str("k_s = [41]").is_err());
        assert!(ExperimentConfig::from_toml_str("bogus_key = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("powers_w = []").is_err());
    }
}
