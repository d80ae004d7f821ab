//! Pipeline configuration, read from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assess::{BodeSettings, Requirements};
use crate::doe::SamplingPlan;
use crate::error::{PhmError, Result};
use crate::mlp::StopCriteria;
use crate::pod::PodOptions;
use crate::rul::DamageModel;
use crate::sim::{chirp_command, ActuatorParams, CommandProfile};
use crate::som::SomOptions;
use crate::svm::SvmOptions;

/// Reference test command: a linear chirp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChirpSettings {
    /// s
    pub duration: f64,
    /// User-side rad.
    pub amplitude: f64,
    pub f_start: f64,
    pub f_end: f64,
    /// Acquisition rate, Hz.
    pub sample_rate: f64,
}

impl Default for ChirpSettings {
    fn default() -> Self {
        ChirpSettings { duration: 0.5, amplitude: 5e-3, f_start: 0.0, f_end: 15.0, sample_rate: 20_000.0 }
    }
}

impl ChirpSettings {
    pub fn profile(&self) -> Result<CommandProfile> {
        chirp_command(self.duration, self.amplitude, self.f_start, self.f_end, self.sample_rate)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompressionSettings {
    /// Modes retained for the gappy recovery and the network inputs.
    pub n_modes: usize,
    pub pod: PodOptions,
    pub som: SomOptions,
}

impl Default for CompressionSettings {
    fn default() -> Self {
        CompressionSettings { n_modes: 10, pod: PodOptions { max_modes: Some(40), ..Default::default() }, som: SomOptions::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSettings {
    pub n_hidden: usize,
    pub stop: StopCriteria,
}

impl Default for MlpSettings {
    fn default() -> Self {
        MlpSettings { n_hidden: 20, stop: StopCriteria::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RulSettings {
    pub monte_carlo: usize,
    /// Also find the initial-state disturbances matching each quantile.
    pub calibrate: bool,
    pub damage: DamageModel,
}

impl Default for RulSettings {
    fn default() -> Self {
        RulSettings { monte_carlo: 200, calibrate: false, damage: DamageModel::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSettings {
    /// Mode counts for the coefficient-error sweep.
    pub mode_sweep: Vec<usize>,
    /// Hidden-layer sizes for the network sweep.
    pub hidden_sweep: Vec<usize>,
    /// Epoch cap for the sweep networks.
    pub hidden_sweep_epochs: usize,
    /// Near-nominal samples that also get a full-model RUL reference.
    pub rul_samples: usize,
}

impl Default for ReportSettings {
    fn default() -> Self {
        ReportSettings { mode_sweep: (1..=32).collect(), hidden_sweep: vec![5, 10, 20, 50], hidden_sweep_epochs: 200, rul_samples: 100 }
    }
}

fn default_validation() -> SamplingPlan {
    SamplingPlan { n_samples: 500, ..Default::default() }
}

fn default_near_nominal() -> SamplingPlan {
    SamplingPlan { n_samples: 100, restrict: 0.3, ..Default::default() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every random stream is derived from it by name.
    pub seed: u64,
    pub training: SamplingPlan,
    #[serde(default = "default_validation")]
    pub validation: SamplingPlan,
    #[serde(default = "default_near_nominal")]
    pub near_nominal: SamplingPlan,
    #[serde(default)]
    pub command: ChirpSettings,
    #[serde(default)]
    pub actuator: ActuatorParams,
    #[serde(default)]
    pub requirements: Requirements,
    #[serde(default)]
    pub bode: BodeSettings,
    #[serde(default)]
    pub compression: CompressionSettings,
    #[serde(default)]
    pub mlp: MlpSettings,
    #[serde(default)]
    pub svm: SvmOptions,
    #[serde(default)]
    pub rul: RulSettings,
    #[serde(default)]
    pub report: ReportSettings,
}

impl PipelineConfig {
    pub fn with_samples(seed: u64, n_training: usize) -> Self {
        PipelineConfig {
            seed,
            training: SamplingPlan { n_samples: n_training, ..Default::default() },
            validation: default_validation(),
            near_nominal: default_near_nominal(),
            command: ChirpSettings::default(),
            actuator: ActuatorParams::default(),
            requirements: Requirements::default(),
            bode: BodeSettings::default(),
            compression: CompressionSettings::default(),
            mlp: MlpSettings::default(),
            svm: SvmOptions::default(),
            rul: RulSettings::default(),
            report: ReportSettings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| PhmError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PhmError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        self.actuator.validate()?;
        self.requirements.validate()?;
        self.bode.grid()?;
        self.command.profile()?;
        self.rul.damage.validate()?;
        let c = &self.compression;
        if c.n_modes == 0 {
            return Err(PhmError::Config("compression.n_modes must be positive".into()));
        }
        if c.n_modes > c.som.n_w {
            return Err(PhmError::Config(format!(
                "compression.n_modes = {} exceeds the {} sampling points",
                c.n_modes, c.som.n_w
            )));
        }
        if c.pod.max_modes.is_some_and(|m| m < c.n_modes) {
            return Err(PhmError::Config("compression.pod.max_modes is below n_modes".into()));
        }
        if self.training.n_samples < 2 {
            return Err(PhmError::Config("training.n_samples must be at least 2".into()));
        }
        if self.mlp.n_hidden == 0 {
            return Err(PhmError::Config("mlp.n_hidden must be positive".into()));
        }
        if self.rul.monte_carlo < 2 {
            return Err(PhmError::Config("rul.monte_carlo must be at least 2".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = PipelineConfig::from_toml("seed = 3\n[training]\nn_samples = 50\n").unwrap();
        assert_eq!(cfg.validation.n_samples, 500);
        assert_eq!(cfg.near_nominal.restrict, 0.3);
        assert_eq!(cfg.command.profile().unwrap().len(), 10001);
    }

    #[test]
    fn round_trip_and_hash() {
        let cfg = PipelineConfig::with_samples(1, 20);
        let back = PipelineConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let other = PipelineConfig::with_samples(2, 20);
        assert_ne!(other.hash(), cfg.hash());
    }

    #[test]
    fn missing_and_unknown_fields_are_named() {
        let e = PipelineConfig::from_toml("[training]\nn_samples = 5\n").unwrap_err().to_string();
        assert!(e.contains("seed"), "{e}");
        let e = PipelineConfig::from_toml("seed = 1\n[training]\nn_samples = 5\n[actuator]\nresistance = 1.0\n").unwrap_err().to_string();
        assert!(e.contains("inductance"), "{e}");
        let e = PipelineConfig::from_toml("seed = 1\nsede = 2\n[training]\nn_samples = 5\n").unwrap_err().to_string();
        assert!(e.contains("sede"), "{e}");
    }

    #[test]
    fn inconsistent_sizes_rejected() {
        let mut cfg = PipelineConfig::with_samples(1, 20);
        cfg.compression.n_modes = 31;
        assert!(cfg.validate().is_err());
    }
}
