//! Run configuration.
//!
//! ```toml
//! seed = 7
//! selector = "ssmi"        # ssmi | frontier | fsmi-binary
//! mapper = "grid"          # grid | octree
//!
//! [env]
//! profile = "random"       # random | structured
//! dims = [32, 32, 1]
//! resolution = 1.0
//! classes = 3
//! occupancy = 0.2
//!
//! [sensor]
//! beams = 32
//! fov_deg = 360.0
//! max_range = 6.0
//! range_sigma = 0.1
//! misclassification = 0.35
//!
//! [model]
//! true_positive_rate = 0.65
//! phi_plus = 0.41
//! clamp = 6.0
//! alpha = 0.5
//! fusion = "fold"
//!
//! [planner]
//! min_frontier_size = 3
//! pose_stride = 3
//! beams = 16
//! fov_deg = 360.0
//! max_range = 6.0
//!
//! [episode]
//! max_steps = 200
//! stop_explored = 1.0
//!
//! [sweep]
//! resolutions = [1.0, 2.0, 4.0, 8.0]
//! iterations = 5
//! ```
//!
//! Every field is optional.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::logodds::{LogOdds, SensorParams};
use crate::octree::FusionMode;
use crate::planner::PlannerConfig;
use crate::sim::env::EnvProfile;
use crate::sim::sensor::SensorSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub profile: EnvProfile,
    pub dims: [usize; 3],
    pub resolution: f64,
    pub classes: usize,
    /// Target fraction of interior cells covered by blocks.
    pub occupancy: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            profile: EnvProfile::Random,
            dims: [32, 32, 1],
            resolution: 1.0,
            classes: 3,
            occupancy: 0.2,
        }
    }
}

/// Inverse observation model used by the mapper.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub true_positive_rate: f64,
    /// Hit increment shared by the non-free classes.
    pub phi_plus: f64,
    pub clamp: f64,
    pub alpha: f64,
    pub fusion: FusionMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            true_positive_rate: 0.65,
            phi_plus: crate::logodds::DEFAULT_PHI_PLUS,
            clamp: 6.0,
            alpha: 0.5,
            fusion: FusionMode::Fold,
        }
    }
}

impl ModelConfig {
    pub fn params(&self, num_classes: usize) -> Result<SensorParams> {
        SensorParams::with_hit_model(num_classes, self.true_positive_rate, self.phi_plus)?
            .with_clamp(-self.clamp, self.clamp)?
            .with_alpha(self.alpha)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub max_steps: usize,
    /// Stop once this explored fraction is reached.
    pub stop_explored: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            max_steps: 200,
            stop_explored: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Elements per meter.
    pub resolutions: Vec<f64>,
    pub iterations: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            resolutions: vec![1.0, 2.0, 4.0, 8.0],
            iterations: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub selector: String,
    pub mapper: String,
    pub env: EnvConfig,
    pub sensor: SensorSpec,
    pub model: ModelConfig,
    pub planner: PlannerConfig,
    pub episode: EpisodeConfig,
    pub sweep: SweepConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            selector: "ssmi".into(),
            mapper: "grid".into(),
            env: EnvConfig::default(),
            sensor: SensorSpec::default(),
            model: ModelConfig::default(),
            planner: PlannerConfig::default(),
            episode: EpisodeConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.sensor.validate()?;
        self.params()?;
        if self.planner.beams == 0 || self.planner.pose_stride == 0 {
            return Err(Error::Config("planner beams and pose_stride must be positive".into()));
        }
        if !(self.env.resolution > 0.0) {
            return Err(Error::Config("env resolution must be positive".into()));
        }
        if self.sweep.resolutions.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::Config("sweep resolutions must be positive".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> Result<SensorParams> {
        self.model.params(self.env.classes)
    }

    pub fn prior(&self) -> LogOdds {
        LogOdds::uniform(self.env.classes)
    }

    /// Resolved configuration, defaults included.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Short digest of the resolved configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn resolved_round_trips() {
        let c = Config::from_toml("seed = 3\nselector = \"frontier\"\n[sensor]\nrange_sigma = 0.1\n").unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.sensor.range_sigma, 0.1);
        let back = Config::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_ne!(c.hash(), Config::default().hash());
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(Config::from_toml("sede = 1"), Err(Error::Config(_))));
        assert!(Config::from_toml("[sensor]\nmisclassification = 1.0").is_err());
        assert!(Config::from_toml("[model]\ntrue_positive_rate = 0.0").is_err());
        let e = Config::load(Path::new("/no/such/config.toml")).unwrap_err();
        assert!(e.to_string().contains("/no/such/config.toml"));
    }
}
