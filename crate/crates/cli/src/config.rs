use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use cavsim_core::control::{ControllerKind, SignalConfig, SignalPlan};
use cavsim_core::geometry::{CorridorConfig, CorridorNetwork};
use cavsim_core::learn::{TrainerConfig, DEFAULT_QUEUE_CAP};
use cavsim_core::metrics::DEFAULT_PET_MAX;
use cavsim_core::sim::{DemandConfig, EpisodeConfig, KinematicsParams, LogDetail, Regime, SimParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Demand as a named preset, explicit volumes, or a preset with overrides.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemandSection {
    pub regime: Option<Regime>,
    pub major_vph: Option<f64>,
    pub minor_vph: Option<f64>,
    pub turn_split: Option<[f64; 3]>,
}

impl DemandSection {
    pub fn resolve(&self) -> DemandConfig {
        let base = self.regime.unwrap_or(Regime::Moderate).demand();
        DemandConfig {
            major_vph: self.major_vph.unwrap_or(base.major_vph),
            minor_vph: self.minor_vph.unwrap_or(base.minor_vph),
            turn_split: self.turn_split.unwrap_or(base.turn_split),
        }
    }

    /// Every field filled in.
    pub fn effective(&self) -> DemandSection {
        let d = self.resolve();
        DemandSection {
            regime: self.regime,
            major_vph: Some(d.major_vph),
            minor_vph: Some(d.minor_vph),
            turn_split: Some(d.turn_split),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSection {
    pub kind: ControllerKind,
    pub model: Option<PathBuf>,
    pub queue_cap: u32,
    pub signal: SignalConfig,
}

impl Default for ControllerSection {
    fn default() -> Self {
        ControllerSection {
            kind: ControllerKind::Lqf,
            model: None,
            queue_cap: DEFAULT_QUEUE_CAP,
            signal: SignalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    /// Episode length, s.
    pub duration: f64,
    pub dt: f64,
    pub seeds: Vec<u64>,
    pub log: LogDetail,
    pub pet_max: f64,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection { duration: 3600.0, dt: 0.5, seeds: (1..=20).collect(), log: LogDetail::Grid, pet_max: DEFAULT_PET_MAX }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("results") }
    }
}

/// Kinematic and vehicle settings; the step length comes from the evaluation
/// or trainer section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleSection {
    pub a_acc: f64,
    pub a_dec: f64,
    pub vmax: f64,
    pub length: f64,
    pub standstill_margin: f64,
    pub queue_speed: f64,
    pub detector_length: f64,
}

impl Default for VehicleSection {
    fn default() -> Self {
        let k = KinematicsParams::default();
        let s = SimParams::default();
        VehicleSection {
            a_acc: k.a_acc,
            a_dec: k.a_dec,
            vmax: k.vmax,
            length: s.vehicle_length,
            standstill_margin: s.standstill_margin,
            queue_speed: s.queue_speed,
            detector_length: s.detector_length,
        }
    }
}

impl VehicleSection {
    pub fn sim_params(&self, dt: f64) -> SimParams {
        SimParams {
            kinematics: KinematicsParams { a_acc: self.a_acc, a_dec: self.a_dec, vmax: self.vmax, dt },
            vehicle_length: self.length,
            standstill_margin: self.standstill_margin,
            queue_speed: self.queue_speed,
            detector_length: self.detector_length,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub network: CorridorConfig,
    pub demand: DemandSection,
    pub vehicle: VehicleSection,
    pub controller: ControllerSection,
    pub trainer: TrainerConfig,
    pub evaluation: EvaluationSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let mut cfg = RunConfig::from_toml(&text)?;
        // model paths are relative to the config file
        if let (Some(m), Some(dir)) = (&cfg.controller.model, path.parent()) {
            if m.is_relative() {
                cfg.controller.model = Some(dir.join(m));
            }
        }
        Ok(cfg)
    }

    pub fn steps(&self) -> u64 {
        (self.evaluation.duration / self.evaluation.dt).round() as u64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let ev = &self.evaluation;
        if !(ev.dt.is_finite() && ev.dt > 0.0 && ev.duration.is_finite() && ev.duration >= 0.0) {
            return bad("evaluation.dt must be positive and evaluation.duration non-negative".into());
        }
        if (self.steps() as f64 * ev.dt - ev.duration).abs() > 1e-6 {
            return bad("evaluation.duration must be a whole number of steps".into());
        }
        if ev.seeds.is_empty() {
            return bad("evaluation.seeds is empty".into());
        }
        let mut seen = ev.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != ev.seeds.len() {
            return bad("evaluation.seeds has duplicates".into());
        }
        if !(ev.pet_max.is_finite() && ev.pet_max > 0.0) {
            return bad("evaluation.pet_max must be positive".into());
        }
        let episode = self.episode_config();
        episode.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let net = CorridorNetwork::build(&episode.network).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        SignalPlan::build(&self.controller.signal, &net.conflicts, net.lanes())
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.trainer.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.trainer.episode(&episode).validate().map_err(|e| ConfigError::Invalid(format!("trainer: {e}")))?;
        Ok(())
    }

    /// Episode settings of an evaluation run.
    pub fn episode_config(&self) -> EpisodeConfig {
        EpisodeConfig {
            network: self.network.clone(),
            demand: self.demand.resolve(),
            sim: self.vehicle.sim_params(self.evaluation.dt),
            steps: self.steps(),
            window: None,
            log: self.evaluation.log,
        }
    }

    /// The document with every default written out.
    pub fn effective(&self) -> RunConfig {
        RunConfig { demand: self.demand.effective(), ..self.clone() }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.steps(), 7200);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("[demand]\nregim = \"moderate\"\n").is_err());
        assert!(RunConfig::from_toml("[nonsense]\n").is_err());
    }

    #[test]
    fn presets_resolve() {
        let c = RunConfig::from_toml("[demand]\nregime = \"extreme\"\n").unwrap();
        assert_eq!(c.demand.resolve().major_vph, 2000.0);
        assert_eq!(c.demand.resolve().minor_vph, 1300.0);
        let c = RunConfig::from_toml("[demand]\nregime = \"high\"\nminor_vph = 10.0\n").unwrap();
        assert_eq!((c.demand.resolve().major_vph, c.demand.resolve().minor_vph), (1600.0, 10.0));
        assert!(RunConfig::from_toml("[demand]\nregime = \"gridlock\"\n").is_err());
    }

    #[test]
    fn effective_config_round_trips() {
        let c = RunConfig::from_toml("[evaluation]\nseeds = [3, 4]\nduration = 60.0\n").unwrap();
        let text = c.effective().to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, c.effective());
        assert_eq!(back.episode_config(), c.episode_config());
        assert!(text.contains("major_vph"));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_toml("[evaluation]\ndt = 0.0\n").is_err());
        assert!(RunConfig::from_toml("[evaluation]\nseeds = []\n").is_err());
        assert!(RunConfig::from_toml("[evaluation]\nduration = 10.25\n").is_err());
        assert!(RunConfig::from_toml("[trainer]\ngamma = 1.0\n").is_err());
        assert!(RunConfig::from_toml("[controller.signal]\nmin_green = 90.0\n").is_err());
    }
}
