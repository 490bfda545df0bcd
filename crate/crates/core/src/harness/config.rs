use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::oltc::OltcConfig;
use crate::dsp::{MelConfig, StftConfig};
use crate::env::{CoreModel, EnvConfig};
use crate::error::{Error, Result};
use crate::nn::SgdConfig;
use crate::rl::{Algo, DqnConfig, PpoConfig, RlConfig};
use crate::synth::{DenoiseConfig, NoiseColor, SynthConfig};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "TRAFO_NN_CONFIG";

/// CNN training settings for the OLTC experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NnSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for NnSection {
    fn default() -> Self {
        let d = OltcConfig::default();
        Self {
            epochs: d.epochs,
            learning_rate: d.sgd.learning_rate,
            momentum: d.sgd.momentum,
            batch_size: d.sgd.batch_size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DspSection {
    pub stft: StftConfig,
    pub mel: MelConfig,
    pub top_db: f64,
}

impl Default for DspSection {
    fn default() -> Self {
        let d = OltcConfig::default();
        Self {
            stft: d.stft,
            mel: d.mel,
            top_db: d.top_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub sample_rate_hz: f64,
    pub segment_samples: usize,
    pub jitter: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub snr_levels_db: Vec<f64>,
    pub noise_color: NoiseColor,
    pub denoise: DenoiseConfig,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = OltcConfig::default();
        Self {
            sample_rate_hz: d.synth.sample_rate_hz,
            segment_samples: d.synth.segment_samples,
            jitter: d.synth.jitter,
            train_per_class: d.train_per_class,
            test_per_class: d.test_per_class,
            snr_levels_db: d.snr_levels_db,
            noise_color: d.noise_color,
            denoise: d.denoise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentSection {
    pub algorithms: Vec<Algo>,
    pub steps: u64,
    pub eval_episodes: usize,
    pub dqn: DqnConfig,
    pub ppo: PpoConfig,
}

impl Default for AgentSection {
    fn default() -> Self {
        let d = RlConfig::default();
        Self {
            algorithms: Algo::ALL.to_vec(),
            steps: d.steps,
            eval_episodes: d.eval_episodes,
            dqn: d.dqn,
            ppo: d.ppo,
        }
    }
}

/// Resolved configuration for every command. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub nn: NnSection,
    pub dsp: DspSection,
    pub synth: SynthSection,
    pub core: CoreModel,
    pub env: EnvConfig,
    pub agent: AgentSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            output_dir: PathBuf::from("out"),
            nn: NnSection::default(),
            dsp: DspSection::default(),
            synth: SynthSection::default(),
            core: CoreModel::default(),
            env: EnvConfig::default(),
            agent: AgentSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes to TOML")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// `explicit`, else the file named by `TRAFO_NN_CONFIG`, else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self> {
        if let Some(p) = explicit {
            return Self::load(p);
        }
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
            _ => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.oltc().validate()?;
        self.rl().validate()?;
        if self.agent.algorithms.is_empty() {
            return Err(Error::Config("agent.algorithms must list at least one algorithm".into()));
        }
        Ok(())
    }

    pub fn oltc(&self) -> OltcConfig {
        OltcConfig {
            seed: self.seed,
            train_per_class: self.synth.train_per_class,
            test_per_class: self.synth.test_per_class,
            synth: SynthConfig {
                sample_rate_hz: self.synth.sample_rate_hz,
                segment_samples: self.synth.segment_samples,
                seed: self.seed,
                jitter: self.synth.jitter,
            },
            stft: self.dsp.stft,
            mel: self.dsp.mel,
            top_db: self.dsp.top_db,
            epochs: self.nn.epochs,
            sgd: SgdConfig {
                learning_rate: self.nn.learning_rate,
                momentum: self.nn.momentum,
                batch_size: self.nn.batch_size,
                seed: 0,
            },
            snr_levels_db: self.synth.snr_levels_db.clone(),
            noise_color: self.synth.noise_color,
            denoise: self.synth.denoise,
        }
    }

    pub fn rl(&self) -> RlConfig {
        RlConfig {
            core: self.core,
            env: self.env,
            dqn: self.agent.dqn,
            ppo: self.agent.ppo,
            steps: self.agent.steps,
            eval_episodes: self.agent.eval_episodes,
        }
    }
}
