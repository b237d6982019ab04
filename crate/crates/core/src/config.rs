//! Run configuration: a TOML file of flat `[section]` tables.
//!
//! ```toml
//! seed = 7
//! [world]
//! kind = "labeled_mixture"
//! num_labels = 4
//! [schedule]
//! steps = 200
//! beta_start = 5e-4
//! beta_end = 0.1
//! [model]
//! hidden = [64, 64, 64]
//! [pipeline]
//! pool_size = 50
//! top_k = 1
//! ```
//!
//! Every key is optional. Seeds inside sections are salts mixed into the
//! global `seed`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::denoiser::{Activation, CondEncoding, MlpConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::metrics::AgreementConfig;
use crate::pipeline::PipelineConfig;
use crate::schedule::ScheduleParams;
use crate::seed::{self, stream};
use crate::world::{GaussianWorld, WorldKind, WorldParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub hidden: Vec<usize>,
    pub time_features: usize,
    /// Label embedding width (labeled worlds only).
    pub embed_dim: usize,
    pub activation: Activation,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64, 64],
            time_features: 16,
            embed_dim: 8,
            activation: Activation::Silu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MiMode {
    #[default]
    Generate,
    Forward,
}

/// Settings of the `mi` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiParams {
    pub mode: MiMode,
    /// Samples scored (spread over labels for labeled worlds).
    pub samples: usize,
    /// Timesteps per sample in forward mode.
    pub n_mc: usize,
    pub guidance: f64,
}

impl Default for MiParams {
    fn default() -> Self {
        Self {
            mode: MiMode::Generate,
            samples: 1000,
            n_mc: 16,
            guidance: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AgreementDenoiser {
    #[default]
    Oracle,
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgreementParams {
    /// Run the study as part of `mitune`.
    pub enabled: bool,
    pub denoiser: AgreementDenoiser,
    pub prompts: usize,
    pub pool_size: usize,
    pub guidance: f64,
}

impl Default for AgreementParams {
    fn default() -> Self {
        Self {
            enabled: true,
            denoiser: AgreementDenoiser::Oracle,
            prompts: 64,
            pool_size: 50,
            guidance: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputParams {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub world: WorldParams,
    pub schedule: ScheduleParams,
    pub model: ModelParams,
    pub train: TrainConfig,
    pub pipeline: PipelineConfig,
    pub mi: MiParams,
    pub agreement: AgreementParams,
    pub output: OutputParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            world: WorldParams::default(),
            schedule: ScheduleParams {
                steps: 200,
                beta_start: 5e-4,
                beta_end: 0.1,
                ..ScheduleParams::default()
            },
            model: ModelParams::default(),
            train: TrainConfig::default(),
            pipeline: PipelineConfig::default(),
            mi: MiParams::default(),
            agreement: AgreementParams::default(),
            output: OutputParams::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads and validates `path`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg = Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks every section without doing any numerical work.
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        let world = self.world.build()?;
        self.mlp_config(&world).validate()?;
        self.train.validate(self.schedule.steps)?;
        if let Some(c) = world.num_labels() {
            self.pipeline.validate(c, self.schedule.steps)?;
            if self.agreement.pool_size < 3 || self.agreement.prompts == 0 {
                return Err(Error::InvalidParameter(
                    "agreement needs prompts >= 1 and pool_size >= 3".into(),
                ));
            }
        }
        if self.mi.samples == 0 || self.mi.n_mc == 0 {
            return Err(Error::InvalidParameter("mi samples and n_mc must be positive".into()));
        }
        if !(self.mi.guidance.is_finite() && self.mi.guidance >= 0.0)
            || !(self.agreement.guidance.is_finite() && self.agreement.guidance >= 0.0)
        {
            return Err(Error::InvalidParameter("guidance must be a non-negative number".into()));
        }
        Ok(())
    }

    pub fn build_world(&self) -> Result<GaussianWorld> {
        self.world.build()
    }

    pub fn mlp_config(&self, world: &GaussianWorld) -> MlpConfig {
        let cond = match self.world.kind {
            WorldKind::LabeledMixture => CondEncoding::Labels {
                num_labels: world.num_labels().unwrap_or(self.world.num_labels),
                embed_dim: self.model.embed_dim,
            },
            WorldKind::CorrelatedGaussian => CondEncoding::Vector {
                len: self.world.dim,
            },
        };
        MlpConfig {
            data_dim: world.dim(),
            hidden: self.model.hidden.clone(),
            time_features: self.model.time_features,
            cond,
            activation: self.model.activation,
        }
    }

    pub fn model_seed(&self) -> u64 {
        seed::derive(self.seed, &[stream::INIT])
    }

    /// Base-training config with the global seed mixed in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: seed::derive(self.seed, &[stream::TRAIN, self.train.seed]),
            ..self.train.clone()
        }
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            seed: seed::derive(self.seed, &[stream::POOL, self.pipeline.seed]),
            ..self.pipeline.clone()
        }
    }

    pub fn mi_seed(&self) -> u64 {
        seed::derive(self.seed, &[stream::MI])
    }

    pub fn agreement_config(&self) -> AgreementConfig {
        AgreementConfig {
            prompts: self.agreement.prompts,
            pool_size: self.agreement.pool_size,
            sampler: crate::sampler::SamplerConfig {
                guidance: self.agreement.guidance,
                ..Default::default()
            },
            seed: seed::derive(self.seed, &[stream::AGREEMENT]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.seed = 11;
        cfg.pipeline.prompts = vec![0, 2, 2];
        cfg.pipeline.finetune.t_lo = Some(5);
        cfg.output.dir = Some("runs/x".into());
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn sections_parse() {
        let cfg = RunConfig::from_toml(
            "seed = 3\n[world]\nkind = \"correlated_gaussian\"\ndim = 4\nrho = 0.5\n\
             [schedule]\nsteps = 50\nbeta_start = 1e-3\nbeta_end = 0.2\n\
             [pipeline]\ntop_k = 2\n[pipeline.adapter]\nrank = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.world.kind, WorldKind::CorrelatedGaussian);
        assert_eq!(cfg.schedule.steps, 50);
        assert_eq!(cfg.pipeline.top_k, 2);
        assert_eq!(cfg.pipeline.adapter.rank, 2);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("[world]\nwidth = 3\n").is_err());
        assert!(RunConfig::from_toml("[nonsense]\n").is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let bad_beta = RunConfig::from_toml("[schedule]\nsteps = 10\nbeta_start = 0.5\nbeta_end = 0.1\n").unwrap();
        assert!(bad_beta.validate().unwrap_err().is_config());
        let bad_k = RunConfig::from_toml("[pipeline]\npool_size = 3\ntop_k = 4\n").unwrap();
        assert!(bad_k.validate().unwrap_err().is_config());
        let bad_world = RunConfig::from_toml("[world]\ndata_sigma = -1.0\n").unwrap();
        assert!(bad_world.validate().is_err());
    }

    #[test]
    fn missing_file_names_path() {
        let e = RunConfig::load(Path::new("/nonexistent/cfg.toml")).unwrap_err();
        assert!(e.is_config());
        assert!(e.to_string().contains("/nonexistent/cfg.toml"));
    }

    #[test]
    fn seeds_follow_global_seed() {
        let a = RunConfig::default();
        let b = RunConfig {
            seed: 1,
            ..RunConfig::default()
        };
        assert_ne!(a.train_config().seed, b.train_config().seed);
        assert_ne!(a.pipeline_config().seed, b.pipeline_config().seed);
        assert_ne!(a.model_seed(), a.mi_seed());
    }
}
