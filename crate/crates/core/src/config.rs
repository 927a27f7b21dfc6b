//! TOML run and datagen configuration files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::{DataSource, DatagenConfig, GrfTemplate, TurbTemplate};
use crate::error::{FsrError, Result};
use crate::fields::Degradation;
use crate::model::ModelConfig;
use crate::ops::Activation;
use crate::train::{LossMode, TrainConfig};

fn default_one() -> f64 {
    1.0
}
fn default_beta() -> f64 {
    0.1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub encoder: EncoderSection,
    #[serde(default)]
    pub decoder: DecoderSection,
    #[serde(default)]
    pub hierarchy: HierarchySection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DataSection {
    pub degradation: Degradation,
    pub channels: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            degradation: Degradation::Spectral,
            channels: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct EncoderSection {
    pub feat_channels: usize,
    pub blocks: usize,
    pub ratio: usize,
    pub activation: String,
}

impl Default for EncoderSection {
    fn default() -> Self {
        EncoderSection {
            feat_channels: 64,
            blocks: 2,
            ratio: 2,
            activation: "gelu".to_string(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DecoderSection {
    pub ffn_mult: usize,
    pub filter_taps: usize,
    pub residual: bool,
}

impl Default for DecoderSection {
    fn default() -> Self {
        DecoderSection {
            ffn_mult: 2,
            filter_taps: 33,
            residual: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct HierarchySection {
    pub levels: usize,
    pub d_h: usize,
    pub blocks_per_level: usize,
    pub heads: usize,
}

impl Default for HierarchySection {
    fn default() -> Self {
        HierarchySection {
            levels: 2,
            d_h: 32,
            blocks_per_level: 2,
            heads: 4,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct LossSection {
    pub mode: String,
    #[serde(default = "default_one")]
    pub alpha_p: f64,
    #[serde(default = "default_beta")]
    pub beta_p: f64,
    #[serde(default = "default_one")]
    pub alpha_b: f64,
    #[serde(default = "default_beta")]
    pub beta_b: f64,
    #[serde(default)]
    pub split_step: usize,
    #[serde(default = "default_one")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        LossSection {
            mode: "l1".to_string(),
            alpha_p: 1.0,
            beta_p: 0.1,
            alpha_b: 1.0,
            beta_b: 0.1,
            split_step: 0,
            alpha: 1.0,
            beta: 0.1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub steps: usize,
    pub batch: usize,
    pub crop: usize,
    pub scale_lo: f64,
    pub scale_hi: f64,
    pub query_pixels: usize,
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            lr: 1e-3,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 2000,
            batch: 8,
            crop: 16,
            scale_lo: 1.0,
            scale_hi: 2.0,
            query_pixels: 256,
            eval_every: 200,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| FsrError::Config(format!("{}: {}", path.display(), e)))
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        Ok(ModelConfig {
            in_channels: self.data.channels,
            feat_channels: self.encoder.feat_channels,
            enc_blocks: self.encoder.blocks,
            upsample_ratio: self.encoder.ratio,
            activation: Activation::parse(&self.encoder.activation)?,
            levels: self.hierarchy.levels,
            d_h: self.hierarchy.d_h,
            blocks_per_level: self.hierarchy.blocks_per_level,
            heads: self.hierarchy.heads,
            ffn_mult: self.decoder.ffn_mult,
            filter_taps: self.decoder.filter_taps,
            residual: self.decoder.residual,
        })
    }

    pub fn loss_mode(&self) -> Result<LossMode> {
        match self.loss.mode.as_str() {
            "l1" => Ok(LossMode::L1),
            "focal" => Ok(LossMode::Focal {
                alpha_p: self.loss.alpha_p,
                beta_p: self.loss.beta_p,
                alpha_b: self.loss.alpha_b,
                beta_b: self.loss.beta_b,
            }),
            "two-stage" => Ok(LossMode::TwoStage {
                split_step: self.loss.split_step,
                alpha: self.loss.alpha,
                beta: self.loss.beta,
            }),
            other => Err(FsrError::Config(format!("unknown loss mode '{}'", other))),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            lr: self.train.lr,
            weight_decay: self.train.weight_decay,
            beta1: self.train.beta1,
            beta2: self.train.beta2,
            eps: self.train.eps,
            steps: self.train.steps,
            batch: self.train.batch,
            crop: self.train.crop,
            scale_lo: self.train.scale_lo,
            scale_hi: self.train.scale_hi,
            loss: self.loss_mode()?,
            query_pixels: self.train.query_pixels,
            seed: self.train.seed,
            eval_every: self.train.eval_every,
            degradation: self.data.degradation,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DatagenFile {
    pub source: DataSource,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grf: GrfSection,
    #[serde(default)]
    pub turb: TurbSection,
    pub splits: SplitsSection,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct GrfSection {
    pub extent: usize,
    pub gamma: f64,
    pub k_min: f64,
    pub k_max: f64,
}

impl Default for GrfSection {
    fn default() -> Self {
        GrfSection {
            extent: 48,
            gamma: 2.0,
            k_min: 1.0,
            k_max: 7.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TurbSection {
    pub extent: usize,
    pub viscosity: f64,
    pub dt: f64,
    pub steps_per_record: usize,
    pub k0: f64,
}

impl Default for TurbSection {
    fn default() -> Self {
        TurbSection {
            extent: 64,
            viscosity: 1e-3,
            dt: 1e-3,
            steps_per_record: 20,
            k0: 8.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SplitsSection {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl DatagenFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| FsrError::Config(format!("{}: {}", path.display(), e)))
    }

    pub fn to_datagen_config(&self) -> DatagenConfig {
        DatagenConfig {
            source: self.source,
            train: self.splits.train,
            valid: self.splits.valid,
            test: self.splits.test,
            seed: self.seed,
            grf: GrfTemplate {
                extent: self.grf.extent,
                gamma: self.grf.gamma,
                k_min: self.grf.k_min,
                k_max: self.grf.k_max,
            },
            turb: TurbTemplate {
                extent: self.turb.extent,
                viscosity: self.turb.viscosity,
                dt: self.turb.dt,
                steps_per_record: self.turb.steps_per_record,
                k0: self.turb.k0,
            },
        }
    }
}
