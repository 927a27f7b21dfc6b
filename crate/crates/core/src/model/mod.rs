//! The full operator: encoder, parameter-free sampler, hierarchical decoder.
//! One trained weight set runs at any query resolution.

pub mod attention;
pub mod decoder;
pub mod encoder;
pub mod params;
pub mod sampler;

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{FsrError, Result};
use crate::fields::GridField;
use crate::ops::Activation;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

use decoder::{Decoder, DecoderConfig, HierarchySpec};
use encoder::{Encoder, EncoderConfig};
use params::{bind, load_checkpoint, save_checkpoint, Bound, ParamStore};
use sampler::{query_grid, render, FeatureMapMeta};

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub in_channels: usize,
    /// Encoder feature channels d_z.
    pub feat_channels: usize,
    pub enc_blocks: usize,
    /// Encoder upsample ratio, one of {1, 2, 4}.
    pub upsample_ratio: usize,
    pub activation: Activation,
    /// Hierarchy depth K.
    pub levels: usize,
    /// Attention width.
    pub d_h: usize,
    pub blocks_per_level: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    pub filter_taps: usize,
    /// Predict a correction added to the spectral resize of the input
    /// instead of the field itself.
    pub residual: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            in_channels: 1,
            feat_channels: 64,
            enc_blocks: 4,
            upsample_ratio: 2,
            activation: Activation::Gelu,
            levels: 2,
            d_h: 32,
            blocks_per_level: 2,
            heads: 4,
            ffn_mult: 2,
            filter_taps: 33,
            residual: false,
        }
    }
}

impl ModelConfig {
    pub fn ensembled_dim(&self) -> usize {
        4 * self.feat_channels + 10
    }

    fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            in_channels: self.in_channels,
            feat_channels: self.feat_channels,
            blocks: self.enc_blocks,
            ratio: self.upsample_ratio,
            activation: self.activation,
            bias: true,
        }
    }

    fn decoder_config(&self) -> DecoderConfig {
        DecoderConfig {
            in_dim: self.ensembled_dim(),
            out_channels: self.in_channels,
            hierarchy: HierarchySpec {
                levels: self.levels,
                d_h: self.d_h,
                blocks_per_level: self.blocks_per_level,
                heads: self.heads,
            },
            activation: self.activation,
            ffn_mult: self.ffn_mult,
            filter_taps: self.filter_taps,
        }
    }
}

pub struct Model<T: Scalar> {
    cfg: ModelConfig,
    pub store: ParamStore<T>,
    encoder: Encoder,
    decoder: Decoder,
}

/// Target extents for a real-valued scale factor, rounding half-up.
pub fn scaled_extents(extents: (usize, usize), s: f64) -> (usize, usize) {
    (
        (extents.0 as f64 * s + 0.5).floor() as usize,
        (extents.1 as f64 * s + 0.5).floor() as usize,
    )
}

const CFG_KEYS: [&str; 12] = [
    "in_channels",
    "feat_channels",
    "enc_blocks",
    "upsample_ratio",
    "activation",
    "levels",
    "d_h",
    "blocks_per_level",
    "heads",
    "ffn_mult",
    "filter_taps",
    "residual",
];

fn activation_code(a: Activation) -> f64 {
    match a {
        Activation::Relu => 0.0,
        Activation::Gelu => 1.0,
        Activation::LeakyRelu => 2.0,
        Activation::Elu => 3.0,
        Activation::Selu => 4.0,
    }
}

fn activation_from_code(c: f64) -> Result<Activation> {
    Ok(match c as i64 {
        0 => Activation::Relu,
        1 => Activation::Gelu,
        2 => Activation::LeakyRelu,
        3 => Activation::Elu,
        4 => Activation::Selu,
        other => {
            return Err(FsrError::Config(format!(
                "unknown activation code {} in checkpoint",
                other
            )))
        }
    })
}

impl<T: Scalar> Model<T> {
    pub fn init(cfg: ModelConfig, seed: u64) -> Result<Self> {
        let encoder = Encoder::new(cfg.encoder_config())?;
        let decoder = Decoder::new(cfg.decoder_config())?;
        if cfg.residual && cfg.in_channels != cfg.in_channels {
            unreachable!();
        }
        let mut store = ParamStore::new();
        // hyperparameters ride along in the checkpoint under __cfg.*
        let values = [
            cfg.in_channels as f64,
            cfg.feat_channels as f64,
            cfg.enc_blocks as f64,
            cfg.upsample_ratio as f64,
            activation_code(cfg.activation),
            cfg.levels as f64,
            cfg.d_h as f64,
            cfg.blocks_per_level as f64,
            cfg.heads as f64,
            cfg.ffn_mult as f64,
            cfg.filter_taps as f64,
            if cfg.residual { 1.0 } else { 0.0 },
        ];
        for (key, v) in CFG_KEYS.iter().zip(values) {
            store.insert(format!("__cfg.{}", key), Tensor::scalar(T::of_f64(v)))?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        encoder.register(&mut store, &mut rng)?;
        decoder.register(&mut store, &mut rng)?;
        Ok(Model {
            cfg,
            store,
            encoder,
            decoder,
        })
    }

    /// Rebuild a model around an existing parameter store (checkpoint load).
    pub fn from_store(store: ParamStore<T>) -> Result<Self> {
        let get = |key: &str| -> Result<f64> {
            Ok(store.get(&format!("__cfg.{}", key))?.item().as_f64())
        };
        let cfg = ModelConfig {
            in_channels: get("in_channels")? as usize,
            feat_channels: get("feat_channels")? as usize,
            enc_blocks: get("enc_blocks")? as usize,
            upsample_ratio: get("upsample_ratio")? as usize,
            activation: activation_from_code(get("activation")?)?,
            levels: get("levels")? as usize,
            d_h: get("d_h")? as usize,
            blocks_per_level: get("blocks_per_level")? as usize,
            heads: get("heads")? as usize,
            ffn_mult: get("ffn_mult")? as usize,
            filter_taps: get("filter_taps")? as usize,
            residual: get("residual")? != 0.0,
        };
        let encoder = Encoder::new(cfg.encoder_config())?;
        let decoder = Decoder::new(cfg.decoder_config())?;
        Ok(Model {
            cfg,
            store,
            encoder,
            decoder,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_store(load_checkpoint(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, &self.store)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn bind_on(&self, tape: &Tape<T>) -> Bound {
        bind(&self.store, tape)
    }

    /// Differentiable forward producing the `(d_b, ny, nx)` output field for
    /// an input registered on the tape as `input_var`.
    pub fn forward_on_tape(
        &self,
        tape: &Tape<T>,
        bound: &Bound,
        input_var: Var,
        field: &GridField<T>,
        target: (usize, usize),
    ) -> Result<Var> {
        let feat = self.encoder.forward(tape, bound, input_var)?;
        let fshape = tape.shape(feat);
        let meta = FeatureMapMeta {
            channels: fshape[0],
            h: fshape[1],
            w: fshape[2],
            domain: field.domain(),
        };
        let queries = query_grid(target.0, target.1, field.domain());
        let ensembled = render(tape, feat, &meta, &queries)?;
        let mut out = self.decoder.forward(tape, bound, ensembled, target.0, target.1)?;
        if self.cfg.residual {
            let base = tape.spectral_resize(input_var, target.0, target.1)?;
            out = tape.add(out, base)?;
        }
        Ok(out)
    }

    /// Flatten an output field to `(ny*nx, d_b)` rows and select a pixel
    /// subset (query-pixel supervision).
    pub fn gather_pixels(
        &self,
        tape: &Tape<T>,
        field_var: Var,
        subset: Arc<Vec<usize>>,
    ) -> Result<Var> {
        let shape = tape.shape(field_var);
        let (c, ny, nx) = (shape[0], shape[1], shape[2]);
        let flat = tape.reshape(field_var, &[c, ny * nx])?;
        let tokens = tape.transpose2(flat)?;
        tape.gather_rows(tokens, subset)
    }

    /// Inference: run the operator on a full field at the target extents.
    pub fn infer(&self, field: &GridField<T>, target: (usize, usize)) -> Result<GridField<T>> {
        if field.channels() != self.cfg.in_channels {
            return Err(FsrError::invalid(
                "infer",
                format!(
                    "model expects {} channels, field has {}",
                    self.cfg.in_channels,
                    field.channels()
                ),
            ));
        }
        let tape = Tape::new();
        let bound = self.bind_on(&tape);
        let input_var = tape.constant(field.values().clone());
        let out = self.forward_on_tape(&tape, &bound, input_var, field, target)?;
        GridField::new(tape.value(out).as_ref().clone(), field.domain())
    }
}
