//! Encoder: hybrid spatial/Fourier upsampling placed at the network onset,
//! followed by residual conv blocks at the refined resolution.

use rand::Rng;

use crate::error::{FsrError, Result};
use crate::model::params::{glorot, init_conv, Bound, ParamStore};
use crate::ops::Activation;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct EncoderConfig {
    pub in_channels: usize,
    pub feat_channels: usize,
    pub blocks: usize,
    /// Upsample ratio, one of {1, 2, 4}.
    pub ratio: usize,
    pub activation: Activation,
    pub bias: bool,
}

impl EncoderConfig {
    fn validate(&self) -> Result<()> {
        if ![1, 2, 4].contains(&self.ratio) {
            return Err(FsrError::invalid(
                "encoder",
                format!("upsample ratio must be 1, 2 or 4, got {}", self.ratio),
            ));
        }
        if self.feat_channels < self.in_channels {
            return Err(FsrError::invalid(
                "encoder",
                "feature channels must be at least the input channels",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Encoder {
    cfg: EncoderConfig,
}

impl Encoder {
    pub fn new(cfg: EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Encoder { cfg })
    }

    pub fn init<T: Scalar>(
        cfg: EncoderConfig,
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let enc = Self::new(cfg)?;
        enc.register(store, rng)?;
        Ok(enc)
    }

    pub fn register<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut impl Rng) -> Result<()> {
        let cfg = &self.cfg;
        let (da, dz) = (cfg.in_channels, cfg.feat_channels);
        if cfg.ratio == 1 {
            store.insert("enc.stem.w", init_conv(dz, da, 3, rng))?;
            if cfg.bias {
                store.insert("enc.stem.b", Tensor::zeros(&[dz]))?;
            }
        } else {
            store.insert("enc.up.spatial.w", init_conv(dz, da, 3, rng))?;
            store.insert(
                "enc.up.fourier.w",
                glorot(&[dz, da, 1, 1], da, dz, rng),
            )?;
            if cfg.bias {
                store.insert("enc.up.spatial.b", Tensor::zeros(&[dz]))?;
                store.insert("enc.up.fourier.b", Tensor::zeros(&[dz]))?;
            }
        }
        for b in 0..cfg.blocks {
            store.insert(format!("enc.block{}.c1.w", b), init_conv(dz, dz, 3, rng))?;
            store.insert(format!("enc.block{}.c2.w", b), init_conv(dz, dz, 3, rng))?;
            if cfg.bias {
                store.insert(format!("enc.block{}.c1.b", b), Tensor::zeros(&[dz]))?;
                store.insert(format!("enc.block{}.c2.b", b), Tensor::zeros(&[dz]))?;
            }
        }
        Ok(())
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    fn bias_var(&self, bound: &Bound, name: &str) -> Result<Option<Var>> {
        if self.cfg.bias {
            Ok(Some(bound.var(name)?))
        } else {
            Ok(None)
        }
    }

    /// Spatial branch (zero-interleave + 3x3 conv) plus Fourier branch
    /// (spectral resize + 1x1 conv), summed. Identity at ratio 1.
    pub fn hybrid_upsample<T: Scalar>(
        &self,
        tape: &Tape<T>,
        bound: &Bound,
        x: Var,
    ) -> Result<Var> {
        let r = self.cfg.ratio;
        if r == 1 {
            return Ok(x);
        }
        let shape = tape.shape(x);
        let (h, w) = (shape[1], shape[2]);
        let stuffed = tape.zero_interleave(x, r)?;
        let spatial = tape.conv2d(
            stuffed,
            bound.var("enc.up.spatial.w")?,
            self.bias_var(bound, "enc.up.spatial.b")?,
        )?;
        let resized = tape.spectral_resize(x, r * h, r * w)?;
        let fourier = tape.conv2d(
            resized,
            bound.var("enc.up.fourier.w")?,
            self.bias_var(bound, "enc.up.fourier.b")?,
        )?;
        tape.add(spatial, fourier)
    }

    /// `(d_a, H, W) -> (d_z, rH, rW)`.
    pub fn forward<T: Scalar>(&self, tape: &Tape<T>, bound: &Bound, input: Var) -> Result<Var> {
        let shape = tape.shape(input);
        if shape.len() != 3 || shape[0] != self.cfg.in_channels {
            return Err(FsrError::invalid(
                "encode",
                format!(
                    "expected ({}, H, W) input, got {:?}",
                    self.cfg.in_channels, shape
                ),
            ));
        }
        let mut h = if self.cfg.ratio == 1 {
            tape.conv2d(
                input,
                bound.var("enc.stem.w")?,
                self.bias_var(bound, "enc.stem.b")?,
            )?
        } else {
            self.hybrid_upsample(tape, bound, input)?
        };
        for b in 0..self.cfg.blocks {
            let c1 = tape.conv2d(
                h,
                bound.var(&format!("enc.block{}.c1.w", b))?,
                self.bias_var(bound, &format!("enc.block{}.c1.b", b))?,
            )?;
            let a = tape.activation(c1, self.cfg.activation)?;
            let c2 = tape.conv2d(
                a,
                bound.var(&format!("enc.block{}.c2.w", b))?,
                self.bias_var(bound, &format!("enc.block{}.c2.b", b))?,
            )?;
            h = tape.add(h, c2)?;
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::bind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build(ratio: usize, bias: bool) -> (Encoder, ParamStore<f64>) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let enc = Encoder::init(
            EncoderConfig {
                in_channels: 1,
                feat_channels: 6,
                blocks: 2,
                ratio,
                activation: Activation::Gelu,
                bias,
            },
            &mut store,
            &mut rng,
        )
        .unwrap();
        (enc, store)
    }

    #[test]
    fn rejects_bad_ratio() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = EncoderConfig {
            in_channels: 1,
            feat_channels: 4,
            blocks: 1,
            ratio: 3,
            activation: Activation::Relu,
            bias: true,
        };
        assert!(Encoder::init(cfg, &mut store, &mut rng).is_err());
    }

    #[test]
    fn shape_contract_output_is_ratio_times_input() {
        for ratio in [1usize, 2, 4] {
            let (enc, store) = build(ratio, true);
            let tape = Tape::<f64>::new();
            let bound = bind(&store, &tape);
            let x = tape.constant(Tensor::from_fn(&[1, 8, 8], |i| (i as f64 * 0.1).sin()));
            let out = enc.forward(&tape, &bound, x).unwrap();
            assert_eq!(tape.shape(out), vec![6, 8 * ratio, 8 * ratio]);
        }
    }

    #[test]
    fn deterministic_forward() {
        let (enc, store) = build(2, true);
        let run = || {
            let tape = Tape::<f64>::new();
            let bound = bind(&store, &tape);
            let x = tape.constant(Tensor::from_fn(&[1, 8, 8], |i| (i as f64 * 0.3).cos()));
            let out = enc.forward(&tape, &bound, x).unwrap();
            tape.value(out).data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn zero_input_zero_output_without_bias() {
        let (enc, store) = build(2, false);
        let tape = Tape::<f64>::new();
        let bound = bind(&store, &tape);
        let x = tape.constant(Tensor::zeros(&[1, 8, 8]));
        let out = enc.forward(&tape, &bound, x).unwrap();
        assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_weights_zero_output() {
        // with all weights and biases zero, encode is identically zero
        let (enc, mut store) = build(2, true);
        let names: Vec<String> = store.names().map(|s| s.to_string()).collect();
        for n in names {
            let shape = store.get(&n).unwrap().shape().to_vec();
            store.set(&n, Tensor::zeros(&shape)).unwrap();
        }
        let tape = Tape::<f64>::new();
        let bound = bind(&store, &tape);
        let x = tape.constant(Tensor::from_fn(&[1, 6, 6], |i| i as f64));
        let out = enc.forward(&tape, &bound, x).unwrap();
        assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn channel_mismatch_is_error() {
        let (enc, store) = build(2, true);
        let tape = Tape::<f64>::new();
        let bound = bind(&store, &tape);
        let x = tape.constant(Tensor::zeros(&[2, 8, 8]));
        assert!(enc.forward(&tape, &bound, x).is_err());
    }

    #[test]
    fn hybrid_upsample_grad_check_both_branches() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let enc = Encoder::init(
            EncoderConfig {
                in_channels: 1,
                feat_channels: 3,
                blocks: 0,
                ratio: 2,
                activation: Activation::Relu,
                bias: true,
            },
            &mut store,
            &mut rng,
        )
        .unwrap();
        let mut inputs = vec![Tensor::from_fn(&[1, 4, 4], |_| rng.gen_range(-1.0..1.0))];
        let names: Vec<String> = store.names().map(|s| s.to_string()).collect();
        for n in &names {
            inputs.push(store.get(n).unwrap().as_ref().clone());
        }
        let weight = Tensor::from_fn(&[3, 8, 8], |_| rng.gen_range(-1.0..1.0));
        let err = crate::tape::grad_check_fn(&inputs, 1e-5, move |tape, vars| {
            let mut map = std::collections::HashMap::new();
            for (i, n) in names.iter().enumerate() {
                map.insert(n.clone(), vars[i + 1]);
            }
            let bound = Bound::from_map(map);
            let out = enc.hybrid_upsample(tape, &bound, vars[0])?;
            let w = tape.constant(weight.clone());
            let p = tape.mul(out, w)?;
            tape.sum(p)
        })
        .unwrap();
        assert!(err < 1e-4, "hybrid upsample grad err {}", err);
    }

    #[test]
    fn all_parameters_receive_gradients() {
        let (enc, store) = build(2, true);
        let tape = Tape::<f64>::new();
        let bound = bind(&store, &tape);
        let x = tape.constant(Tensor::from_fn(&[1, 8, 8], |i| ((i * 7 % 13) as f64) - 6.0));
        let out = enc.forward(&tape, &bound, x).unwrap();
        let sq = tape.mul(out, out).unwrap();
        let loss = tape.mean(sq).unwrap();
        tape.backward(loss).unwrap();
        let mut nonzero = 0usize;
        let mut total = 0usize;
        for name in store.names() {
            let g = tape.grad(bound.var(name).unwrap());
            nonzero += g.data().iter().filter(|&&v| v != 0.0).count();
            total += g.numel();
        }
        assert!(
            nonzero as f64 >= 0.99 * total as f64,
            "{}/{} gradients non-zero",
            nonzero,
            total
        );
    }
}
