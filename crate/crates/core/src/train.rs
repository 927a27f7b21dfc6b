//! End-to-end optimization: AdamW, random-scale crop batching, L1 and
//! prior-weighted objectives, evaluation sweeps over arbitrary scales, and
//! checkpointing with exact resume.
//!
//! Determinism contract: the RNG stream for step `t` is derived from
//! `(seed, t)`, gradients from a batch are reduced in a fixed order, and the
//! optimizer state rides inside the checkpoint, so identical configs produce
//! bit-identical checkpoints and a resumed run continues the exact
//! trajectory of an uninterrupted one.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::datagen::derive_seed;
use crate::error::{FsrError, Result};
use crate::fields::{
    interp_baseline, make_pair, mse, psnr, random_crop, ssim, Degradation, GridField,
    InterpMethod,
};
use crate::loss::{
    focal_composite_loss, l1_loss, l2_loss, weight_map, weighted_l2_loss, FocalParams,
    PriorSource,
};
use crate::model::params::{bind, is_reserved};
use crate::model::{Model, scaled_extents};
use crate::scalar::Scalar;
use crate::spectral::spectral_resize;
use crate::tape::Tape;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum LossMode {
    L1,
    Focal {
        alpha_p: f64,
        beta_p: f64,
        alpha_b: f64,
        beta_b: f64,
    },
    TwoStage {
        split_step: usize,
        alpha: f64,
        beta: f64,
    },
}

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub steps: usize,
    pub batch: usize,
    /// LR crop extent fed to the encoder.
    pub crop: usize,
    pub scale_lo: f64,
    pub scale_hi: f64,
    pub loss: LossMode,
    /// Supervision pixels sampled per item.
    pub query_pixels: usize,
    pub seed: u64,
    /// Validation cadence in steps (0 disables).
    pub eval_every: usize,
    pub degradation: Degradation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
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
            loss: LossMode::L1,
            query_pixels: 256,
            seed: 0,
            eval_every: 200,
            degradation: Degradation::Spectral,
        }
    }
}

impl TrainConfig {
    fn validate(&self, hr_extent: usize) -> Result<()> {
        if self.scale_lo < 1.0 || self.scale_hi < self.scale_lo {
            return Err(FsrError::Config(format!(
                "scale range [{}, {}] invalid",
                self.scale_lo, self.scale_hi
            )));
        }
        let max_patch = (self.crop as f64 * self.scale_hi).round() as usize;
        if max_patch > hr_extent {
            return Err(FsrError::Config(format!(
                "crop {} at scale {} needs {} pixels, records have {}",
                self.crop, self.scale_hi, max_patch, hr_extent
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// AdamW
// ---------------------------------------------------------------------------

/// Decoupled-weight-decay Adam over a list of named tensors. Moments align
/// with parameter order, so state serialization is deterministic.
pub struct AdamW<T> {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: usize,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(cfg: &TrainConfig, shapes: &[Vec<usize>]) -> Self {
        AdamW {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            t: 0,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    /// One update: decay `theta *= 1 - lr*wd` first, then the bias-corrected
    /// moment step.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) {
        self.t += 1;
        let lr = T::of_f64(self.lr);
        let decay = T::of_f64(1.0 - self.lr * self.weight_decay);
        let b1 = T::of_f64(self.beta1);
        let b2 = T::of_f64(self.beta2);
        let one_m_b1 = T::of_f64(1.0 - self.beta1);
        let one_m_b2 = T::of_f64(1.0 - self.beta2);
        let bc1 = T::of_f64(1.0 - self.beta1.powi(self.t as i32));
        let bc2 = T::of_f64(1.0 - self.beta2.powi(self.t as i32));
        let eps = T::of_f64(self.eps);
        for ((theta, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..theta.numel() {
                let gi = g.data()[i];
                let mi = b1 * m.data()[i] + one_m_b1 * gi;
                let vi = b2 * v.data()[i] + one_m_b2 * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                let p = theta.data()[i] * decay;
                theta.data_mut()[i] = p - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

pub struct BatchItem<T> {
    pub lr: GridField<T>,
    pub hr: GridField<T>,
    pub scale: f64,
    pub query_idx: Arc<Vec<usize>>,
}

/// Per item: draw `s ~ U[lo, hi]`, crop an HR patch of extent
/// `round(crop * s)`, degrade it to exactly `crop` pixels, and pick the
/// supervision pixels.
pub fn make_batch<T: Scalar>(
    dataset: &[GridField<T>],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<BatchItem<T>>> {
    if dataset.is_empty() {
        return Err(FsrError::invalid("make-batch", "empty dataset"));
    }
    let mut out = Vec::with_capacity(cfg.batch);
    for _ in 0..cfg.batch {
        let record = &dataset[rng.gen_range(0..dataset.len())];
        let s = rng.gen_range(cfg.scale_lo..=cfg.scale_hi);
        let hr_extent = (cfg.crop as f64 * s).round() as usize;
        let hr = random_crop(record, hr_extent, hr_extent, rng)?;
        let lr_vals = if hr_extent == cfg.crop {
            hr.values().clone()
        } else {
            match cfg.degradation {
                Degradation::Spectral => spectral_resize(hr.values(), cfg.crop, cfg.crop)?,
                Degradation::Bicubic => {
                    interp_baseline(&hr, cfg.crop, cfg.crop, InterpMethod::Bicubic)?
                        .into_values()
                }
            }
        };
        let lr = GridField::new(lr_vals, hr.domain())?;
        let total = hr_extent * hr_extent;
        let take = cfg.query_pixels.min(total);
        // sample without replacement via a partial Fisher-Yates
        let mut pool: Vec<usize> = (0..total).collect();
        for k in 0..take {
            let j = rng.gen_range(k..total);
            pool.swap(k, j);
        }
        pool.truncate(take);
        out.push(BatchItem {
            lr,
            hr,
            scale: s,
            query_idx: Arc::new(pool),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct LogRow {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

pub struct TrainReport {
    pub log: Vec<LogRow>,
    pub final_ckpt: PathBuf,
    pub best_ckpt: Option<PathBuf>,
    pub best_valid_mse: Option<f64>,
}

pub fn log_csv(rows: &[LogRow]) -> String {
    let mut s = String::from("step,loss,lr\n");
    for r in rows {
        s.push_str(&format!("{},{:e},{:e}\n", r.step, r.loss, r.lr));
    }
    s
}

fn gather_target_pixels<T: Scalar>(hr: &GridField<T>, idx: &[usize]) -> Tensor<T> {
    let c = hr.channels();
    let (ny, nx) = hr.extents();
    Tensor::from_fn(&[idx.len(), c], |k| {
        let (q, ch) = (k / c, k % c);
        hr.values().data()[ch * ny * nx + idx[q]]
    })
}

struct ItemGrads<T> {
    loss: f64,
    grads: Vec<Tensor<T>>,
}

fn run_item<T: Scalar>(
    model: &Model<T>,
    frozen: Option<&Model<T>>,
    item: &BatchItem<T>,
    step: usize,
    cfg: &TrainConfig,
    names: &[String],
) -> Result<ItemGrads<T>> {
    let tape = Tape::new();
    let bound = bind(&model.store, &tape);
    let (ny, nx) = item.hr.extents();
    let input = tape.constant(item.lr.values().clone());
    let field = model.forward_on_tape(&tape, &bound, input, &item.lr, (ny, nx))?;
    let pred_pixels = model.gather_pixels(&tape, field, Arc::clone(&item.query_idx))?;
    let target_pixels = gather_target_pixels(&item.hr, &item.query_idx);

    let loss = match cfg.loss {
        LossMode::L1 => {
            let t = tape.constant(target_pixels);
            l1_loss(&tape, pred_pixels, t)?
        }
        LossMode::Focal {
            alpha_p,
            beta_p,
            alpha_b,
            beta_b,
        } => {
            let resize = spectral_resize(item.lr.values(), ny, nx)?;
            let resize_rows = gather_target_pixels(
                &GridField::new(resize, item.lr.domain())?,
                &item.query_idx,
            );
            focal_composite_loss(
                &tape,
                pred_pixels,
                &resize_rows,
                &target_pixels,
                FocalParams {
                    alpha_p,
                    beta_p,
                    alpha_b,
                    beta_b,
                },
            )?
        }
        LossMode::TwoStage { split_step, alpha, beta } => {
            let t = tape.constant(target_pixels);
            if step < split_step {
                l2_loss(&tape, pred_pixels, t)?
            } else {
                // prior from the frozen stage-1 model's prediction
                let frozen = frozen.expect("stage-2 requires frozen model");
                let pred1 = frozen.infer(&item.lr, (ny, nx))?;
                let resize = spectral_resize(item.lr.values(), ny, nx)?;
                let p_full = pred1
                    .values()
                    .zip(&resize, "two-stage-prior", |a, b| (a - b).abs())?;
                let p_rows = gather_target_pixels(
                    &GridField::new(p_full, item.lr.domain())?,
                    &item.query_idx,
                );
                let w = weight_map(&p_rows, alpha, beta, PriorSource::PredictionVsResize)?;
                weighted_l2_loss(&tape, pred_pixels, t, &w.weights)?
            }
        }
    };
    let loss_value = tape.value(loss).item().as_f64();
    tape.backward(loss)?;
    let grads = names
        .iter()
        .map(|n| Ok(tape.grad(bound.var(n)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ItemGrads {
        loss: loss_value,
        grads,
    })
}

fn param_norm_dump<T: Scalar>(model: &Model<T>) -> String {
    let mut parts = Vec::new();
    for (name, t) in model.store.iter() {
        if !is_reserved(name) {
            parts.push(format!("{}={:.3e}", name, t.norm_l2().as_f64()));
        }
    }
    parts.join(" ")
}

/// Full-field validation MSE at the top training scale.
fn validate<T: Scalar>(model: &Model<T>, valid: &[GridField<T>], cfg: &TrainConfig) -> Result<f64> {
    let mut total = 0.0;
    for record in valid {
        let pair = make_pair(record, cfg.scale_hi.max(1.5), cfg.degradation)?;
        let pred = model.infer(&pair.lr, pair.hr.extents())?;
        total += mse(&pred, &pair.hr)?;
    }
    Ok(total / valid.len() as f64)
}

const OPT_STEP_KEY: &str = "__opt.t";

fn persist_optimizer<T: Scalar>(model: &mut Model<T>, opt: &AdamW<T>, names: &[String]) -> Result<()> {
    let has = model.store.get(OPT_STEP_KEY).is_ok();
    if has {
        model.store.set(OPT_STEP_KEY, Tensor::scalar(T::of_f64(opt.t as f64)))?;
        for (i, n) in names.iter().enumerate() {
            model.store.set(&format!("__opt.m.{}", n), opt.m[i].clone())?;
            model.store.set(&format!("__opt.v.{}", n), opt.v[i].clone())?;
        }
    } else {
        model
            .store
            .insert(OPT_STEP_KEY, Tensor::scalar(T::of_f64(opt.t as f64)))?;
        for (i, n) in names.iter().enumerate() {
            model.store.insert(format!("__opt.m.{}", n), opt.m[i].clone())?;
            model.store.insert(format!("__opt.v.{}", n), opt.v[i].clone())?;
        }
    }
    Ok(())
}

fn restore_optimizer<T: Scalar>(model: &Model<T>, opt: &mut AdamW<T>, names: &[String]) -> Result<bool> {
    if model.store.get(OPT_STEP_KEY).is_err() {
        return Ok(false);
    }
    opt.t = model.store.get(OPT_STEP_KEY)?.item().as_f64() as usize;
    for (i, n) in names.iter().enumerate() {
        opt.m[i] = model.store.get(&format!("__opt.m.{}", n))?.as_ref().clone();
        opt.v[i] = model.store.get(&format!("__opt.v.{}", n))?.as_ref().clone();
    }
    Ok(true)
}

/// Optimize `model` in place. Resumes from the optimizer state embedded in
/// the store when present (loaded checkpoints); step indices and their RNG
/// streams continue exactly where the saved run stopped.
pub fn train<T: Scalar>(
    model: &mut Model<T>,
    train_data: &[GridField<T>],
    valid_data: &[GridField<T>],
    cfg: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainReport> {
    if train_data.is_empty() {
        return Err(FsrError::invalid("train", "empty training set"));
    }
    if let LossMode::Focal { .. } = cfg.loss {
        if !model.config().residual {
            return Err(FsrError::Config(
                "focal loss requires the residual output mode".to_string(),
            ));
        }
    }
    let (hr_ny, hr_nx) = train_data[0].extents();
    cfg.validate(hr_ny.min(hr_nx))?;
    std::fs::create_dir_all(out_dir)?;

    let names: Vec<String> = model
        .store
        .names()
        .filter(|n| !is_reserved(n))
        .map(|s| s.to_string())
        .collect();
    let shapes: Vec<Vec<usize>> = names
        .iter()
        .map(|n| model.store.get(n).map(|t| t.shape().to_vec()))
        .collect::<Result<_>>()?;
    let mut opt = AdamW::new(cfg, &shapes);
    let resumed = restore_optimizer(model, &mut opt, &names)?;
    let start_step = if resumed { opt.t } else { 0 };

    let mut frozen: Option<Model<T>> = None;
    let mut log = Vec::with_capacity(cfg.steps.saturating_sub(start_step));
    let mut best: Option<(f64, PathBuf)> = None;

    for step in start_step..cfg.steps {
        if let LossMode::TwoStage { split_step, .. } = cfg.loss {
            if step >= split_step && frozen.is_none() {
                // snapshot the stage-1 weights once at the boundary
                let snap = out_dir.join("stage1.ckpt");
                model.save(&snap)?;
                frozen = Some(Model::load(&snap)?);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1, step as u64));
        let batch = make_batch(train_data, cfg, &mut rng)?;

        let results: Vec<Result<ItemGrads<T>>> = if batch.len() > 1 {
            batch
                .par_iter()
                .map(|item| run_item(&*model, frozen.as_ref(), item, step, cfg, &names))
                .collect()
        } else {
            batch
                .iter()
                .map(|item| run_item(&*model, frozen.as_ref(), item, step, cfg, &names))
                .collect()
        };

        let mut loss_sum = 0.0;
        let mut grad_acc: Vec<Tensor<T>> = shapes.iter().map(|s| Tensor::zeros(s)).collect();
        let inv_b = T::of_f64(1.0 / batch.len() as f64);
        for r in results {
            let r = r?;
            loss_sum += r.loss;
            for (acc, g) in grad_acc.iter_mut().zip(&r.grads) {
                acc.axpy(inv_b, g);
            }
        }
        let loss = loss_sum / batch.len() as f64;
        if !loss.is_finite() {
            return Err(FsrError::Training {
                step,
                msg: format!("non-finite loss; parameter norms: {}", param_norm_dump(model)),
            });
        }

        let mut params: Vec<Tensor<T>> = names
            .iter()
            .map(|n| model.store.get(n).map(|t| t.as_ref().clone()))
            .collect::<Result<_>>()?;
        opt.step(&mut params, &grad_acc);
        for (n, p) in names.iter().zip(params) {
            model.store.set(n, p)?;
        }

        log.push(LogRow {
            step,
            loss,
            lr: cfg.lr,
        });

        if cfg.eval_every > 0 && !valid_data.is_empty() && (step + 1) % cfg.eval_every == 0 {
            let vmse = validate(model, valid_data, cfg)?;
            if best.as_ref().map_or(true, |(b, _)| vmse < *b) {
                let path = out_dir.join("best.ckpt");
                persist_optimizer(model, &opt, &names)?;
                model.save(&path)?;
                best = Some((vmse, path));
            }
        }
    }

    persist_optimizer(model, &opt, &names)?;
    let final_ckpt = out_dir.join("final.ckpt");
    model.save(&final_ckpt)?;
    std::fs::write(out_dir.join("train_log.csv"), log_csv(&log))?;
    Ok(TrainReport {
        log,
        final_ckpt,
        best_ckpt: best.as_ref().map(|(_, p)| p.clone()),
        best_valid_mse: best.map(|(b, _)| b),
    })
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct EvalRow {
    pub scale: f64,
    pub variant: String,
    pub mse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug)]
pub struct RecordRow {
    pub record: usize,
    pub scale: f64,
    pub mse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

pub struct EvalReport {
    pub summary: Vec<EvalRow>,
    pub per_record: Vec<RecordRow>,
}

impl EvalReport {
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("scale,variant,mse,psnr,ssim\n");
        for r in &self.summary {
            s.push_str(&format!(
                "{},{},{:e},{},{}\n",
                r.scale, r.variant, r.mse, fmt_db(r.psnr), r.ssim
            ));
        }
        s
    }

    pub fn per_record_csv(&self) -> String {
        let mut s = String::from("record,scale,mse,psnr,ssim\n");
        for r in &self.per_record {
            s.push_str(&format!(
                "{},{},{:e},{},{}\n",
                r.record, r.scale, r.mse, fmt_db(r.psnr), r.ssim
            ));
        }
        s
    }

    pub fn mean_psnr(&self, scale: f64, variant: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| r.scale == scale && r.variant == variant)
            .map(|r| r.psnr)
    }
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{:.4}", v)
    }
}

/// For each scale: build pairs, run full-field inference, report model and
/// interpolation-baseline metrics.
pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    test_data: &[GridField<T>],
    scales: &[f64],
    degradation: Degradation,
) -> Result<EvalReport> {
    let mut summary = Vec::new();
    let mut per_record = Vec::new();
    for &s in scales {
        let mut sums: Vec<(f64, f64, f64)> = vec![(0.0, 0.0, 0.0); 4];
        let variants = ["model", "nearest", "bilinear", "bicubic"];
        for (rec, hr) in test_data.iter().enumerate() {
            let pair = make_pair(hr, s, degradation)?;
            let target = (hr.extents().0, hr.extents().1);
            let outputs: Vec<GridField<T>> = vec![
                model.infer(&pair.lr, target)?,
                interp_baseline(&pair.lr, target.0, target.1, InterpMethod::Nearest)?,
                interp_baseline(&pair.lr, target.0, target.1, InterpMethod::Bilinear)?,
                interp_baseline(&pair.lr, target.0, target.1, InterpMethod::Bicubic)?,
            ];
            for (vi, out) in outputs.iter().enumerate() {
                let m = mse(out, hr)?;
                let p = psnr(out, hr, None)?;
                let q = ssim(out, hr, None)?;
                sums[vi].0 += m;
                sums[vi].1 += p;
                sums[vi].2 += q;
                if vi == 0 {
                    per_record.push(RecordRow {
                        record: rec,
                        scale: s,
                        mse: m,
                        psnr: p,
                        ssim: q,
                    });
                }
            }
        }
        let n = test_data.len() as f64;
        for (vi, name) in variants.iter().enumerate() {
            summary.push(EvalRow {
                scale: s,
                variant: name.to_string(),
                mse: sums[vi].0 / n,
                psnr: sums[vi].1 / n,
                ssim: sums[vi].2 / n,
            });
        }
    }
    Ok(EvalReport {
        summary,
        per_record,
    })
}

/// Inference entry used by the CLI: arbitrary (possibly non-integer) scale
/// or explicit output extents.
pub fn infer_field<T: Scalar>(
    model: &Model<T>,
    field: &GridField<T>,
    scale: Option<f64>,
    out_extents: Option<(usize, usize)>,
) -> Result<GridField<T>> {
    let target = match (scale, out_extents) {
        (Some(s), None) => scaled_extents(field.extents(), s),
        (None, Some(e)) => e,
        _ => {
            return Err(FsrError::invalid(
                "infer",
                "provide exactly one of scale or output extents",
            ))
        }
    };
    model.infer(field, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::DomainBox;
    use crate::model::ModelConfig;
    use crate::ops::Activation;

    fn tiny_model(seed: u64) -> Model<f32> {
        Model::init(
            ModelConfig {
                in_channels: 1,
                feat_channels: 4,
                enc_blocks: 1,
                upsample_ratio: 2,
                activation: Activation::Gelu,
                levels: 2,
                d_h: 8,
                blocks_per_level: 1,
                heads: 2,
                ffn_mult: 2,
                filter_taps: 9,
                residual: false,
            },
            seed,
        )
        .unwrap()
    }

    fn tiny_dataset(n: usize, extent: usize, seed: u64) -> Vec<GridField<f32>> {
        (0..n)
            .map(|i| {
                crate::datagen::generate_grf(&crate::datagen::GrfSpec {
                    extent,
                    gamma: 1.0,
                    k_min: 1.0,
                    k_max: (extent / 4) as f64,
                    seed: derive_seed(seed, 7, i as u64),
                })
                .unwrap()
                .cast::<f32>()
            })
            .collect()
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            steps: 4,
            batch: 2,
            crop: 8,
            scale_lo: 1.0,
            scale_hi: 2.0,
            query_pixels: 32,
            eval_every: 0,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn adamw_zero_grad_zero_decay_is_identity() {
        let mut cfgd = TrainConfig::default();
        cfgd.weight_decay = 0.0;
        let mut opt = AdamW::<f64>::new(&cfgd, &[vec![3]]);
        let mut params = vec![Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap()];
        let grads = vec![Tensor::zeros(&[3])];
        for _ in 0..5 {
            opt.step(&mut params, &grads);
        }
        assert_eq!(params[0].data(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn adamw_constant_grad_step_approaches_lr() {
        let mut cfgd = TrainConfig::default();
        cfgd.lr = 0.01;
        cfgd.weight_decay = 0.0;
        let mut opt = AdamW::<f64>::new(&cfgd, &[vec![1]]);
        let mut params = vec![Tensor::scalar(0.0f64)];
        let grads = vec![Tensor::scalar(0.7f64)];
        let mut last = 0.0;
        for _ in 0..300 {
            last = params[0].item();
            opt.step(&mut params, &grads);
        }
        let delta = (params[0].item() - last).abs();
        assert!(
            (delta - 0.01).abs() < 1e-4,
            "per-step move {} should approach lr",
            delta
        );
        assert!(params[0].item() < 0.0);
    }

    #[test]
    fn adamw_pure_decay_with_zero_grad() {
        let mut cfgd = TrainConfig::default();
        cfgd.lr = 0.1;
        cfgd.weight_decay = 0.5;
        let mut opt = AdamW::<f64>::new(&cfgd, &[vec![1]]);
        let mut params = vec![Tensor::scalar(2.0f64)];
        let grads = vec![Tensor::scalar(0.0f64)];
        opt.step(&mut params, &grads);
        assert!((params[0].item() - 2.0 * (1.0 - 0.05)).abs() < 1e-12);
    }

    #[test]
    fn adamw_converges_to_least_squares() {
        // 1-parameter linear model, L2 objective; oracle from the normal
        // equations: w* = sum(x y) / sum(x^2)
        let xs = [0.5f64, 1.0, -0.7, 2.0, 1.5];
        let ys = [1.1f64, 2.1, -1.2, 4.2, 3.0];
        let w_star: f64 =
            xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / xs.iter().map(|x| x * x).sum::<f64>();
        let mut cfgd = TrainConfig::default();
        cfgd.lr = 0.05;
        cfgd.weight_decay = 0.0;
        let mut opt = AdamW::<f64>::new(&cfgd, &[vec![1]]);
        let mut params = vec![Tensor::scalar(0.0f64)];
        for _ in 0..2000 {
            let w = params[0].item();
            let g: f64 = xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| 2.0 * (w * x - y) * x)
                .sum::<f64>()
                / xs.len() as f64;
            opt.step(&mut params, &[Tensor::scalar(g)]);
        }
        assert!(
            (params[0].item() - w_star).abs() < 1e-4,
            "{} vs {}",
            params[0].item(),
            w_star
        );
    }

    #[test]
    fn batch_fixed_scale_and_determinism() {
        let data = tiny_dataset(3, 32, 5);
        let mut cfg = tiny_cfg();
        cfg.scale_lo = 2.0;
        cfg.scale_hi = 2.0;
        cfg.batch = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let batch = make_batch(&data, &cfg, &mut rng).unwrap();
        for item in &batch {
            assert_eq!(item.scale, 2.0);
            assert_eq!(item.lr.extents(), (8, 8));
            assert_eq!(item.hr.extents(), (16, 16));
        }
        let b1 = make_batch(&data, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b2 = make_batch(&data, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for (a, b) in b1.iter().zip(&b2) {
            assert_eq!(a.hr.values().data(), b.hr.values().data());
            assert_eq!(a.query_idx, b.query_idx);
        }
    }

    #[test]
    fn batch_scales_are_uniform() {
        // KS test against U[1, 4] over 10^4 draws
        let data = tiny_dataset(1, 64, 2);
        let mut cfg = tiny_cfg();
        cfg.crop = 8;
        cfg.scale_lo = 1.0;
        cfg.scale_hi = 4.0;
        cfg.batch = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let batch = make_batch(&data, &cfg, &mut rng).unwrap();
        let mut s: Vec<f64> = batch.iter().map(|b| b.scale).collect();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = s.len() as f64;
        let mut d: f64 = 0.0;
        for (i, &v) in s.iter().enumerate() {
            let cdf = (v - 1.0) / 3.0;
            d = d.max(((i + 1) as f64 / n - cdf).abs());
            d = d.max((cdf - i as f64 / n).abs());
        }
        // asymptotic Kolmogorov p-value
        let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
        let mut p = 0.0;
        for k in 1..101 {
            let kf = k as f64;
            p += 2.0 * (-1.0f64).powi(k + 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        }
        assert!(p > 0.01, "KS p-value {} (D = {})", p, d);
    }

    #[test]
    fn train_smoke_and_determinism() {
        let data = tiny_dataset(3, 24, 8);
        let valid = tiny_dataset(1, 24, 9);
        let cfg = tiny_cfg();
        let run = |dir: &Path| {
            let mut model = tiny_model(1);
            train(&mut model, &data, &valid, &cfg, dir).unwrap();
            std::fs::read(dir.join("final.ckpt")).unwrap()
        };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        assert_eq!(run(d1.path()), run(d2.path()));
        // log exists with the right header
        let log = std::fs::read_to_string(d1.path().join("train_log.csv")).unwrap();
        assert!(log.starts_with("step,loss,lr\n"));
        assert_eq!(log.lines().count(), 1 + 4);
    }

    #[test]
    fn resume_reproduces_uninterrupted_trajectory() {
        let data = tiny_dataset(3, 24, 8);
        let cfg_full = TrainConfig {
            steps: 6,
            ..tiny_cfg()
        };
        let cfg_half = TrainConfig {
            steps: 3,
            ..tiny_cfg()
        };

        let d_full = tempfile::tempdir().unwrap();
        let mut m_full = tiny_model(2);
        train(&mut m_full, &data, &[], &cfg_full, d_full.path()).unwrap();

        let d_half = tempfile::tempdir().unwrap();
        let mut m_half = tiny_model(2);
        train(&mut m_half, &data, &[], &cfg_half, d_half.path()).unwrap();
        let mut resumed = Model::<f32>::load(&d_half.path().join("final.ckpt")).unwrap();
        let d_resume = tempfile::tempdir().unwrap();
        train(&mut resumed, &data, &[], &cfg_full, d_resume.path()).unwrap();

        let full = std::fs::read(d_full.path().join("final.ckpt")).unwrap();
        let cont = std::fs::read(d_resume.path().join("final.ckpt")).unwrap();
        assert_eq!(full, cont);
    }

    #[test]
    fn second_moments_flow_after_first_step() {
        let data = tiny_dataset(2, 24, 11);
        let cfg = TrainConfig {
            steps: 1,
            ..tiny_cfg()
        };
        let dir = tempfile::tempdir().unwrap();
        let mut model = tiny_model(3);
        train(&mut model, &data, &[], &cfg, dir.path()).unwrap();
        let mut nonzero = 0usize;
        let mut total = 0usize;
        for name in model.store.names().filter(|n| n.starts_with("__opt.v.")) {
            let t = model.store.get(name).unwrap();
            nonzero += t.data().iter().filter(|v| **v != 0.0).count();
            total += t.numel();
        }
        assert!(
            nonzero as f64 >= 0.99 * total as f64,
            "{} of {} second moments non-zero",
            nonzero,
            total
        );
    }

    #[test]
    fn focal_beta_zero_matches_l1_in_residual_mode() {
        let data = tiny_dataset(2, 24, 13);
        let mut cfg = tiny_cfg();
        cfg.batch = 2;
        let mut model_cfg = ModelConfig {
            in_channels: 1,
            feat_channels: 4,
            enc_blocks: 1,
            upsample_ratio: 2,
            activation: Activation::Gelu,
            levels: 2,
            d_h: 8,
            blocks_per_level: 1,
            heads: 2,
            ffn_mult: 2,
            filter_taps: 9,
            residual: true,
        };
        let model = Model::<f32>::init(model_cfg, 4).unwrap();
        model_cfg.residual = true;
        let names: Vec<String> = model
            .store
            .names()
            .filter(|n| !is_reserved(n))
            .map(|s| s.to_string())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let batch = make_batch(&data, &cfg, &mut rng).unwrap();
        for item in &batch {
            cfg.loss = LossMode::Focal {
                alpha_p: 1.0,
                beta_p: 0.0,
                alpha_b: 1.0,
                beta_b: 0.0,
            };
            let focal = run_item(&model, None, item, 0, &cfg, &names).unwrap().loss;
            cfg.loss = LossMode::L1;
            let plain = run_item(&model, None, item, 0, &cfg, &names).unwrap().loss;
            assert!((focal - plain).abs() < 1e-10, "{} vs {}", focal, plain);
        }
    }

    #[test]
    fn focal_without_residual_mode_rejected() {
        let data = tiny_dataset(2, 24, 19);
        let mut cfg = tiny_cfg();
        cfg.loss = LossMode::Focal {
            alpha_p: 1.0,
            beta_p: 0.1,
            alpha_b: 1.0,
            beta_b: 0.1,
        };
        let dir = tempfile::tempdir().unwrap();
        let mut model = tiny_model(5);
        assert!(train(&mut model, &data, &[], &cfg, dir.path()).is_err());
    }

    #[test]
    fn two_stage_weight_maps_frozen_in_stage_two() {
        let data = tiny_dataset(2, 24, 23);
        let cfg = TrainConfig {
            steps: 4,
            loss: LossMode::TwoStage {
                split_step: 2,
                alpha: 1.0,
                beta: 0.1,
            },
            ..tiny_cfg()
        };
        let dir = tempfile::tempdir().unwrap();
        let mut model = tiny_model(6);
        train(&mut model, &data, &[], &cfg, dir.path()).unwrap();
        // the stage-1 snapshot exists; its predictions define the frozen maps
        let frozen = Model::<f32>::load(&dir.path().join("stage1.ckpt")).unwrap();
        let item_rng = &mut ChaCha8Rng::seed_from_u64(1);
        let batch = make_batch(&data, &cfg, item_rng).unwrap();
        let item = &batch[0];
        let map_at = |_: usize| {
            let pred = frozen.infer(&item.lr, item.hr.extents()).unwrap();
            let resize =
                spectral_resize(item.lr.values(), item.hr.extents().0, item.hr.extents().1)
                    .unwrap();
            let p = pred.values().zip(&resize, "t", |a, b| (a - b).abs()).unwrap();
            weight_map(&p, 1.0, 0.1, PriorSource::PredictionVsResize)
                .unwrap()
                .weights
        };
        let w2 = map_at(2);
        let w3 = map_at(3);
        assert_eq!(w2.data(), w3.data());
    }

    #[test]
    fn evaluate_perfect_oracle_and_baseline_identity() {
        let data = tiny_dataset(2, 16, 29);
        // scale 1: LR == HR, every baseline is the identity
        let model = tiny_model(7);
        let report = evaluate(&model, &data, &[1.0], Degradation::Spectral).unwrap();
        for variant in ["nearest", "bilinear", "bicubic"] {
            let psnr = report.mean_psnr(1.0, variant).unwrap();
            assert!(psnr.is_infinite(), "{} at x1 should be exact", variant);
        }
        let csv = report.summary_csv();
        assert!(csv.contains("inf"));
        assert!(csv.starts_with("scale,variant,mse,psnr,ssim\n"));
    }

    #[test]
    fn infer_field_scale_rounding() {
        let model = tiny_model(8);
        let f = tiny_dataset(1, 16, 31)[0].clone();
        let out = infer_field(&model, &f, Some(1.4), None).unwrap();
        // 16 * 1.4 = 22.4 -> 22 (round half-up)
        assert_eq!(out.extents(), (22, 22));
        let out = infer_field(&model, &f, Some(1.5), None).unwrap();
        assert_eq!(out.extents(), (24, 24));
        assert!(infer_field(&model, &f, Some(2.0), Some((3, 3))).is_err());
    }
}
