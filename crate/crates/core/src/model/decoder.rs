//! Decoder: lifting, a K-level U-Net of Galerkin attention blocks with
//! anti-aliased inter-level resampling, and projection to the output field.
//!
//! Level 1 is the query grid; each deeper level halves the extents and the
//! bandwidth. Transitions use fixed half-band windowed-sinc filters so the
//! same weights run at any query resolution.

use std::sync::Arc;

use rand::Rng;

use crate::error::{FsrError, Result};
use crate::model::attention::AttentionLayer;
use crate::model::params::{init_dense, Bound, ParamStore};
use crate::ops::{Activation, STANDARDIZE_EPS};
use crate::scalar::Scalar;
use crate::spectral::SincFilter;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Static hierarchy description; per-level grid extents and bandwidths are
/// derived from the query grid at run time (extents halve each level, as do
/// bandwidths, starting from the level-1 Nyquist).
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct HierarchySpec {
    pub levels: usize,
    pub d_h: usize,
    pub blocks_per_level: usize,
    pub heads: usize,
}

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct DecoderConfig {
    /// Ensembled-feature width fed to lifting (4 d_z + 10).
    pub in_dim: usize,
    pub out_channels: usize,
    pub hierarchy: HierarchySpec,
    pub activation: Activation,
    pub ffn_mult: usize,
    pub filter_taps: usize,
}

impl DecoderConfig {
    fn validate(&self) -> Result<()> {
        if self.in_dim <= self.hierarchy.d_h {
            return Err(FsrError::invalid(
                "decoder",
                format!(
                    "lifting must expand: in_dim {} <= d_h {}",
                    self.in_dim, self.hierarchy.d_h
                ),
            ));
        }
        if self.hierarchy.d_h <= self.out_channels {
            return Err(FsrError::invalid(
                "decoder",
                format!(
                    "projection must contract: d_h {} <= out channels {}",
                    self.hierarchy.d_h, self.out_channels
                ),
            ));
        }
        if self.hierarchy.levels == 0 {
            return Err(FsrError::invalid("decoder", "need at least one level"));
        }
        Ok(())
    }
}

/// Per-level `(n_y, n_x)` extents and bandwidths for a query grid. The
/// level-1 bandwidth is the grid Nyquist (extent / 4 cycles per unit on a
/// width-2 box) and halves with the extents.
#[derive(Clone, Debug)]
pub struct LevelLayout {
    pub extents: Vec<(usize, usize)>,
    pub bandwidths: Vec<f64>,
}

/// Damping applied at init to the closing layer of each residual branch.
const RESIDUAL_INIT_SCALE: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct Decoder {
    cfg: DecoderConfig,
    stages: Vec<StageNames>,
}

#[derive(Clone, Debug)]
struct StageNames {
    blocks: Vec<BlockNames>,
}

#[derive(Clone, Debug)]
struct BlockNames {
    attn: AttentionLayer,
    ffn1_w: String,
    ffn1_b: String,
    ffn2_w: String,
    ffn2_b: String,
}

impl Decoder {
    pub fn new(cfg: DecoderConfig) -> Result<Self> {
        cfg.validate()?;
        let mut stage_prefixes: Vec<String> = Vec::new();
        for k in 0..cfg.hierarchy.levels - 1 {
            stage_prefixes.push(format!("dec.down{}", k));
        }
        stage_prefixes.push("dec.mid".to_string());
        for k in (0..cfg.hierarchy.levels - 1).rev() {
            stage_prefixes.push(format!("dec.up{}", k));
        }

        let mut stages = Vec::with_capacity(stage_prefixes.len());
        for prefix in &stage_prefixes {
            let mut blocks = Vec::with_capacity(cfg.hierarchy.blocks_per_level);
            for j in 0..cfg.hierarchy.blocks_per_level {
                let bp = format!("{}.b{}", prefix, j);
                let attn = AttentionLayer::new(
                    &format!("{}.attn", bp),
                    cfg.hierarchy.d_h,
                    cfg.hierarchy.heads,
                    true,
                )?;
                blocks.push(BlockNames {
                    attn,
                    ffn1_w: format!("{}.ffn.l1.w", bp),
                    ffn1_b: format!("{}.ffn.l1.b", bp),
                    ffn2_w: format!("{}.ffn.l2.w", bp),
                    ffn2_b: format!("{}.ffn.l2.b", bp),
                });
            }
            stages.push(StageNames { blocks });
        }
        Ok(Decoder { cfg, stages })
    }

    pub fn register<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut impl Rng) -> Result<()> {
        let cfg = &self.cfg;
        let d = cfg.hierarchy.d_h;
        store.insert("dec.lift.l1.w", init_dense(cfg.in_dim, d, rng))?;
        store.insert("dec.lift.l1.b", Tensor::zeros(&[d]))?;
        store.insert("dec.lift.l2.w", init_dense(d, d, rng))?;
        store.insert("dec.lift.l2.b", Tensor::zeros(&[d]))?;
        for stage in &self.stages {
            for block in &stage.blocks {
                block.attn.register(store, rng)?;
                let hidden = cfg.ffn_mult * d;
                store.insert(block.ffn1_w.clone(), init_dense(d, hidden, rng))?;
                store.insert(block.ffn1_b.clone(), Tensor::zeros(&[hidden]))?;
                store.insert(block.ffn2_w.clone(), init_dense(hidden, d, rng))?;
                store.insert(block.ffn2_b.clone(), Tensor::zeros(&[d]))?;
                // near-identity residual paths at init: damp the last layer of
                // each branch so block output starts close to its input while
                // every weight still carries gradient
                let scale = T::of_f64(RESIDUAL_INIT_SCALE);
                store.update(&format!("{}.wo", block.attn.prefix), |t| {
                    t.scale_inplace(scale)
                })?;
                store.update(&block.ffn2_w, |t| t.scale_inplace(scale))?;
            }
        }
        store.insert("dec.proj.l1.w", init_dense(d, d, rng))?;
        store.insert("dec.proj.l1.b", Tensor::zeros(&[d]))?;
        store.insert("dec.proj.l2.w", init_dense(d, cfg.out_channels, rng))?;
        store.insert("dec.proj.l2.b", Tensor::zeros(&[cfg.out_channels]))?;
        Ok(())
    }

    pub fn init<T: Scalar>(
        cfg: DecoderConfig,
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let dec = Self::new(cfg)?;
        dec.register(store, rng)?;
        Ok(dec)
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.cfg
    }

    /// Per-level extents/bandwidths, or an error when the query grid cannot
    /// support the hierarchy depth.
    pub fn level_layout(&self, ny: usize, nx: usize) -> Result<LevelLayout> {
        let k = self.cfg.hierarchy.levels;
        let min_extent = 1usize << k;
        if ny < min_extent || nx < min_extent {
            return Err(FsrError::invalid(
                "decode",
                format!(
                    "hierarchy too deep for grid: {} levels need extents >= {}, got {}x{}",
                    k, min_extent, ny, nx
                ),
            ));
        }
        let mut extents = vec![(ny, nx)];
        let mut bandwidths = vec![ny.min(nx) as f64 / 4.0];
        for lvl in 1..k {
            let (py, px) = extents[lvl - 1];
            extents.push((py.div_ceil(2), px.div_ceil(2)));
            bandwidths.push(bandwidths[lvl - 1] / 2.0);
        }
        Ok(LevelLayout {
            extents,
            bandwidths,
        })
    }

    /// Pointwise 2-layer lifting, `(m, in_dim) -> (m, d_h)`.
    pub fn lift<T: Scalar>(&self, tape: &Tape<T>, bound: &Bound, z: Var) -> Result<Var> {
        let h = tape.matmul(z, bound.var("dec.lift.l1.w")?)?;
        let h = tape.add_row_bias(h, bound.var("dec.lift.l1.b")?)?;
        let h = tape.activation(h, self.cfg.activation)?;
        let h = tape.matmul(h, bound.var("dec.lift.l2.w")?)?;
        tape.add_row_bias(h, bound.var("dec.lift.l2.b")?)
    }

    /// Projection `(m, d_h) -> (m, d_b)`.
    pub fn project<T: Scalar>(&self, tape: &Tape<T>, bound: &Bound, h: Var) -> Result<Var> {
        let p = tape.matmul(h, bound.var("dec.proj.l1.w")?)?;
        let p = tape.add_row_bias(p, bound.var("dec.proj.l1.b")?)?;
        let p = tape.activation(p, self.cfg.activation)?;
        let p = tape.matmul(p, bound.var("dec.proj.l2.w")?)?;
        tape.add_row_bias(p, bound.var("dec.proj.l2.b")?)
    }

    fn run_block<T: Scalar>(
        &self,
        tape: &Tape<T>,
        bound: &Bound,
        block: &BlockNames,
        h: Var,
    ) -> Result<Var> {
        // pre-normalized attention with residual
        let n1 = tape.layer_stat_normalize(h, STANDARDIZE_EPS)?;
        let a = block.attn.forward(tape, bound, n1)?;
        let h = tape.add(h, a)?;
        // pre-normalized feed-forward with residual
        let n2 = tape.layer_stat_normalize(h, STANDARDIZE_EPS)?;
        let f = tape.matmul(n2, bound.var(&block.ffn1_w)?)?;
        let f = tape.add_row_bias(f, bound.var(&block.ffn1_b)?)?;
        let f = tape.activation(f, self.cfg.activation)?;
        let f = tape.matmul(f, bound.var(&block.ffn2_w)?)?;
        let f = tape.add_row_bias(f, bound.var(&block.ffn2_b)?)?;
        tape.add(h, f)
    }

    /// All blocks of one stage (identified by its prefix index).
    pub fn run_stage<T: Scalar>(
        &self,
        tape: &Tape<T>,
        bound: &Bound,
        stage: usize,
        mut h: Var,
    ) -> Result<Var> {
        for block in &self.stages[stage].blocks {
            h = self.run_block(tape, bound, block, h)?;
        }
        Ok(h)
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    fn tokens_to_field<T: Scalar>(
        tape: &Tape<T>,
        h: Var,
        d: usize,
        ny: usize,
        nx: usize,
    ) -> Result<Var> {
        let t = tape.transpose2(h)?;
        tape.reshape(t, &[d, ny, nx])
    }

    fn field_to_tokens<T: Scalar>(
        tape: &Tape<T>,
        f: Var,
        d: usize,
        ny: usize,
        nx: usize,
    ) -> Result<Var> {
        let r = tape.reshape(f, &[d, ny * nx])?;
        tape.transpose2(r)
    }

    /// Sinc anti-aliased halving of a token grid, `(ny, nx) -> layout` of
    /// the next level.
    pub fn descend<T: Scalar>(
        &self,
        tape: &Tape<T>,
        taps: &Arc<Vec<T>>,
        h: Var,
        from: (usize, usize),
        to: (usize, usize),
    ) -> Result<Var> {
        let d = self.cfg.hierarchy.d_h;
        let field = Self::tokens_to_field(tape, h, d, from.0, from.1)?;
        let down = tape.sinc_downsample(field, Arc::clone(taps), 2)?;
        Self::field_to_tokens(tape, down, d, to.0, to.1)
    }

    /// Zero-interleave + interpolation back to the finer level, cropping to
    /// its exact extents when they are odd.
    pub fn ascend<T: Scalar>(
        &self,
        tape: &Tape<T>,
        taps: &Arc<Vec<T>>,
        h: Var,
        from: (usize, usize),
        to: (usize, usize),
    ) -> Result<Var> {
        let d = self.cfg.hierarchy.d_h;
        let field = Self::tokens_to_field(tape, h, d, from.0, from.1)?;
        let up = tape.sinc_upsample(field, Arc::clone(taps), 2, to.0, to.1)?;
        Self::field_to_tokens(tape, up, d, to.0, to.1)
    }

    fn interp_taps<T: Scalar>(&self) -> Arc<Vec<T>> {
        Arc::new(
            SincFilter::<T>::interp_for_factor(2, self.cfg.filter_taps)
                .taps()
                .to_vec(),
        )
    }

    fn down_taps<T: Scalar>(&self) -> Arc<Vec<T>> {
        Arc::new(SincFilter::<T>::half_band(self.cfg.filter_taps).taps().to_vec())
    }

    /// Full decode: `(m = ny*nx, in_dim)` ensembled features on the query
    /// grid to an `(out_channels, ny, nx)` field.
    pub fn forward<T: Scalar>(
        &self,
        tape: &Tape<T>,
        bound: &Bound,
        z: Var,
        ny: usize,
        nx: usize,
    ) -> Result<Var> {
        let zshape = tape.shape(z);
        if zshape.len() != 2 || zshape[0] != ny * nx || zshape[1] != self.cfg.in_dim {
            return Err(FsrError::invalid(
                "decode",
                format!(
                    "expected ({}x{}, {}) features, got {:?}",
                    ny, nx, self.cfg.in_dim, zshape
                ),
            ));
        }
        let layout = self.level_layout(ny, nx)?;
        let levels = self.cfg.hierarchy.levels;
        let down_taps = self.down_taps::<T>();
        let up_taps = self.interp_taps::<T>();

        let mut h = self.lift(tape, bound, z)?;
        let mut skips: Vec<Var> = Vec::with_capacity(levels.saturating_sub(1));
        for k in 0..levels - 1 {
            h = self.run_stage(tape, bound, k, h)?;
            skips.push(h);
            h = self.descend(tape, &down_taps, h, layout.extents[k], layout.extents[k + 1])?;
        }
        h = self.run_stage(tape, bound, levels - 1, h)?;
        for k in (0..levels - 1).rev() {
            h = self.ascend(tape, &up_taps, h, layout.extents[k + 1], layout.extents[k])?;
            h = tape.add(h, skips[k])?;
            let stage = 2 * levels - 2 - k;
            h = self.run_stage(tape, bound, stage, h)?;
        }
        let out = self.project(tape, bound, h)?;
        Self::tokens_to_field(tape, out, self.cfg.out_channels, ny, nx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::bind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build(levels: usize, d_h: usize, in_dim: usize) -> (Decoder, ParamStore<f64>) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(500 + levels as u64);
        let dec = Decoder::init(
            DecoderConfig {
                in_dim,
                out_channels: 1,
                hierarchy: HierarchySpec {
                    levels,
                    d_h,
                    blocks_per_level: 1,
                    heads: 2,
                },
                activation: Activation::Gelu,
                ffn_mult: 2,
                filter_taps: 9,
            },
            &mut store,
            &mut rng,
        )
        .unwrap();
        (dec, store)
    }

    fn random_features(m: usize, dim: usize, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(&[m, dim], |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn output_extents_match_query_extents() {
        let (dec, store) = build(2, 8, 14);
        for (ny, nx) in [(8usize, 8usize), (12, 16), (23, 23)] {
            let tape = Tape::<f64>::new();
            let bound = bind(&store, &tape);
            let z = tape.constant(random_features(ny * nx, 14, 3));
            let out = dec.forward(&tape, &bound, z, ny, nx).unwrap();
            assert_eq!(tape.shape(out), vec![1, ny, nx]);
        }
    }

    #[test]
    fn hierarchy_too_deep_is_an_error() {
        let (dec, store) = build(3, 8, 14);
        let tape = Tape::<f64>::new();
        let bound = bind(&store, &tape);
        let z = tape.constant(random_features(6 * 6, 14, 4));
        let err = dec.forward(&tape, &bound, z, 6, 6).unwrap_err();
        assert!(err.to_string().contains("hierarchy too deep"));
    }

    #[test]
    fn single_level_matches_flat_composition_bitwise() {
        let (dec, store) = build(1, 8, 14);
        let (ny, nx) = (6, 5);
        let z = random_features(ny * nx, 14, 9);

        let tape = Tape::<f64>::new();
        let bound = bind(&store, &tape);
        let zv = tape.constant(z.clone());
        let out = dec.forward(&tape, &bound, zv, ny, nx).unwrap();
        let got = tape.value(out);

        // flat model: lift -> mid blocks -> projection, no resampling
        let tape2 = Tape::<f64>::new();
        let bound2 = bind(&store, &tape2);
        let zv2 = tape2.constant(z);
        let h = dec.lift(&tape2, &bound2, zv2).unwrap();
        let h = dec.run_stage(&tape2, &bound2, 0, h).unwrap();
        let p = dec.project(&tape2, &bound2, h).unwrap();
        let t = tape2.transpose2(p).unwrap();
        let f = tape2.reshape(t, &[1, ny, nx]).unwrap();
        assert_eq!(got.data(), tape2.value(f).data());
    }

    #[test]
    fn zero_weights_zero_output() {
        let (dec, mut store) = build(2, 8, 14);
        let names: Vec<String> = store.names().map(|s| s.to_string()).collect();
        for n in names {
            let shape = store.get(&n).unwrap().shape().to_vec();
            store.set(&n, Tensor::zeros(&shape)).unwrap();
        }
        let tape = Tape::<f64>::new();
        let bound = bind(&store, &tape);
        let z = tape.constant(random_features(8 * 8, 14, 12));
        let out = dec.forward(&tape, &bound, z, 8, 8).unwrap();
        assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn residual_branch_smaller_than_input_at_init() {
        let (dec, store) = build(1, 8, 14);
        let tape = Tape::<f64>::new();
        let bound = bind(&store, &tape);
        let h0 = random_features(30, 8, 2);
        let hv = tape.constant(h0.clone());
        let out = dec.run_stage(&tape, &bound, 0, hv).unwrap();
        let residual: f64 = tape
            .value(out)
            .data()
            .iter()
            .zip(h0.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let input = h0.norm_l2();
        assert!(
            residual < input,
            "residual norm {} vs input norm {}",
            residual,
            input
        );
    }

    #[test]
    fn block_shape_preserved_and_batch_permutation() {
        let (dec, store) = build(1, 8, 14);
        let tape = Tape::<f64>::new();
        let bound = bind(&store, &tape);
        let h0 = random_features(12, 8, 6);
        let hv = tape.constant(h0.clone());
        let out = dec.run_stage(&tape, &bound, 0, hv).unwrap();
        assert_eq!(tape.shape(out), vec![12, 8]);
    }

    #[test]
    fn descend_ascend_round_trip_on_bandlimited_field() {
        // full-width filter and periodic low modes, well under the half-band
        // cutoff of the coarser level
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(900);
        let dec = Decoder::init(
            DecoderConfig {
                in_dim: 14,
                out_channels: 1,
                hierarchy: HierarchySpec {
                    levels: 2,
                    d_h: 4,
                    blocks_per_level: 1,
                    heads: 2,
                },
                activation: Activation::Gelu,
                ffn_mult: 2,
                filter_taps: 33,
            },
            &mut store,
            &mut rng,
        )
        .unwrap();
        let (ny, nx) = (16, 16);
        let modes = [(1.0, 0.0), (2.0, 1.0), (0.0, 2.0), (1.0, 1.0)];
        let field = Tensor::<f64>::from_fn(&[4, ny, nx], |i| {
            let ch = i / (ny * nx);
            let r = (i / nx) % ny;
            let q = i % nx;
            let (kx, ky) = modes[ch];
            (2.0 * std::f64::consts::PI * (kx * q as f64 + ky * r as f64) / nx as f64
                + ch as f64)
                .cos()
        });
        let tape = Tape::<f64>::new();
        let taps_d = dec.down_taps::<f64>();
        let taps_u = dec.interp_taps::<f64>();
        let f = tape.constant(field.clone());
        let tokens = Decoder::field_to_tokens(&tape, f, 4, ny, nx).unwrap();
        let down = dec.descend(&tape, &taps_d, tokens, (ny, nx), (8, 8)).unwrap();
        let up = dec.ascend(&tape, &taps_u, down, (8, 8), (ny, nx)).unwrap();
        let back = Decoder::tokens_to_field(&tape, up, 4, ny, nx).unwrap();
        let rel = tape.value(back).rel_l2_diff(&field);
        assert!(rel < 1e-3, "round trip err {}", rel);
    }

    #[test]
    fn descend_constant_through_both() {
        let (dec, _store) = build(2, 4, 14);
        let tape = Tape::<f64>::new();
        let taps_d = dec.down_taps::<f64>();
        let taps_u = dec.interp_taps::<f64>();
        let tokens = tape.constant(Tensor::filled(&[64, 4], 2.0));
        let down = dec.descend(&tape, &taps_d, tokens, (8, 8), (4, 4)).unwrap();
        for &v in tape.value(down).data() {
            assert!((v - 2.0).abs() < 1e-12);
        }
        let up = dec.ascend(&tape, &taps_u, down, (4, 4), (8, 8)).unwrap();
        for &v in tape.value(up).data() {
            assert!((v - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn descend_adjoint_inner_product() {
        // <descend(x), y> == <x, backward(y)> through the tape
        let (dec, _store) = build(2, 4, 14);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Tensor::<f64>::from_fn(&[64, 4], |_| rng.gen_range(-1.0..1.0));
        let y = Tensor::<f64>::from_fn(&[16, 4], |_| rng.gen_range(-1.0..1.0));
        let tape = Tape::<f64>::new();
        let taps = dec.down_taps::<f64>();
        let xv = tape.leaf(x.clone(), true);
        let down = dec.descend(&tape, &taps, xv, (8, 8), (4, 4)).unwrap();
        let yv = tape.constant(y.clone());
        let p = tape.mul(down, yv).unwrap();
        let loss = tape.sum(p).unwrap();
        tape.backward(loss).unwrap();
        let lhs = tape.value(down).dot(&y);
        let rhs = x.dot(&tape.grad(xv));
        assert!((lhs - rhs).abs() < 1e-8, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn end_to_end_grad_check_small_instance() {
        let (dec, store) = build(2, 4, 14);
        let (ny, nx) = (8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut inputs = vec![random_features(ny * nx, 14, 31)];
        let names: Vec<String> = store.names().map(|s| s.to_string()).collect();
        for n in &names {
            inputs.push(store.get(n).unwrap().as_ref().clone());
        }
        let weight = Tensor::<f64>::from_fn(&[1, ny, nx], |_| rng.gen_range(-1.0..1.0));
        let err = crate::tape::grad_check_fn(&inputs, 1e-5, move |tape, vars| {
            let mut map = std::collections::HashMap::new();
            for (i, n) in names.iter().enumerate() {
                map.insert(n.clone(), vars[i + 1]);
            }
            let bound = Bound::from_map(map);
            let out = dec.forward(tape, &bound, vars[0], ny, nx)?;
            let w = tape.constant(weight.clone());
            let p = tape.mul(out, w)?;
            tape.sum(p)
        })
        .unwrap();
        assert!(err < 1e-4, "decoder grad err {}", err);
    }

    #[test]
    fn all_parameters_receive_gradients() {
        let (dec, store) = build(2, 8, 14);
        let tape = Tape::<f64>::new();
        let bound = bind(&store, &tape);
        let z = tape.constant(random_features(10 * 10, 14, 91));
        let out = dec.forward(&tape, &bound, z, 10, 10).unwrap();
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
