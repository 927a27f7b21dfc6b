// probe: wall time of a few training steps at desk scale
use std::time::Instant;
use fsr_core::model::{Model, ModelConfig};
use fsr_core::train::{train, TrainConfig, LossMode};
use fsr_core::datagen::{generate_grf, GrfSpec, derive_seed};

fn main() {
    let data: Vec<_> = (0..16)
        .map(|i| {
            generate_grf(&GrfSpec { extent: 48, gamma: 2.0, k_min: 1.0, k_max: 7.0, seed: derive_seed(1, 0, i) })
                .unwrap()
                .cast::<f32>()
        })
        .collect();
    for (blocks, batch, q) in [(2usize, 8usize, 256usize), (2, 4, 256), (1, 4, 256)] {
        let cfg = ModelConfig { enc_blocks: blocks, ..ModelConfig::default() };
        let mut model = Model::<f32>::init(cfg, 0).unwrap();
        let tcfg = TrainConfig {
            steps: 6, batch, crop: 16, scale_lo: 1.0, scale_hi: 2.0,
            query_pixels: q, eval_every: 0, loss: LossMode::L1,
            ..TrainConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let t0 = Instant::now();
        train(&mut model, &data, &[], &tcfg, dir.path()).unwrap();
        let dt = t0.elapsed().as_secs_f64() / 6.0;
        println!("blocks={} batch={} q={}: {:.3} s/step -> 2000 steps = {:.1} min", blocks, batch, q, dt, dt * 2000.0 / 60.0);
    }
}
