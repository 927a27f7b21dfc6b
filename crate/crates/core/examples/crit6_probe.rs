// probe: desk training run, eval at unseen x3 vs bicubic
use fsr_core::datagen::{derive_seed, generate_grf, GrfSpec};
use fsr_core::fields::Degradation;
use fsr_core::model::{Model, ModelConfig};
use fsr_core::train::{evaluate, train, LossMode, TrainConfig};

fn main() {
    let gen = |lane: u64, n: usize| -> Vec<_> {
        (0..n)
            .map(|i| {
                generate_grf(&GrfSpec { extent: 48, gamma: 2.0, k_min: 1.0, k_max: 7.0, seed: derive_seed(424242, lane, i as u64) })
                    .unwrap()
                    .cast::<f32>()
            })
            .collect()
    };
    let train_data = gen(0, 64);
    let valid_data = gen(1, 8);
    let test_data = gen(2, 8);
    let mut model = Model::<f32>::init(ModelConfig { enc_blocks: 2, ..ModelConfig::default() }, 7).unwrap();
    let cfg = TrainConfig {
        steps: 2000, batch: 4, crop: 16, scale_lo: 1.0, scale_hi: 2.0,
        query_pixels: 256, eval_every: 400, loss: LossMode::L1, lr: 1e-3, seed: 7,
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let t0 = std::time::Instant::now();
    let report = train(&mut model, &train_data, &valid_data, &cfg, dir.path()).unwrap();
    println!("trained in {:.1} min", t0.elapsed().as_secs_f64() / 60.0);
    let first: f64 = report.log[..100].iter().map(|r| r.loss).sum::<f64>() / 100.0;
    let last: f64 = report.log[report.log.len() - 100..].iter().map(|r| r.loss).sum::<f64>() / 100.0;
    println!("loss first100 {:.4e} last100 {:.4e} ratio {:.3}", first, last, last / first);
    let ev = evaluate(&model, &test_data, &[3.0], Degradation::Spectral).unwrap();
    for row in &ev.summary {
        println!("x{} {}: mse {:.3e} psnr {:.3} ssim {:.4}", row.scale, row.variant, row.mse, row.psnr, row.ssim);
    }
}
