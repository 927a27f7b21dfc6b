//! Command-line surface for the field super-resolution pipeline.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fsr_core::config::{DatagenFile, RunConfig};
use fsr_core::datagen::build_dataset;
use fsr_core::fields::{read_sfb, write_sfb, Degradation, GridField};
use fsr_core::loss::{minmax_normalize, pearson};
use fsr_core::model::attention::{bench_attention, bench_csv};
use fsr_core::model::Model;
use fsr_core::op_checks::{op_names, run_checks, GRAD_CHECK_TOL};
use fsr_core::spectral::radial_power_spectrum;
use fsr_core::train::{evaluate, infer_field, train};
use fsr_core::{FsrError, Result};

#[derive(Parser)]
#[command(
    name = "fsr",
    version,
    about = "Arbitrary-scale super-resolution of 2D scalar fields",
    disable_help_subcommand = true
)]
struct Cli {
    /// Override the RNG seed used by the command (configs keep their own
    /// seed otherwise).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic SFB datasets (train/valid/test splits).
    GenData(GenDataArgs),
    /// Train a model from a run config and a dataset directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint against interpolation baselines over scales.
    Eval(EvalArgs),
    /// Super-resolve a field at an arbitrary (non-integer) scale.
    Infer(InferArgs),
    /// Benchmark attention variants (params, FLOPs, wall clock).
    BenchAttn(BenchArgs),
    /// Radial power spectra of SFB fields, one CSV per input.
    Spectra(SpectraArgs),
    /// Finite-difference checks of autodiff backward rules.
    GradCheck(GradCheckArgs),
    /// Pearson correlation between prediction error and the loss prior.
    PriorCorr(PriorCorrArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Datagen TOML config ([grf]/[turb]/[splits] sections).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for train.sfb / valid.sfb / test.sfb.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Run TOML config ([data][encoder][decoder][hierarchy][loss][train]).
    #[arg(long)]
    config: PathBuf,
    /// Dataset directory containing train.sfb (and optionally valid.sfb).
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoints and the training log.
    #[arg(long)]
    out: PathBuf,
    /// Resume from an existing checkpoint instead of a fresh init.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Trained checkpoint.
    #[arg(long)]
    ckpt: PathBuf,
    /// Test SFB file, or a directory containing test.sfb.
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated scale factors, e.g. 4.6,8.2,15.7,32.
    #[arg(long, default_value = "4.6,8.2,15.7,32")]
    scales: String,
    /// Degradation used to build LR inputs.
    #[arg(long, default_value = "spectral")]
    degradation: String,
    /// Summary CSV path.
    #[arg(long, default_value = "eval_summary.csv")]
    out: PathBuf,
    /// Per-record metric CSV path.
    #[arg(long, default_value = "eval_records.csv")]
    per_record: PathBuf,
}

#[derive(Args)]
struct InferArgs {
    /// Trained checkpoint.
    #[arg(long)]
    ckpt: PathBuf,
    /// Input SFB file.
    #[arg(long = "in", value_name = "IN")]
    input: PathBuf,
    /// Record index within the input file.
    #[arg(long, default_value_t = 0)]
    record: usize,
    /// Upsampling factor (may be non-integer); extents round half-up.
    #[arg(long, conflicts_with = "out_extents")]
    scale: Option<f64>,
    /// Explicit output extents as NYxNX, e.g. 101x101.
    #[arg(long)]
    out_extents: Option<String>,
    /// Output SFB file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated token counts.
    #[arg(long, default_value = "256,1024,4096")]
    sizes: String,
    /// Attention width.
    #[arg(long, default_value_t = 32)]
    d: usize,
    /// Head count.
    #[arg(long, default_value_t = 4)]
    heads: usize,
    /// Timing repetitions per size.
    #[arg(long, default_value_t = 20)]
    reps: usize,
    /// Output CSV path.
    #[arg(long, default_value = "bench_attn.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct SpectraArgs {
    /// Input SFB files (repeatable).
    #[arg(long = "in", value_name = "IN", required = true)]
    inputs: Vec<PathBuf>,
    /// Directory for the per-input spectrum CSVs.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct GradCheckArgs {
    /// Check every registered op (default when --op is absent).
    #[arg(long)]
    all: bool,
    /// Check a single op by name.
    #[arg(long, conflicts_with = "all")]
    op: Option<String>,
    /// Random shapes per op.
    #[arg(long, default_value_t = 3)]
    rounds: usize,
}

#[derive(Args)]
struct PriorCorrArgs {
    /// Trained checkpoint.
    #[arg(long)]
    ckpt: PathBuf,
    /// Test SFB file, or a directory containing test.sfb.
    #[arg(long)]
    data: PathBuf,
    /// Weight-map alpha.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Weight-map beta.
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    /// Scale factor for the LR/HR pairs.
    #[arg(long, default_value_t = 3.0)]
    scale: f64,
    /// Output CSV path.
    #[arg(long, default_value = "prior_corr.csv")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::FAILURE
        }
    }
}

fn resolve_data_file(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("test.sfb")
    } else {
        path.to_path_buf()
    }
}

fn parse_scales(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| FsrError::Config(format!("bad scale '{}'", p)))
        })
        .collect()
}

fn parse_extents(s: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = s.split('x').collect();
    if parts.len() != 2 {
        return Err(FsrError::Config(format!(
            "extents must look like 101x101, got '{}'",
            s
        )));
    }
    let ny = parts[0]
        .parse()
        .map_err(|_| FsrError::Config(format!("bad extent '{}'", parts[0])))?;
    let nx = parts[1]
        .parse()
        .map_err(|_| FsrError::Config(format!("bad extent '{}'", parts[1])))?;
    Ok((ny, nx))
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Command::GenData(args) => {
            let file = DatagenFile::load(&args.config)?;
            let mut cfg = file.to_datagen_config();
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let summary = build_dataset(&cfg, &args.out)?;
            for (path, count) in summary.files {
                println!("{}: {} records", path, count);
            }
            Ok(())
        }
        Command::Train(args) => {
            let run_cfg = RunConfig::load(&args.config)?;
            let mut tcfg = run_cfg.train_config()?;
            if let Some(seed) = cli.seed {
                tcfg.seed = seed;
            }
            let train_data = load_split(&args.data, "train.sfb")?;
            let valid_data = load_split(&args.data, "valid.sfb").unwrap_or_default();
            let mut model = match &args.resume {
                Some(path) => Model::<f32>::load(path)?,
                None => Model::<f32>::init(run_cfg.model_config()?, tcfg.seed)?,
            };
            let report = train(&mut model, &train_data, &valid_data, &tcfg, &args.out)?;
            println!("final checkpoint: {}", report.final_ckpt.display());
            if let Some(best) = report.best_ckpt {
                println!(
                    "best checkpoint: {} (valid mse {:.4e})",
                    best.display(),
                    report.best_valid_mse.unwrap_or(f64::NAN)
                );
            }
            if let (Some(first), Some(last)) = (report.log.first(), report.log.last()) {
                println!(
                    "loss: {:.4e} (step {}) -> {:.4e} (step {})",
                    first.loss, first.step, last.loss, last.step
                );
            }
            Ok(())
        }
        Command::Eval(args) => {
            let model = Model::<f32>::load(&args.ckpt)?;
            let data = read_sfb(&resolve_data_file(&args.data))?;
            let scales = parse_scales(&args.scales)?;
            let degradation = Degradation::parse(&args.degradation)?;
            let report = evaluate(&model, &data, &scales, degradation)?;
            std::fs::write(&args.out, report.summary_csv())?;
            std::fs::write(&args.per_record, report.per_record_csv())?;
            print!("{}", report.summary_csv());
            println!("summary: {}", args.out.display());
            println!("per-record: {}", args.per_record.display());
            Ok(())
        }
        Command::Infer(args) => {
            let model = Model::<f32>::load(&args.ckpt)?;
            let records = read_sfb(&args.input)?;
            let field = records.get(args.record).ok_or_else(|| {
                FsrError::invalid(
                    "infer",
                    format!(
                        "record {} out of range ({} records)",
                        args.record,
                        records.len()
                    ),
                )
            })?;
            let extents = match &args.out_extents {
                Some(s) => Some(parse_extents(s)?),
                None => None,
            };
            let out = infer_field(&model, field, args.scale, extents)?;
            write_sfb(&args.out, std::slice::from_ref(&out))?;
            println!(
                "output extents: {}x{} -> {}",
                out.extents().0,
                out.extents().1,
                args.out.display()
            );
            Ok(())
        }
        Command::BenchAttn(args) => {
            let sizes: Vec<usize> = args
                .sizes
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<usize>()
                        .map_err(|_| FsrError::Config(format!("bad size '{}'", p)))
                })
                .collect::<Result<_>>()?;
            let rows = bench_attention(&sizes, args.d, args.heads, args.reps)?;
            let csv = bench_csv(&rows);
            std::fs::write(&args.out, &csv)?;
            print!("{}", csv);
            Ok(())
        }
        Command::Spectra(args) => {
            std::fs::create_dir_all(&args.out_dir)?;
            for input in &args.inputs {
                let records = read_sfb(input)?;
                if records.is_empty() {
                    return Err(FsrError::invalid("spectra", "no records"));
                }
                // mean spectrum over records, channel 0
                let mut acc: Option<fsr_core::spectral::RadialSpectrum> = None;
                for rec in &records {
                    let s = radial_power_spectrum(&rec.channel_slab(0).cast::<f64>())?;
                    match &mut acc {
                        None => acc = Some(s),
                        Some(a) => {
                            for (p, q) in a.power.iter_mut().zip(&s.power) {
                                *p += q;
                            }
                        }
                    }
                }
                let mut spec = acc.expect("nonempty");
                for p in spec.power.iter_mut() {
                    *p /= records.len() as f64;
                }
                let stem = input
                    .file_stem()
                    .map(|s| s.to_string_lossy().to_string())
                    .unwrap_or_else(|| "spectrum".to_string());
                let out = args.out_dir.join(format!("{}_spectrum.csv", stem));
                std::fs::write(&out, spec.to_csv())?;
                println!("{}", out.display());
            }
            Ok(())
        }
        Command::GradCheck(args) => {
            let names: Vec<&'static str> = match &args.op {
                Some(op) => {
                    let name = op_names()
                        .iter()
                        .find(|n| **n == op.as_str())
                        .ok_or_else(|| {
                            FsrError::invalid("grad-check", format!("unknown op '{}'", op))
                        })?;
                    vec![*name]
                }
                None => op_names().to_vec(),
            };
            let seed = cli.seed.unwrap_or(0);
            let results = run_checks(&names, args.rounds, seed)?;
            println!(
                "{:<24} {:>12} {:>10} {:>6}",
                "op", "max_rel_err", "tol", "pass"
            );
            let mut all_pass = true;
            for r in &results {
                println!(
                    "{:<24} {:>12.3e} {:>10.0e} {:>6}",
                    r.name,
                    r.max_rel_err,
                    r.tol,
                    if r.pass { "PASS" } else { "FAIL" }
                );
                all_pass &= r.pass;
            }
            if !all_pass {
                return Err(FsrError::invalid(
                    "grad-check",
                    format!("at least one op exceeded tolerance {}", GRAD_CHECK_TOL),
                ));
            }
            Ok(())
        }
        Command::PriorCorr(args) => {
            let model = Model::<f32>::load(&args.ckpt)?;
            let data = read_sfb(&resolve_data_file(&args.data))?;
            let mut csv = String::from("record,alpha,beta,pearson_r\n");
            for (rec, hr) in data.iter().enumerate() {
                let pair = fsr_core::fields::make_pair(hr, args.scale, Degradation::Spectral)?;
                let pred = model.infer(&pair.lr, hr.extents())?;
                let resize = fsr_core::spectral::spectral_resize(
                    pair.lr.values(),
                    hr.extents().0,
                    hr.extents().1,
                )?;
                let p = pred
                    .values()
                    .zip(&resize, "prior-corr", |a, b| (a - b).abs())?;
                let err: Vec<f64> = pred
                    .values()
                    .data()
                    .iter()
                    .zip(hr.values().data())
                    .map(|(&a, &b)| (a - b).abs() as f64)
                    .collect();
                let n_p: Vec<f64> = minmax_normalize(&p)
                    .data()
                    .iter()
                    .map(|&v| v as f64)
                    .collect();
                let r = pearson(&err, &n_p);
                csv.push_str(&format!("{},{},{},{:.6}\n", rec, args.alpha, args.beta, r));
            }
            std::fs::write(&args.out, &csv)?;
            print!("{}", csv);
            Ok(())
        }
    }
}

fn load_split(dir: &Path, name: &str) -> Result<Vec<GridField<f32>>> {
    read_sfb(&dir.join(name))
}
