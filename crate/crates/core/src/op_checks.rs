//! Named finite-difference checks for every registered tape op.
//!
//! Each check builds a small random graph around one op, reduces it to a
//! scalar through a random constant weighting, and compares analytic
//! gradients against central differences in 64-bit mode.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FsrError, Result};
use crate::ops::{Activation, STANDARDIZE_EPS};
use crate::spectral::SincFilter;
use crate::tape::{grad_check_fn, Tape, Var};
use crate::tensor::Tensor;

pub const GRAD_CHECK_EPS: f64 = 1e-5;
pub const GRAD_CHECK_TOL: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct OpCheckResult {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub tol: f64,
    pub pass: bool,
}

pub fn op_names() -> &'static [&'static str] {
    &[
        "add",
        "sub",
        "mul",
        "scalar-mul",
        "matmul",
        "add-row-bias",
        "conv2d",
        "transpose",
        "reshape",
        "concat-channels",
        "slice",
        "mean",
        "sum",
        "abs",
        "exp",
        "relu",
        "gelu",
        "leaky-relu",
        "elu",
        "selu",
        "layer-stat-normalize",
        "column-standardize",
        "gather-weighted",
        "gather-rows",
        "spectral-resize",
        "zero-interleave",
        "sinc-downsample",
        "sinc-upsample",
    ]
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Values bounded away from activation kinks (|x| >= 0.1 >> 10*eps).
fn rand_tensor_off_kink(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let mag = rng.gen_range(0.1..1.2);
        if rng.gen_bool(0.5) {
            mag
        } else {
            -mag
        }
    })
}

/// Reduce any output to a scalar via a fixed random weighting so the check
/// exercises non-trivial cotangents.
fn weighted_scalar(tape: &Tape<f64>, out: Var, weights: Tensor<f64>) -> Result<Var> {
    let w = tape.constant(weights);
    let prod = tape.mul(out, w)?;
    tape.sum(prod)
}

fn elementwise_check(
    rng: &mut ChaCha8Rng,
    off_kink: bool,
    f: impl Fn(&Tape<f64>, Var) -> Result<Var>,
) -> Result<f64> {
    let m = rng.gen_range(2..5);
    let n = rng.gen_range(2..5);
    let x = if off_kink {
        rand_tensor_off_kink(rng, &[m, n])
    } else {
        rand_tensor(rng, &[m, n])
    };
    let w = rand_tensor(rng, &[m, n]);
    grad_check_fn(&[x], GRAD_CHECK_EPS, move |tape, vars| {
        let y = f(tape, vars[0])?;
        weighted_scalar(tape, y, w.clone())
    })
}

/// Run the finite-difference check for one named op with the given seed.
pub fn check_op(name: &str, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    match name {
        "add" => {
            let m = r.gen_range(2..5);
            let n = r.gen_range(2..5);
            let (a, b, w) = (
                rand_tensor(r, &[m, n]),
                rand_tensor(r, &[m, n]),
                rand_tensor(r, &[m, n]),
            );
            grad_check_fn(&[a, b], GRAD_CHECK_EPS, move |tape, vars| {
                let y = tape.add(vars[0], vars[1])?;
                weighted_scalar(tape, y, w.clone())
            })
        }
        "sub" => {
            let m = r.gen_range(2..5);
            let n = r.gen_range(2..5);
            let (a, b, w) = (
                rand_tensor(r, &[m, n]),
                rand_tensor(r, &[m, n]),
                rand_tensor(r, &[m, n]),
            );
            grad_check_fn(&[a, b], GRAD_CHECK_EPS, move |tape, vars| {
                let y = tape.sub(vars[0], vars[1])?;
                weighted_scalar(tape, y, w.clone())
            })
        }
        "mul" => {
            let m = r.gen_range(2..5);
            let n = r.gen_range(2..5);
            let (a, b, w) = (
                rand_tensor(r, &[m, n]),
                rand_tensor(r, &[m, n]),
                rand_tensor(r, &[m, n]),
            );
            grad_check_fn(&[a, b], GRAD_CHECK_EPS, move |tape, vars| {
                let y = tape.mul(vars[0], vars[1])?;
                weighted_scalar(tape, y, w.clone())
            })
        }
        "scalar-mul" => {
            let c = r.gen_range(-2.0..2.0);
            elementwise_check(r, false, move |tape, x| tape.scalar_mul(x, c))
        }
        "matmul" => {
            let m = r.gen_range(2..5);
            let k = r.gen_range(2..5);
            let n = r.gen_range(2..5);
            let (a, b, w) = (
                rand_tensor(r, &[m, k]),
                rand_tensor(r, &[k, n]),
                rand_tensor(r, &[m, n]),
            );
            grad_check_fn(&[a, b], GRAD_CHECK_EPS, move |tape, vars| {
                let y = tape.matmul(vars[0], vars[1])?;
                weighted_scalar(tape, y, w.clone())
            })
        }
        "add-row-bias" => {
            let m = r.gen_range(2..5);
            let n = r.gen_range(2..5);
            let (a, b, w) = (
                rand_tensor(r, &[m, n]),
                rand_tensor(r, &[n]),
                rand_tensor(r, &[m, n]),
            );
            grad_check_fn(&[a, b], GRAD_CHECK_EPS, move |tape, vars| {
                let y = tape.add_row_bias(vars[0], vars[1])?;
                weighted_scalar(tape, y, w.clone())
            })
        }
        "conv2d" => {
            let c_in = r.gen_range(1..3);
            let c_out = r.gen_range(1..3);
            let h = r.gen_range(3..7);
            let w_ext = r.gen_range(3..7);
            let (x, k, b, wt) = (
                rand_tensor(r, &[c_in, h, w_ext]),
                rand_tensor(r, &[c_out, c_in, 3, 3]),
                rand_tensor(r, &[c_out]),
                rand_tensor(r, &[c_out, h, w_ext]),
            );
            grad_check_fn(&[x, k, b], GRAD_CHECK_EPS, move |tape, vars| {
                let y = tape.conv2d(vars[0], vars[1], Some(vars[2]))?;
                weighted_scalar(tape, y, wt.clone())
            })
        }
        "transpose" => {
            let m = r.gen_range(2..5);
            let n = r.gen_range(2..5);
            let (a, w) = (rand_tensor(r, &[m, n]), rand_tensor(r, &[n, m]));
            grad_check_fn(&[a], GRAD_CHECK_EPS, move |tape, vars| {
                let y = tape.transpose2(vars[0])?;
                weighted_scalar(tape, y, w.clone())
            })
        }
        "reshape" => {
            let m = r.gen_range(2..5);
            let n = r.gen_range(2..5);
            let (a, w) = (rand_tensor(r, &[m, n]), rand_tensor(r, &[m * n]));
            grad_check_fn(&[a], GRAD_CHECK_EPS, move |tape, vars| {
                let y = tape.reshape(vars[0], &[m * n])?;
                weighted_scalar(tape, y, w.clone())
            })
        }
        "concat-channels" => {
            let c1 = r.gen_range(1..3);
            let c2 = r.gen_range(1..3);
            let n = r.gen_range(2..5);
            let (a, b, w) = (
                rand_tensor(r, &[n, c1]),
                rand_tensor(r, &[n, c2]),
                rand_tensor(r, &[n, c1 + c2]),
            );
            grad_check_fn(&[a, b], GRAD_CHECK_EPS, move |tape, vars| {
                let y = tape.concat(1, &[vars[0], vars[1]])?;
                weighted_scalar(tape, y, w.clone())
            })
        }
        "slice" => {
            let m = r.gen_range(3..6);
            let n = r.gen_range(3..6);
            let start = r.gen_range(0..n - 1);
            let len = r.gen_range(1..=n - start);
            let (a, w) = (rand_tensor(r, &[m, n]), rand_tensor(r, &[m, len]));
            grad_check_fn(&[a], GRAD_CHECK_EPS, move |tape, vars| {
                let y = tape.slice(vars[0], 1, start, len)?;
                weighted_scalar(tape, y, w.clone())
            })
        }
        "mean" => {
            let m = r.gen_range(2..5);
            let a = rand_tensor(r, &[m, m]);
            grad_check_fn(&[a], GRAD_CHECK_EPS, |tape, vars| tape.mean(vars[0]))
        }
        "sum" => {
            let m = r.gen_range(2..5);
            let a = rand_tensor(r, &[m, m]);
            grad_check_fn(&[a], GRAD_CHECK_EPS, |tape, vars| tape.sum(vars[0]))
        }
        "abs" => elementwise_check(r, true, |tape, x| tape.abs(x)),
        "exp" => elementwise_check(r, false, |tape, x| tape.exp(x)),
        "relu" => elementwise_check(r, true, |tape, x| tape.activation(x, Activation::Relu)),
        "gelu" => elementwise_check(r, false, |tape, x| tape.activation(x, Activation::Gelu)),
        "leaky-relu" => {
            elementwise_check(r, true, |tape, x| tape.activation(x, Activation::LeakyRelu))
        }
        "elu" => elementwise_check(r, true, |tape, x| tape.activation(x, Activation::Elu)),
        "selu" => elementwise_check(r, true, |tape, x| tape.activation(x, Activation::Selu)),
        "layer-stat-normalize" => {
            let m = r.gen_range(2..5);
            let n = r.gen_range(3..6);
            let (a, w) = (rand_tensor(r, &[m, n]), rand_tensor(r, &[m, n]));
            grad_check_fn(&[a], GRAD_CHECK_EPS, move |tape, vars| {
                let y = tape.layer_stat_normalize(vars[0], STANDARDIZE_EPS)?;
                weighted_scalar(tape, y, w.clone())
            })
        }
        "column-standardize" => {
            let m = r.gen_range(3..7);
            let n = r.gen_range(2..5);
            let (a, w) = (rand_tensor(r, &[m, n]), rand_tensor(r, &[m, n]));
            grad_check_fn(&[a], GRAD_CHECK_EPS, move |tape, vars| {
                let y = tape.column_standardize(vars[0], STANDARDIZE_EPS)?;
                weighted_scalar(tape, y, w.clone())
            })
        }
        "gather-weighted" => {
            let c = r.gen_range(1..3);
            let h = r.gen_range(2..5);
            let wd = r.gen_range(2..5);
            let q = r.gen_range(1..5);
            let map = rand_tensor(r, &[c, h, wd]);
            let mut idx = Vec::with_capacity(q);
            let mut wts = Vec::with_capacity(q);
            for _ in 0..q {
                idx.push([
                    r.gen_range(0..h * wd),
                    r.gen_range(0..h * wd),
                    r.gen_range(0..h * wd),
                    r.gen_range(0..h * wd),
                ]);
                wts.push([
                    r.gen_range(0.0..1.0),
                    r.gen_range(0.0..1.0),
                    r.gen_range(0.0..1.0),
                    r.gen_range(0.0..1.0),
                ]);
            }
            let idx = Arc::new(idx);
            let wts = Arc::new(wts);
            let w = rand_tensor(r, &[q, 4 * c]);
            grad_check_fn(&[map], GRAD_CHECK_EPS, move |tape, vars| {
                let y = tape.gather_weighted(vars[0], idx.clone(), wts.clone())?;
                weighted_scalar(tape, y, w.clone())
            })
        }
        "gather-rows" => {
            let m = r.gen_range(3..6);
            let d = r.gen_range(2..5);
            let q = r.gen_range(1..6);
            let a = rand_tensor(r, &[m, d]);
            let idx = Arc::new((0..q).map(|_| r.gen_range(0..m)).collect::<Vec<_>>());
            let w = rand_tensor(r, &[q, d]);
            grad_check_fn(&[a], GRAD_CHECK_EPS, move |tape, vars| {
                let y = tape.gather_rows(vars[0], idx.clone())?;
                weighted_scalar(tape, y, w.clone())
            })
        }
        "spectral-resize" => {
            let h = r.gen_range(3..7);
            let wd = r.gen_range(3..7);
            let h2 = r.gen_range(3..9);
            let w2 = r.gen_range(3..9);
            let (a, w) = (rand_tensor(r, &[1, h, wd]), rand_tensor(r, &[1, h2, w2]));
            grad_check_fn(&[a], GRAD_CHECK_EPS, move |tape, vars| {
                let y = tape.spectral_resize(vars[0], h2, w2)?;
                weighted_scalar(tape, y, w.clone())
            })
        }
        "zero-interleave" => {
            let h = r.gen_range(2..5);
            let wd = r.gen_range(2..5);
            let n = r.gen_range(1..4);
            let (a, w) = (
                rand_tensor(r, &[1, h, wd]),
                rand_tensor(r, &[1, h * n, wd * n]),
            );
            grad_check_fn(&[a], GRAD_CHECK_EPS, move |tape, vars| {
                let y = tape.zero_interleave(vars[0], n)?;
                weighted_scalar(tape, y, w.clone())
            })
        }
        "sinc-downsample" => {
            let h = 2 * r.gen_range(2..4);
            let wd = 2 * r.gen_range(2..4);
            let taps: Arc<Vec<f64>> = Arc::new(SincFilter::half_band(9).taps().to_vec());
            let (a, w) = (
                rand_tensor(r, &[1, h, wd]),
                rand_tensor(r, &[1, h / 2, wd / 2]),
            );
            grad_check_fn(&[a], GRAD_CHECK_EPS, move |tape, vars| {
                let y = tape.sinc_downsample(vars[0], taps.clone(), 2)?;
                weighted_scalar(tape, y, w.clone())
            })
        }
        "sinc-upsample" => {
            let h = r.gen_range(2..5);
            let wd = r.gen_range(2..5);
            let h2 = 2 * h - r.gen_range(0..2);
            let w2 = 2 * wd - r.gen_range(0..2);
            let taps: Arc<Vec<f64>> = Arc::new(SincFilter::half_band(9).taps().to_vec());
            let (a, w) = (rand_tensor(r, &[1, h, wd]), rand_tensor(r, &[1, h2, w2]));
            grad_check_fn(&[a], GRAD_CHECK_EPS, move |tape, vars| {
                let y = tape.sinc_upsample(vars[0], taps.clone(), 2, h2, w2)?;
                weighted_scalar(tape, y, w.clone())
            })
        }
        other => Err(FsrError::invalid(
            "grad-check",
            format!("unknown op '{}'", other),
        )),
    }
}

/// Check the named ops over `rounds` random shapes/seeds each.
pub fn run_checks(names: &[&'static str], rounds: usize, base_seed: u64) -> Result<Vec<OpCheckResult>> {
    let mut out = Vec::with_capacity(names.len());
    for &name in names {
        let mut worst = 0.0f64;
        for round in 0..rounds {
            let err = check_op(name, base_seed.wrapping_add(round as u64).wrapping_mul(0x9e37) ^ hash_name(name))?;
            if err > worst {
                worst = err;
            }
        }
        out.push(OpCheckResult {
            name,
            max_rel_err: worst,
            tol: GRAD_CHECK_TOL,
            pass: worst < GRAD_CHECK_TOL,
        });
    }
    Ok(out)
}

fn hash_name(name: &str) -> u64 {
    name.bytes().fold(0xcbf29ce484222325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100000001b3)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_registered_op_has_a_check() {
        for &name in op_names() {
            let err = check_op(name, 42).unwrap();
            assert!(err < GRAD_CHECK_TOL, "{} grad err {}", name, err);
        }
    }

    #[test]
    fn unknown_op_is_an_error() {
        assert!(check_op("made-up-op", 1).is_err());
    }
}
