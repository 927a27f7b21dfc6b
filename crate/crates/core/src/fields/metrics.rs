//! MSE / PSNR / SSIM quality metrics.
//!
//! PSNR and SSIM use a caller-supplied data range (scientific data is not
//! 8-bit); the usual default is the target's max - min. SSIM follows the
//! standard constants K1 = 0.01, K2 = 0.03 with an 11x11 Gaussian window
//! (sigma 1.5) evaluated in valid mode.

use crate::error::{FsrError, Result};
use crate::fields::GridField;
use crate::scalar::Scalar;

pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

fn check_match<T: Scalar>(op: &'static str, a: &GridField<T>, b: &GridField<T>) -> Result<()> {
    if a.values().shape() != b.values().shape() {
        return Err(FsrError::shape(op, a.values().shape(), b.values().shape()));
    }
    Ok(())
}

/// Data range of a field (max - min), the default for PSNR/SSIM.
pub fn data_range<T: Scalar>(f: &GridField<T>) -> f64 {
    (f.values().max_value() - f.values().min_value()).as_f64()
}

pub fn mse<T: Scalar>(pred: &GridField<T>, target: &GridField<T>) -> Result<f64> {
    check_match("mse", pred, target)?;
    let n = pred.values().numel() as f64;
    let sum: f64 = pred
        .values()
        .data()
        .iter()
        .zip(target.values().data())
        .map(|(&p, &t)| {
            let d = (p - t).as_f64();
            d * d
        })
        .sum();
    Ok(sum / n)
}

/// `10 log10(range^2 / mse)`; +inf when the fields match exactly.
pub fn psnr<T: Scalar>(pred: &GridField<T>, target: &GridField<T>, range: Option<f64>) -> Result<f64> {
    let e = mse(pred, target)?;
    let range = range.unwrap_or_else(|| data_range(target));
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (range * range / e).log10())
}

fn gaussian_window(n: usize, sigma: f64) -> Vec<f64> {
    let c = (n / 2) as isize;
    let mut w: Vec<f64> = (0..n as isize)
        .map(|j| {
            let d = (j - c) as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= s;
    }
    w
}

/// Mean local SSIM over all channels, valid-window mode. Windows shrink to
/// the largest odd size that fits fields smaller than 11x11.
pub fn ssim<T: Scalar>(pred: &GridField<T>, target: &GridField<T>, range: Option<f64>) -> Result<f64> {
    check_match("ssim", pred, target)?;
    let (ny, nx) = pred.extents();
    let mut win = SSIM_WINDOW.min(ny).min(nx);
    if win % 2 == 0 {
        win -= 1;
    }
    if win < 1 {
        return Err(FsrError::invalid("ssim", "field too small"));
    }
    let range = range.unwrap_or_else(|| data_range(target));
    let c1 = (SSIM_K1 * range) * (SSIM_K1 * range);
    let c2 = (SSIM_K2 * range) * (SSIM_K2 * range);
    let w = gaussian_window(win, SSIM_SIGMA);

    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..pred.channels() {
        let p = pred.channel_slab(ch);
        let t = target.channel_slab(ch);
        for r0 in 0..=(ny - win) {
            for q0 in 0..=(nx - win) {
                let (mut mx, mut my) = (0.0f64, 0.0f64);
                let (mut sxx, mut syy, mut sxy) = (0.0f64, 0.0f64, 0.0f64);
                for u in 0..win {
                    for v in 0..win {
                        let wt = w[u] * w[v];
                        let x = p.data()[(r0 + u) * nx + q0 + v].as_f64();
                        let y = t.data()[(r0 + u) * nx + q0 + v].as_f64();
                        mx += wt * x;
                        my += wt * y;
                        sxx += wt * x * x;
                        syy += wt * y * y;
                        sxy += wt * x * y;
                    }
                }
                let vx = sxx - mx * mx;
                let vy = syy - my * my;
                let cxy = sxy - mx * my;
                let s = ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                total += s;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}
