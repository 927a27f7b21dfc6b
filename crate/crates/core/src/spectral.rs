//! Fourier-domain machinery: 2D FFTs, spectral resizing, zero-interleave
//! upsampling, windowed-sinc anti-aliasing filters, and radial power spectra.
//!
//! All functions here are pure; the tape wires them up with their adjoints
//! for differentiation. Fields are treated as periodic: sinc filtering uses
//! circular convolution, which keeps band-limited round trips exact up to
//! the filter's ripple.

use num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{FsrError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

// ---------------------------------------------------------------------------
// FFT plumbing
// ---------------------------------------------------------------------------

/// In-place 2D FFT over a row-major `h x w` complex buffer.
pub fn fft2_inplace<T: Scalar>(buf: &mut [Complex<T>], h: usize, w: usize, inverse: bool) {
    debug_assert_eq!(buf.len(), h * w);
    let mut planner = FftPlanner::<T>::new();
    let row_fft = if inverse {
        planner.plan_fft_inverse(w)
    } else {
        planner.plan_fft_forward(w)
    };
    for r in 0..h {
        row_fft.process(&mut buf[r * w..(r + 1) * w]);
    }
    let col_fft = if inverse {
        planner.plan_fft_inverse(h)
    } else {
        planner.plan_fft_forward(h)
    };
    let mut col = vec![Complex::new(T::zero(), T::zero()); h];
    for c in 0..w {
        for r in 0..h {
            col[r] = buf[r * w + c];
        }
        col_fft.process(&mut col);
        for r in 0..h {
            buf[r * w + c] = col[r];
        }
    }
}

/// Forward FFT of a real 2D slab; unnormalized coefficients.
pub fn fft2_real<T: Scalar>(data: &[T], h: usize, w: usize) -> Vec<Complex<T>> {
    let mut buf: Vec<Complex<T>> = data
        .iter()
        .map(|&x| Complex::new(x, T::zero()))
        .collect();
    fft2_inplace(&mut buf, h, w, false);
    buf
}

// ---------------------------------------------------------------------------
// Spectral resizing
// ---------------------------------------------------------------------------

/// One axis of the frequency-domain pad/truncate map: (out_bin, in_bin, weight).
fn axis_map(n_in: usize, n_out: usize, pad_w: f64, trunc_w: f64) -> Vec<(usize, usize, f64)> {
    let mut entries = Vec::new();
    if n_out == n_in {
        for k in 0..n_in {
            entries.push((k, k, 1.0));
        }
    } else if n_out > n_in {
        // enlarge: copy both halves, split the shared Nyquist bin of even inputs
        let kpos = if n_in % 2 == 0 {
            n_in / 2 - 1
        } else {
            (n_in - 1) / 2
        };
        for k in 0..=kpos {
            entries.push((k, k, 1.0));
        }
        for k in 1..=kpos {
            entries.push((n_out - k, n_in - k, 1.0));
        }
        if n_in % 2 == 0 {
            entries.push((n_in / 2, n_in / 2, pad_w));
            entries.push((n_out - n_in / 2, n_in / 2, pad_w));
        }
    } else {
        // shrink: keep bins below the output Nyquist, recombine the output
        // Nyquist bin from the +/- input bins when the output length is even
        let kpos = if n_out % 2 == 0 {
            n_out / 2 - 1
        } else {
            (n_out - 1) / 2
        };
        for k in 0..=kpos {
            entries.push((k, k, 1.0));
        }
        for k in 1..=kpos {
            entries.push((n_out - k, n_in - k, 1.0));
        }
        if n_out % 2 == 0 {
            entries.push((n_out / 2, n_out / 2, trunc_w));
            entries.push((n_out / 2, n_in - n_out / 2, trunc_w));
        }
    }
    entries
}

fn resize_slab<T: Scalar>(
    data: &[T],
    h_in: usize,
    w_in: usize,
    h_out: usize,
    w_out: usize,
    adjoint: bool,
) -> Vec<T> {
    let spec = fft2_real(data, h_in, w_in);
    // forward: pad splits Nyquist (0.5/0.5), truncation sums (1/1);
    // adjoint: exact transposes of those maps
    let (pad_w, trunc_w) = if adjoint { (1.0, 0.5) } else { (0.5, 1.0) };
    let rows = axis_map(h_in, h_out, pad_w, trunc_w);
    let cols = axis_map(w_in, w_out, pad_w, trunc_w);
    let mut out_spec = vec![Complex::new(T::zero(), T::zero()); h_out * w_out];
    for &(ro, ri, wr) in &rows {
        for &(co, ci, wc) in &cols {
            let w = T::of_f64(wr * wc);
            out_spec[ro * w_out + co] += spec[ri * w_in + ci] * w;
        }
    }
    fft2_inplace(&mut out_spec, h_out, w_out, true);
    // forward scale preserves pointwise values (1 / input area); the adjoint
    // scale follows from transposing that operator
    let scale = if adjoint {
        T::of_f64(1.0 / (h_out * w_out) as f64)
    } else {
        T::of_f64(1.0 / (h_in * w_in) as f64)
    };
    out_spec.iter().map(|c| c.re * scale).collect()
}

fn split_chw(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match shape.len() {
        2 => Ok((1, shape[0], shape[1])),
        3 => Ok((shape[0], shape[1], shape[2])),
        _ => Err(FsrError::invalid(
            "field-op",
            format!("expected (H,W) or (C,H,W), got {:?}", shape),
        )),
    }
}

fn rebuild_shape(orig: &[usize], h: usize, w: usize) -> Vec<usize> {
    if orig.len() == 2 {
        vec![h, w]
    } else {
        vec![orig[0], h, w]
    }
}

/// Resample a field by zero-padding or truncating its Fourier coefficients
/// symmetrically about DC. Pointwise field values are preserved (a constant
/// stays the same constant). Exact for band-limited inputs.
pub fn spectral_resize<T: Scalar>(x: &Tensor<T>, h_out: usize, w_out: usize) -> Result<Tensor<T>> {
    if h_out < 1 || w_out < 1 {
        return Err(FsrError::invalid(
            "spectral-resize",
            format!("target extents must be positive, got {}x{}", h_out, w_out),
        ));
    }
    let (c, h, w) = split_chw(x.shape())?;
    if h == h_out && w == w_out {
        return Ok(x.clone());
    }
    let mut out = Vec::with_capacity(c * h_out * w_out);
    for ch in 0..c {
        let slab = &x.data()[ch * h * w..(ch + 1) * h * w];
        out.extend(resize_slab(slab, h, w, h_out, w_out, false));
    }
    Tensor::new(rebuild_shape(x.shape(), h_out, w_out), out)
}

/// Transpose of [`spectral_resize`] as a linear map: satisfies
/// `<R(x), y> == <x, adjoint(y)>` for all real `x`, `y`.
pub fn spectral_resize_adjoint<T: Scalar>(
    y: &Tensor<T>,
    h_out: usize,
    w_out: usize,
) -> Result<Tensor<T>> {
    let (c, h, w) = split_chw(y.shape())?;
    if h == h_out && w == w_out {
        return Ok(y.clone());
    }
    let mut out = Vec::with_capacity(c * h_out * w_out);
    for ch in 0..c {
        let slab = &y.data()[ch * h * w..(ch + 1) * h * w];
        out.extend(resize_slab(slab, h, w, h_out, w_out, true));
    }
    Tensor::new(rebuild_shape(y.shape(), h_out, w_out), out)
}

// ---------------------------------------------------------------------------
// Windowed sinc filter
// ---------------------------------------------------------------------------

fn sinc(t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        let pt = std::f64::consts::PI * t;
        pt.sin() / pt
    }
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half_sq = (x / 2.0) * (x / 2.0);
    for k in 1..40 {
        term *= half_sq / ((k * k) as f64);
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

pub const DEFAULT_SINC_TAPS: usize = 33;
pub const DEFAULT_KAISER_BETA: f64 = 8.0;

/// Separable low-pass kernel sampled from `sinc(2w*x0)*sinc(2w*x1)`,
/// Kaiser-windowed and normalized to unit DC gain.
#[derive(Clone, Debug)]
pub struct SincFilter<T> {
    cutoff: f64,
    spacing: f64,
    taps: Vec<T>,
}

impl<T: Scalar> SincFilter<T> {
    /// `cutoff` in cycles per unit length, `spacing` = grid spacing.
    pub fn new(cutoff: f64, spacing: f64, n_taps: usize, kaiser_beta: f64) -> Result<Self> {
        if n_taps % 2 == 0 || n_taps < 3 {
            return Err(FsrError::invalid(
                "sinc-filter",
                format!("tap count must be odd and >= 3, got {}", n_taps),
            ));
        }
        if cutoff <= 0.0 || spacing <= 0.0 {
            return Err(FsrError::invalid(
                "sinc-filter",
                "cutoff and spacing must be positive".to_string(),
            ));
        }
        let center = (n_taps / 2) as isize;
        let i0b = bessel_i0(kaiser_beta);
        let mut taps = Vec::with_capacity(n_taps);
        for j in 0..n_taps as isize {
            let x = (j - center) as f64 * spacing;
            let u = (j - center) as f64 / center as f64;
            let window = bessel_i0(kaiser_beta * (1.0 - u * u).max(0.0).sqrt()) / i0b;
            taps.push(sinc(2.0 * cutoff * x) * window);
        }
        let sum: f64 = taps.iter().sum();
        let taps = taps.iter().map(|&t| T::of_f64(t / sum)).collect();
        Ok(SincFilter {
            cutoff,
            spacing,
            taps,
        })
    }

    /// Half-band kernel (cutoff at half the Nyquist of the sampling grid).
    pub fn half_band(n_taps: usize) -> Self {
        SincFilter::new(0.25, 1.0, n_taps, DEFAULT_KAISER_BETA).expect("valid half-band design")
    }

    /// Kernel for interpolating a factor-`n` zero-interleaved signal. Each
    /// polyphase branch is normalized to `1/n` so a zero-stuffed constant is
    /// reconstructed exactly after the `n^2` gain.
    pub fn interp_for_factor(n: usize, n_taps: usize) -> Self {
        let mut f = SincFilter::<T>::new(1.0 / (2.0 * n as f64), 1.0, n_taps, DEFAULT_KAISER_BETA)
            .expect("valid interpolation design");
        let center = (n_taps / 2) as isize;
        let phase_of = |j: usize| (j as isize - center).rem_euclid(n as isize) as usize;
        for phase in 0..n {
            let sum: f64 = f
                .taps
                .iter()
                .enumerate()
                .filter(|(j, _)| phase_of(*j) == phase)
                .map(|(_, t)| t.as_f64())
                .sum();
            let scale = T::of_f64(1.0 / (n as f64 * sum));
            for (j, t) in f.taps.iter_mut().enumerate() {
                if phase_of(j) == phase {
                    *t = *t * scale;
                }
            }
        }
        f
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Cutoff in cycles per sample.
    pub fn normalized_cutoff(&self) -> f64 {
        self.cutoff * self.spacing
    }

    pub fn taps(&self) -> &[T] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Full 2D kernel (outer product of the 1D factor), for tests.
    pub fn kernel2d(&self) -> Tensor<T> {
        let n = self.taps.len();
        Tensor::from_fn(&[n, n], |i| self.taps[i / n] * self.taps[i % n])
    }

    /// Magnitude response at `f` cycles per sample.
    pub fn response_at(&self, f: f64) -> f64 {
        let center = (self.taps.len() / 2) as isize;
        let (mut re, mut im) = (0.0f64, 0.0f64);
        for (j, &t) in self.taps.iter().enumerate() {
            let phase = -2.0 * std::f64::consts::PI * f * (j as isize - center) as f64;
            re += t.as_f64() * phase.cos();
            im += t.as_f64() * phase.sin();
        }
        (re * re + im * im).sqrt()
    }
}

/// Separable circular convolution of each channel with the filter's 1D taps.
pub fn sep_conv2d_circular<T: Scalar>(x: &Tensor<T>, taps: &[T]) -> Result<Tensor<T>> {
    let (c, h, w) = split_chw(x.shape())?;
    let half = (taps.len() / 2) as isize;
    let mut tmp = vec![T::zero(); c * h * w];
    // along x
    for ch in 0..c {
        for r in 0..h {
            let row = &x.data()[ch * h * w + r * w..ch * h * w + (r + 1) * w];
            let out = &mut tmp[ch * h * w + r * w..ch * h * w + (r + 1) * w];
            for i in 0..w as isize {
                let mut acc = T::zero();
                for (j, &t) in taps.iter().enumerate() {
                    let src = (i - (j as isize - half)).rem_euclid(w as isize) as usize;
                    acc += t * row[src];
                }
                out[i as usize] = acc;
            }
        }
    }
    // along y
    let mut out = vec![T::zero(); c * h * w];
    for ch in 0..c {
        for col in 0..w {
            for i in 0..h as isize {
                let mut acc = T::zero();
                for (j, &t) in taps.iter().enumerate() {
                    let src = (i - (j as isize - half)).rem_euclid(h as isize) as usize;
                    acc += t * tmp[ch * h * w + src * w + col];
                }
                out[ch * h * w + i as usize * w + col] = acc;
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

/// Insert `n - 1` zeros between samples along both axes.
pub fn zero_interleave<T: Scalar>(x: &Tensor<T>, n: usize) -> Result<Tensor<T>> {
    if n == 0 {
        return Err(FsrError::invalid("zero-interleave", "factor must be >= 1"));
    }
    let (c, h, w) = split_chw(x.shape())?;
    if n == 1 {
        return Ok(x.clone());
    }
    let (h2, w2) = (h * n, w * n);
    let mut out = vec![T::zero(); c * h2 * w2];
    for ch in 0..c {
        for r in 0..h {
            for q in 0..w {
                out[ch * h2 * w2 + (r * n) * w2 + q * n] = x.data()[ch * h * w + r * w + q];
            }
        }
    }
    Tensor::new(rebuild_shape(x.shape(), h2, w2), out)
}

/// Keep every `n`-th sample along both axes (phase 0).
pub fn decimate<T: Scalar>(x: &Tensor<T>, n: usize) -> Result<Tensor<T>> {
    if n == 0 {
        return Err(FsrError::invalid("decimate", "factor must be >= 1"));
    }
    let (c, h, w) = split_chw(x.shape())?;
    if n == 1 {
        return Ok(x.clone());
    }
    let h2 = h.div_ceil(n);
    let w2 = w.div_ceil(n);
    let mut out = Vec::with_capacity(c * h2 * w2);
    for ch in 0..c {
        for r in 0..h2 {
            for q in 0..w2 {
                out.push(x.data()[ch * h * w + (r * n) * w + q * n]);
            }
        }
    }
    Tensor::new(rebuild_shape(x.shape(), h2, w2), out)
}

/// Adjoint of [`decimate`]: scatter back to the kept positions, zero elsewhere.
pub fn decimate_adjoint<T: Scalar>(g: &Tensor<T>, n: usize, h: usize, w: usize) -> Result<Tensor<T>> {
    let (c, h2, w2) = split_chw(g.shape())?;
    let mut out = vec![T::zero(); c * h * w];
    for ch in 0..c {
        for r in 0..h2 {
            for q in 0..w2 {
                out[ch * h * w + (r * n) * w + q * n] = g.data()[ch * h2 * w2 + r * w2 + q];
            }
        }
    }
    Tensor::new(rebuild_shape(g.shape(), h, w), out)
}

/// Crop the top-left `(h, w)` corner of each channel.
pub fn crop<T: Scalar>(x: &Tensor<T>, h_out: usize, w_out: usize) -> Result<Tensor<T>> {
    let (c, h, w) = split_chw(x.shape())?;
    if h_out > h || w_out > w {
        return Err(FsrError::invalid(
            "crop",
            format!("crop {}x{} exceeds field {}x{}", h_out, w_out, h, w),
        ));
    }
    let mut out = Vec::with_capacity(c * h_out * w_out);
    for ch in 0..c {
        for r in 0..h_out {
            let base = ch * h * w + r * w;
            out.extend_from_slice(&x.data()[base..base + w_out]);
        }
    }
    Tensor::new(rebuild_shape(x.shape(), h_out, w_out), out)
}

/// Adjoint of [`crop`]: embed into a zero field of extents `(h, w)`.
pub fn crop_adjoint<T: Scalar>(g: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let (c, h2, w2) = split_chw(g.shape())?;
    let mut out = vec![T::zero(); c * h * w];
    for ch in 0..c {
        for r in 0..h2 {
            for q in 0..w2 {
                out[ch * h * w + r * w + q] = g.data()[ch * h2 * w2 + r * w2 + q];
            }
        }
    }
    Tensor::new(rebuild_shape(g.shape(), h, w), out)
}

/// Low-pass filter at `w_out` then decimate by `stride`. The input is treated
/// as critically sampled at bandwidth `w_in`, so the discrete cutoff is
/// `w_out / (2 * w_in)` cycles per sample. Unit DC gain: constants map to the
/// same constant.
pub fn antialias_downsample<T: Scalar>(
    x: &Tensor<T>,
    w_in: f64,
    w_out: f64,
    stride: usize,
    n_taps: usize,
) -> Result<Tensor<T>> {
    if w_out > w_in {
        return Err(FsrError::invalid(
            "antialias-downsample",
            format!("cutoff {} above input bandwidth {} would alias", w_out, w_in),
        ));
    }
    if stride == 0 {
        return Err(FsrError::invalid("antialias-downsample", "stride must be >= 1"));
    }
    let filter = SincFilter::<T>::new(w_out / (2.0 * w_in), 1.0, n_taps, DEFAULT_KAISER_BETA)?;
    let filtered = sep_conv2d_circular(x, filter.taps())?;
    decimate(&filtered, stride)
}

/// Zero-interleave by `n` then interpolate with an `n^2`-gain windowed sinc,
/// so constants are preserved.
pub fn interp_upsample<T: Scalar>(x: &Tensor<T>, n: usize, n_taps: usize) -> Result<Tensor<T>> {
    if n == 0 {
        return Err(FsrError::invalid("interp-upsample", "factor must be >= 1"));
    }
    if n == 1 {
        return Ok(x.clone());
    }
    let stuffed = zero_interleave(x, n)?;
    let filter = SincFilter::<T>::interp_for_factor(n, n_taps);
    let gain = T::of_f64((n * n) as f64);
    let taps: Vec<T> = filter.taps().to_vec();
    let mut out = sep_conv2d_circular(&stuffed, &taps)?;
    out.scale_inplace(gain);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Radial power spectrum
// ---------------------------------------------------------------------------

/// Radially averaged power per integer-wavenumber annulus.
#[derive(Clone, Debug)]
pub struct RadialSpectrum {
    /// Annulus centers (integer wavenumbers).
    pub k: Vec<f64>,
    /// Mean per-mode power in each annulus (`|FFT|^2 / n`).
    pub power: Vec<f64>,
    /// Mode count per annulus.
    pub count: Vec<usize>,
}

impl RadialSpectrum {
    /// Fraction of total power that falls in annulus `bin`.
    pub fn fraction_in_bin(&self, bin: usize) -> f64 {
        let total: f64 = self
            .power
            .iter()
            .zip(&self.count)
            .map(|(p, &c)| p * c as f64)
            .sum();
        if total == 0.0 {
            return 0.0;
        }
        self.power[bin] * self.count[bin] as f64 / total
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,power\n");
        for (k, p) in self.k.iter().zip(&self.power) {
            s.push_str(&format!("{},{:e}\n", k, p));
        }
        s
    }
}

/// Power spectrum of a square single-channel slab, binned by `round(|k|)`.
pub fn radial_power_spectrum<T: Scalar>(x: &Tensor<T>) -> Result<RadialSpectrum> {
    let (c, h, w) = split_chw(x.shape())?;
    if c != 1 || h != w {
        return Err(FsrError::invalid(
            "radial-power-spectrum",
            format!("expected a square single-channel field, got {:?}", x.shape()),
        ));
    }
    let n = h;
    let spec = fft2_real(x.data(), n, n);
    let nbins = n / 2 + 1;
    let mut power = vec![0.0f64; nbins];
    let mut count = vec![0usize; nbins];
    let norm = 1.0 / (n * n) as f64;
    for r in 0..n {
        let ky = if r <= n / 2 { r as f64 } else { r as f64 - n as f64 };
        for q in 0..n {
            let kx = if q <= n / 2 { q as f64 } else { q as f64 - n as f64 };
            let bin = (ky * ky + kx * kx).sqrt().round() as usize;
            if bin < nbins {
                let p = spec[r * n + q].norm_sqr().as_f64() * norm;
                power[bin] += p;
                count[bin] += 1;
            }
        }
    }
    for (p, &c) in power.iter_mut().zip(&count) {
        if c > 0 {
            *p /= c as f64;
        }
    }
    Ok(RadialSpectrum {
        k: (0..nbins).map(|k| k as f64).collect(),
        power,
        count,
    })
}
