//! The op vocabulary recorded on the tape, with hand-written backward rules.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{FsrError, Result};
use crate::scalar::Scalar;
use crate::spectral;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Pointwise nonlinearities. Gelu uses the tanh form; its backward is the
/// exact derivative of the implemented expression, so finite differences
/// agree to machine precision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Gelu,
    LeakyRelu,
    Elu,
    Selu,
}

const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;
const LEAKY_SLOPE: f64 = 0.01;
const GELU_C: f64 = 0.044_715;

impl Activation {
    pub fn eval<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    x
                } else {
                    T::zero()
                }
            }
            Activation::Gelu => {
                let half = T::of_f64(0.5);
                let c = T::of_f64(GELU_C);
                let s = T::of_f64((2.0 / std::f64::consts::PI).sqrt());
                let u = s * (x + c * x * x * x);
                half * x * (T::one() + u.tanh())
            }
            Activation::LeakyRelu => {
                if x > T::zero() {
                    x
                } else {
                    T::of_f64(LEAKY_SLOPE) * x
                }
            }
            Activation::Elu => {
                if x > T::zero() {
                    x
                } else {
                    x.exp() - T::one()
                }
            }
            Activation::Selu => {
                let lam = T::of_f64(SELU_LAMBDA);
                let alpha = T::of_f64(SELU_ALPHA);
                if x > T::zero() {
                    lam * x
                } else {
                    lam * alpha * (x.exp() - T::one())
                }
            }
        }
    }

    pub fn deriv<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Gelu => {
                let half = T::of_f64(0.5);
                let c = T::of_f64(GELU_C);
                let three = T::of_f64(3.0);
                let s = T::of_f64((2.0 / std::f64::consts::PI).sqrt());
                let u = s * (x + c * x * x * x);
                let t = u.tanh();
                let sech2 = T::one() - t * t;
                half * (T::one() + t) + half * x * sech2 * s * (T::one() + three * c * x * x)
            }
            Activation::LeakyRelu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::of_f64(LEAKY_SLOPE)
                }
            }
            Activation::Elu => {
                if x > T::zero() {
                    T::one()
                } else {
                    x.exp()
                }
            }
            Activation::Selu => {
                let lam = T::of_f64(SELU_LAMBDA);
                let alpha = T::of_f64(SELU_ALPHA);
                if x > T::zero() {
                    lam
                } else {
                    lam * alpha * x.exp()
                }
            }
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "gelu" => Ok(Activation::Gelu),
            "leaky-relu" => Ok(Activation::LeakyRelu),
            "elu" => Ok(Activation::Elu),
            "selu" => Ok(Activation::Selu),
            other => Err(FsrError::Config(format!("unknown activation '{}'", other))),
        }
    }
}


// ---------------------------------------------------------------------------
// Elementwise and reduction ops
// ---------------------------------------------------------------------------

impl<T: Scalar> Tape<T> {
    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let out = av.zip(&bv, "add", |x, y| x + y)?;
        self.record("add", out, &[a, b], || {
            Box::new(move |g| vec![(a.0, g.clone()), (b.0, g.clone())])
        })
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let out = av.zip(&bv, "sub", |x, y| x - y)?;
        self.record("sub", out, &[a, b], || {
            Box::new(move |g| vec![(a.0, g.clone()), (b.0, g.map(|x| -x))])
        })
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let out = av.zip(&bv, "mul", |x, y| x * y)?;
        self.record("mul", out, &[a, b], || {
            let (av, bv) = (av.clone(), bv.clone());
            Box::new(move |g| {
                vec![
                    (a.0, g.zip(&bv, "mul-bwd", |gi, y| gi * y).unwrap()),
                    (b.0, g.zip(&av, "mul-bwd", |gi, x| gi * x).unwrap()),
                ]
            })
        })
    }

    pub fn scalar_mul(&self, a: Var, c: f64) -> Result<Var> {
        let av = self.value(a);
        let cs = T::of_f64(c);
        let out = av.map(|x| x * cs);
        self.record("scalar-mul", out, &[a], || {
            Box::new(move |g| vec![(a.0, g.map(|x| x * cs))])
        })
    }

    pub fn abs(&self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let out = av.map(|x| x.abs());
        self.record("abs", out, &[a], || {
            let av = av.clone();
            Box::new(move |g| {
                // subgradient at 0 chosen as 0
                vec![(
                    a.0,
                    g.zip(
                        &av,
                        "abs-bwd",
                        |gi, x| {
                            if x > T::zero() {
                                gi
                            } else if x < T::zero() {
                                -gi
                            } else {
                                T::zero()
                            }
                        },
                    )
                    .unwrap(),
                )]
            })
        })
    }

    pub fn exp(&self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let out = av.map(|x| x.exp());
        let saved = Arc::new(out.clone());
        self.record("exp", out, &[a], || {
            Box::new(move |g| vec![(a.0, g.zip(&saved, "exp-bwd", |gi, e| gi * e).unwrap())])
        })
    }

    pub fn activation(&self, a: Var, kind: Activation) -> Result<Var> {
        let av = self.value(a);
        let out = av.map(|x| kind.eval(x));
        self.record("activation", out, &[a], || {
            let av = av.clone();
            Box::new(move |g| {
                vec![(
                    a.0,
                    g.zip(&av, "act-bwd", |gi, x| gi * kind.deriv(x)).unwrap(),
                )]
            })
        })
    }

    pub fn sum(&self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let out = Tensor::scalar(av.sum());
        let shape = av.shape().to_vec();
        self.record("sum", out, &[a], || {
            Box::new(move |g| vec![(a.0, Tensor::filled(&shape, g.item()))])
        })
    }

    pub fn mean(&self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let out = Tensor::scalar(av.mean());
        let shape = av.shape().to_vec();
        let inv_n = T::of_f64(1.0 / av.numel() as f64);
        self.record("mean", out, &[a], || {
            Box::new(move |g| vec![(a.0, Tensor::filled(&shape, g.item() * inv_n))])
        })
    }
}

// ---------------------------------------------------------------------------
// Linear algebra and shape ops
// ---------------------------------------------------------------------------

impl<T: Scalar> Tape<T> {
    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let out = av.matmul(&bv)?;
        self.record("matmul", out, &[a, b], || {
            Box::new(move |g| {
                vec![
                    (a.0, g.matmul_nt(&bv).unwrap()),
                    (b.0, av.matmul_tn(g).unwrap()),
                ]
            })
        })
    }

    /// `(m, n) + (n,)` broadcast over rows.
    pub fn add_row_bias(&self, a: Var, bias: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(bias));
        if av.shape().len() != 2 || bv.shape() != [av.shape()[1]] {
            return Err(FsrError::shape("add-row-bias", av.shape(), bv.shape()));
        }
        let (m, n) = (av.shape()[0], av.shape()[1]);
        let mut out = Tensor::zeros(&[m, n]);
        for i in 0..m {
            for j in 0..n {
                out.data_mut()[i * n + j] = av.data()[i * n + j] + bv.data()[j];
            }
        }
        self.record("add-row-bias", out, &[a, bias], || {
            Box::new(move |g| {
                let mut db = Tensor::zeros(&[n]);
                for i in 0..m {
                    for j in 0..n {
                        db.data_mut()[j] += g.data()[i * n + j];
                    }
                }
                vec![(a.0, g.clone()), (bias.0, db)]
            })
        })
    }

    pub fn transpose2(&self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let out = av.transposed()?;
        self.record("transpose", out, &[a], || {
            Box::new(move |g| vec![(a.0, g.transposed().unwrap())])
        })
    }

    pub fn reshape(&self, a: Var, shape: &[usize]) -> Result<Var> {
        let av = self.value(a);
        let out = av.reshaped(shape)?;
        let orig = av.shape().to_vec();
        self.record("reshape", out, &[a], || {
            Box::new(move |g| vec![(a.0, g.reshaped(&orig).unwrap())])
        })
    }

    /// Concatenate along `axis`; all other extents must agree.
    pub fn concat(&self, axis: usize, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(FsrError::invalid("concat", "no inputs"));
        }
        let values: Vec<Arc<Tensor<T>>> = parts.iter().map(|v| self.value(*v)).collect();
        let rank = values[0].shape().len();
        if axis >= rank {
            return Err(FsrError::invalid(
                "concat",
                format!("axis {} out of range for rank {}", axis, rank),
            ));
        }
        for v in &values[1..] {
            if v.shape().len() != rank {
                return Err(FsrError::shape("concat", values[0].shape(), v.shape()));
            }
            for d in 0..rank {
                if d != axis && v.shape()[d] != values[0].shape()[d] {
                    return Err(FsrError::shape("concat", values[0].shape(), v.shape()));
                }
            }
        }
        let outer: usize = values[0].shape()[..axis].iter().product();
        let inner: usize = values[0].shape()[axis + 1..].iter().product();
        let axis_lens: Vec<usize> = values.iter().map(|v| v.shape()[axis]).collect();
        let total_axis: usize = axis_lens.iter().sum();
        let mut shape = values[0].shape().to_vec();
        shape[axis] = total_axis;

        let mut data = Vec::with_capacity(outer * total_axis * inner);
        for o in 0..outer {
            for (v, &al) in values.iter().zip(&axis_lens) {
                let base = o * al * inner;
                data.extend_from_slice(&v.data()[base..base + al * inner]);
            }
        }
        let out = Tensor::new(shape, data)?;
        let ids: Vec<usize> = parts.iter().map(|v| v.0).collect();
        let shapes: Vec<Vec<usize>> = values.iter().map(|v| v.shape().to_vec()).collect();
        self.record("concat", out, parts, || {
            Box::new(move |g| {
                let mut grads: Vec<(usize, Tensor<T>)> = Vec::with_capacity(ids.len());
                let mut offsets = Vec::with_capacity(ids.len());
                let mut off = 0;
                for al in &axis_lens {
                    offsets.push(off);
                    off += al;
                }
                for ((id, shape), (&al, &aoff)) in ids
                    .iter()
                    .zip(&shapes)
                    .zip(axis_lens.iter().zip(&offsets))
                {
                    let mut part = Tensor::zeros(shape);
                    for o in 0..outer {
                        let src = (o * total_axis + aoff) * inner;
                        let dst = o * al * inner;
                        part.data_mut()[dst..dst + al * inner]
                            .copy_from_slice(&g.data()[src..src + al * inner]);
                    }
                    grads.push((*id, part));
                }
                grads
            })
        })
    }

    /// Contiguous slice `[start, start+len)` along `axis`.
    pub fn slice(&self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let av = self.value(a);
        let rank = av.shape().len();
        if axis >= rank || start + len > av.shape()[axis] {
            return Err(FsrError::invalid(
                "slice",
                format!(
                    "range {}..{} on axis {} of shape {:?}",
                    start,
                    start + len,
                    axis,
                    av.shape()
                ),
            ));
        }
        let outer: usize = av.shape()[..axis].iter().product();
        let inner: usize = av.shape()[axis + 1..].iter().product();
        let full = av.shape()[axis];
        let mut shape = av.shape().to_vec();
        shape[axis] = len;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            data.extend_from_slice(&av.data()[base..base + len * inner]);
        }
        let out = Tensor::new(shape, data)?;
        let orig_shape = av.shape().to_vec();
        self.record("slice", out, &[a], || {
            Box::new(move |g| {
                let mut dx = Tensor::zeros(&orig_shape);
                for o in 0..outer {
                    let dst = (o * full + start) * inner;
                    let src = o * len * inner;
                    dx.data_mut()[dst..dst + len * inner]
                        .copy_from_slice(&g.data()[src..src + len * inner]);
                }
                vec![(a.0, dx)]
            })
        })
    }

    /// Select rows of a `(m, d)` matrix; rows may repeat.
    pub fn gather_rows(&self, a: Var, idx: Arc<Vec<usize>>) -> Result<Var> {
        let av = self.value(a);
        if av.shape().len() != 2 {
            return Err(FsrError::invalid(
                "gather-rows",
                format!("expected matrix, got {:?}", av.shape()),
            ));
        }
        let (m, d) = (av.shape()[0], av.shape()[1]);
        if let Some(&bad) = idx.iter().find(|&&i| i >= m) {
            return Err(FsrError::invalid(
                "gather-rows",
                format!("row index {} out of range {}", bad, m),
            ));
        }
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx.iter() {
            data.extend_from_slice(&av.data()[i * d..(i + 1) * d]);
        }
        let out = Tensor::new(vec![idx.len(), d], data)?;
        self.record("gather-rows", out, &[a], || {
            Box::new(move |g| {
                let mut dx = Tensor::zeros(&[m, d]);
                for (q, &i) in idx.iter().enumerate() {
                    for j in 0..d {
                        dx.data_mut()[i * d + j] += g.data()[q * d + j];
                    }
                }
                vec![(a.0, dx)]
            })
        })
    }
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

fn im2col<T: Scalar>(
    x: &Tensor<T>,
    c_in: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
) -> Tensor<T> {
    let (ph, pw) = (kh / 2, kw / 2);
    let k = c_in * kh * kw;
    let mut col = Tensor::zeros(&[h * w, k]);
    let data = x.data();
    let out = col.data_mut();
    for r in 0..h {
        for q in 0..w {
            let row_base = (r * w + q) * k;
            for ci in 0..c_in {
                for u in 0..kh {
                    let rr = r as isize + u as isize - ph as isize;
                    if rr < 0 || rr >= h as isize {
                        continue;
                    }
                    for v in 0..kw {
                        let qq = q as isize + v as isize - pw as isize;
                        if qq < 0 || qq >= w as isize {
                            continue;
                        }
                        out[row_base + ci * kh * kw + u * kw + v] =
                            data[ci * h * w + rr as usize * w + qq as usize];
                    }
                }
            }
        }
    }
    col
}

fn col2im<T: Scalar>(
    dcol: &Tensor<T>,
    c_in: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
) -> Tensor<T> {
    let (ph, pw) = (kh / 2, kw / 2);
    let k = c_in * kh * kw;
    let mut dx = Tensor::zeros(&[c_in, h, w]);
    let src = dcol.data();
    let out = dx.data_mut();
    for r in 0..h {
        for q in 0..w {
            let row_base = (r * w + q) * k;
            for ci in 0..c_in {
                for u in 0..kh {
                    let rr = r as isize + u as isize - ph as isize;
                    if rr < 0 || rr >= h as isize {
                        continue;
                    }
                    for v in 0..kw {
                        let qq = q as isize + v as isize - pw as isize;
                        if qq < 0 || qq >= w as isize {
                            continue;
                        }
                        out[ci * h * w + rr as usize * w + qq as usize] +=
                            src[row_base + ci * kh * kw + u * kw + v];
                    }
                }
            }
        }
    }
    dx
}

impl<T: Scalar> Tape<T> {
    /// Same-padded stride-1 convolution: `(C_in, H, W) * (C_out, C_in, kh, kw)`,
    /// odd kernel extents, optional per-channel bias.
    pub fn conv2d(&self, x: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let xv = self.value(x);
        let wv = self.value(weight);
        if xv.shape().len() != 3 || wv.shape().len() != 4 {
            return Err(FsrError::shape("conv2d", xv.shape(), wv.shape()));
        }
        let (c_in, h, w) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let (c_out, kc, kh, kw) = (
            wv.shape()[0],
            wv.shape()[1],
            wv.shape()[2],
            wv.shape()[3],
        );
        if kc != c_in {
            return Err(FsrError::shape("conv2d", xv.shape(), wv.shape()));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(FsrError::invalid(
                "conv2d",
                format!("kernel extents must be odd, got {}x{}", kh, kw),
            ));
        }
        if let Some(b) = bias {
            let bv = self.value(b);
            if bv.shape() != [c_out] {
                return Err(FsrError::shape("conv2d", &[c_out], bv.shape()));
            }
        }

        let col = im2col(&xv, c_in, h, w, kh, kw);
        let w_mat = wv.reshaped(&[c_out, c_in * kh * kw])?;
        // (C_out, K) @ (K, H*W) via a @ b^T with b = col
        let mut out_mat = w_mat.matmul_nt(&col)?;
        if let Some(b) = bias {
            let bv = self.value(b);
            for co in 0..c_out {
                let bval = bv.data()[co];
                for e in out_mat.data_mut()[co * h * w..(co + 1) * h * w].iter_mut() {
                    *e += bval;
                }
            }
        }
        let out = out_mat.reshaped(&[c_out, h, w])?;

        let mut inputs = vec![x, weight];
        if let Some(b) = bias {
            inputs.push(b);
        }
        self.record("conv2d", out, &inputs, || {
            Box::new(move |g| {
                let g_mat = g.reshaped(&[c_out, h * w]).unwrap();
                // recompute col rather than caching it across the tape
                let col = im2col(&xv, c_in, h, w, kh, kw);
                let w_mat = wv.reshaped(&[c_out, c_in * kh * kw]).unwrap();
                let dw = g_mat
                    .matmul(&col)
                    .unwrap()
                    .reshaped(&[c_out, c_in, kh, kw])
                    .unwrap();
                let dcol = g_mat.matmul_tn(&w_mat).unwrap(); // (H*W, K)
                let dx = col2im(&dcol, c_in, h, w, kh, kw);
                let mut grads = vec![(x.0, dx), (weight.0, dw)];
                if let Some(b) = bias {
                    let mut db = Tensor::zeros(&[c_out]);
                    for co in 0..c_out {
                        db.data_mut()[co] = g.data()[co * h * w..(co + 1) * h * w]
                            .iter()
                            .copied()
                            .sum();
                    }
                    grads.push((b.0, db));
                }
                grads
            })
        })
    }
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Shared backward for standardization over a group of size `n`:
/// `dx = (g - mean(g) - y * mean(g .* y)) / sigma`.
fn standardize_groups<T: Scalar>(
    x: &Tensor<T>,
    eps: f64,
    group_count: usize,
    group_len: usize,
    index: impl Fn(usize, usize) -> usize + Copy + 'static,
) -> (Tensor<T>, Vec<T>) {
    let mut y = Tensor::zeros(x.shape());
    let mut sigmas = Vec::with_capacity(group_count);
    let inv_n = T::of_f64(1.0 / group_len as f64);
    let epst = T::of_f64(eps);
    for gidx in 0..group_count {
        let mut mu = T::zero();
        for e in 0..group_len {
            mu += x.data()[index(gidx, e)];
        }
        mu *= inv_n;
        let mut var = T::zero();
        for e in 0..group_len {
            let d = x.data()[index(gidx, e)] - mu;
            var += d * d;
        }
        var *= inv_n;
        let sigma = (var + epst).sqrt();
        sigmas.push(sigma);
        for e in 0..group_len {
            let i = index(gidx, e);
            y.data_mut()[i] = (x.data()[i] - mu) / sigma;
        }
    }
    (y, sigmas)
}

fn standardize_backward<T: Scalar>(
    g: &Tensor<T>,
    y: &Tensor<T>,
    sigmas: &[T],
    group_count: usize,
    group_len: usize,
    index: impl Fn(usize, usize) -> usize + Copy,
) -> Tensor<T> {
    let mut dx = Tensor::zeros(y.shape());
    let inv_n = T::of_f64(1.0 / group_len as f64);
    for gidx in 0..group_count {
        let mut mean_g = T::zero();
        let mut mean_gy = T::zero();
        for e in 0..group_len {
            let i = index(gidx, e);
            mean_g += g.data()[i];
            mean_gy += g.data()[i] * y.data()[i];
        }
        mean_g *= inv_n;
        mean_gy *= inv_n;
        let inv_sigma = T::one() / sigmas[gidx];
        for e in 0..group_len {
            let i = index(gidx, e);
            dx.data_mut()[i] = (g.data()[i] - mean_g - y.data()[i] * mean_gy) * inv_sigma;
        }
    }
    dx
}

pub const STANDARDIZE_EPS: f64 = 1e-5;

impl<T: Scalar> Tape<T> {
    /// Standardize each row of a `(m, d)` matrix to zero mean, unit variance.
    pub fn layer_stat_normalize(&self, a: Var, eps: f64) -> Result<Var> {
        let av = self.value(a);
        if av.shape().len() != 2 {
            return Err(FsrError::invalid(
                "layer-stat-normalize",
                format!("expected matrix, got {:?}", av.shape()),
            ));
        }
        let (m, d) = (av.shape()[0], av.shape()[1]);
        let idx = move |row: usize, e: usize| row * d + e;
        let (y, sigmas) = standardize_groups(&av, eps, m, d, idx);
        let saved = Arc::new(y.clone());
        self.record("layer-stat-normalize", y, &[a], || {
            Box::new(move |g| {
                vec![(a.0, standardize_backward(g, &saved, &sigmas, m, d, idx))]
            })
        })
    }

    /// Standardize each column of a `(m, d)` matrix to zero mean, unit variance.
    pub fn column_standardize(&self, a: Var, eps: f64) -> Result<Var> {
        let av = self.value(a);
        if av.shape().len() != 2 {
            return Err(FsrError::invalid(
                "column-standardize",
                format!("expected matrix, got {:?}", av.shape()),
            ));
        }
        let (m, d) = (av.shape()[0], av.shape()[1]);
        let idx = move |col: usize, e: usize| e * d + col;
        let (y, sigmas) = standardize_groups(&av, eps, d, m, idx);
        let saved = Arc::new(y.clone());
        self.record("column-standardize", y, &[a], || {
            Box::new(move |g| {
                vec![(a.0, standardize_backward(g, &saved, &sigmas, d, m, idx))]
            })
        })
    }
}

// ---------------------------------------------------------------------------
// Sampler gather
// ---------------------------------------------------------------------------

impl<T: Scalar> Tape<T> {
    /// For each query, gather 4 neighbor feature vectors from a `(C, H, W)`
    /// map (flat spatial indices) and scale each by its weight. Output is
    /// `(Q, 4*C)`: neighbor blocks concatenated channel-contiguously.
    pub fn gather_weighted(
        &self,
        map: Var,
        idx: Arc<Vec<[usize; 4]>>,
        weights: Arc<Vec<[T; 4]>>,
    ) -> Result<Var> {
        let mv = self.value(map);
        if mv.shape().len() != 3 {
            return Err(FsrError::invalid(
                "gather-weighted",
                format!("expected (C,H,W) map, got {:?}", mv.shape()),
            ));
        }
        if idx.len() != weights.len() || idx.is_empty() {
            return Err(FsrError::invalid(
                "gather-weighted",
                "queries must be non-empty with matching weights",
            ));
        }
        let (c, h, w) = (mv.shape()[0], mv.shape()[1], mv.shape()[2]);
        let hw = h * w;
        let q_count = idx.len();
        let mut out = Tensor::zeros(&[q_count, 4 * c]);
        for (q, (blk, wts)) in idx.iter().zip(weights.iter()).enumerate() {
            for (i, (&site, &wt)) in blk.iter().zip(wts.iter()).enumerate() {
                debug_assert!(site < hw);
                for ch in 0..c {
                    out.data_mut()[q * 4 * c + i * c + ch] = mv.data()[ch * hw + site] * wt;
                }
            }
        }
        self.record("gather-weighted", out, &[map], || {
            Box::new(move |g| {
                let mut dm = Tensor::zeros(&[c, h, w]);
                for (q, (blk, wts)) in idx.iter().zip(weights.iter()).enumerate() {
                    for (i, (&site, &wt)) in blk.iter().zip(wts.iter()).enumerate() {
                        for ch in 0..c {
                            dm.data_mut()[ch * hw + site] += g.data()[q * 4 * c + i * c + ch] * wt;
                        }
                    }
                }
                vec![(map.0, dm)]
            })
        })
    }
}

// ---------------------------------------------------------------------------
// Spectral ops (linear, fixed filters; backward = adjoint)
// ---------------------------------------------------------------------------

impl<T: Scalar> Tape<T> {
    /// Differentiable spectral resize of a `(C, H, W)` field.
    pub fn spectral_resize(&self, x: Var, h_out: usize, w_out: usize) -> Result<Var> {
        let xv = self.value(x);
        let out = spectral::spectral_resize(&xv, h_out, w_out)?;
        let (h_in, w_in) = {
            let s = xv.shape();
            (s[s.len() - 2], s[s.len() - 1])
        };
        self.record("spectral-resize", out, &[x], || {
            Box::new(move |g| {
                vec![(x.0, spectral::spectral_resize_adjoint(g, h_in, w_in).unwrap())]
            })
        })
    }

    /// Differentiable zero-interleave upsampling by `n`.
    pub fn zero_interleave(&self, x: Var, n: usize) -> Result<Var> {
        let xv = self.value(x);
        let out = spectral::zero_interleave(&xv, n)?;
        self.record("zero-interleave", out, &[x], || {
            Box::new(move |g| vec![(x.0, spectral::decimate(g, n).unwrap())])
        })
    }

    /// Circular sinc low-pass then decimate by `stride`. Fixed filter; the
    /// backward is the exact adjoint (zero-stuff then the same filter).
    pub fn sinc_downsample(&self, x: Var, taps: Arc<Vec<T>>, stride: usize) -> Result<Var> {
        let xv = self.value(x);
        if stride == 0 {
            return Err(FsrError::invalid("sinc-downsample", "stride must be >= 1"));
        }
        let filtered = spectral::sep_conv2d_circular(&xv, &taps)?;
        let out = spectral::decimate(&filtered, stride)?;
        let (h, w) = {
            let s = xv.shape();
            (s[s.len() - 2], s[s.len() - 1])
        };
        self.record("sinc-downsample", out, &[x], || {
            Box::new(move |g| {
                let stuffed = spectral::decimate_adjoint(g, stride, h, w).unwrap();
                let dx = spectral::sep_conv2d_circular(&stuffed, &taps).unwrap();
                vec![(x.0, dx)]
            })
        })
    }

    /// Zero-interleave by `n`, interpolate with an `n^2`-gain sinc, crop to
    /// `(h_out, w_out)` (for odd-extent level grids). Backward is the adjoint.
    pub fn sinc_upsample(
        &self,
        x: Var,
        taps: Arc<Vec<T>>,
        n: usize,
        h_out: usize,
        w_out: usize,
    ) -> Result<Var> {
        let xv = self.value(x);
        if n == 0 {
            return Err(FsrError::invalid("sinc-upsample", "factor must be >= 1"));
        }
        let stuffed = spectral::zero_interleave(&xv, n)?;
        let gain = T::of_f64((n * n) as f64);
        let mut full = spectral::sep_conv2d_circular(&stuffed, &taps)?;
        full.scale_inplace(gain);
        let (hf, wf) = {
            let s = full.shape();
            (s[s.len() - 2], s[s.len() - 1])
        };
        if h_out > hf || w_out > wf {
            return Err(FsrError::invalid(
                "sinc-upsample",
                format!("target {}x{} exceeds upsampled {}x{}", h_out, w_out, hf, wf),
            ));
        }
        let out = spectral::crop(&full, h_out, w_out)?;
        self.record("sinc-upsample", out, &[x], || {
            Box::new(move |g| {
                let padded = spectral::crop_adjoint(g, hf, wf).unwrap();
                let mut conv = spectral::sep_conv2d_circular(&padded, &taps).unwrap();
                conv.scale_inplace(gain);
                let dx = spectral::decimate(&conv, n).unwrap();
                vec![(x.0, dx)]
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::grad_check_fn;

    #[test]
    fn matmul_identity_case() {
        let tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let id = tape.constant(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let p = tape.matmul(a, id).unwrap();
        assert_eq!(tape.value(p).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn abs_sign_rule() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::scalar(-3.5), true);
        let y = tape.abs(x).unwrap();
        assert_eq!(tape.value(y).item(), 3.5);
        let loss = tape.sum(y).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).item(), -1.0);
    }

    #[test]
    fn conv2d_dc_preservation() {
        // constant field through a unit-DC-gain 3x3 kernel stays constant
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::filled(&[1, 6, 6], 2.5));
        let k = tape.constant(Tensor::filled(&[1, 1, 3, 3], 1.0 / 9.0));
        let y = tape.conv2d(x, k, None).unwrap();
        let yv = tape.value(y);
        // interior pixels see the full kernel; zero padding shrinks the border
        for r in 1..5 {
            for q in 1..5 {
                assert!((yv.data()[r * 6 + q] - 2.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_reports_op_and_shapes() {
        let tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[3, 3]));
        match tape.add(a, b) {
            Err(FsrError::ShapeMismatch { op, lhs, rhs }) => {
                assert_eq!(op, "add");
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![3, 3]);
            }
            other => panic!("expected shape mismatch, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn grad_check_linear_layer() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::from_fn(&[3, 4], |_| rng.gen_range(-1.0..1.0));
        let w = Tensor::from_fn(&[4, 5], |_| rng.gen_range(-1.0..1.0));
        let b = Tensor::from_fn(&[5], |_| rng.gen_range(-1.0..1.0));
        let err = grad_check_fn(&[x, w, b], 1e-5, |tape, vars| {
            let y = tape.matmul(vars[0], vars[1])?;
            let y = tape.add_row_bias(y, vars[2])?;
            let sq = tape.mul(y, y)?;
            tape.mean(sq)
        })
        .unwrap();
        assert!(err < 1e-6, "linear layer grad err {}", err);
    }

    #[test]
    fn grad_check_gelu_chain() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::from_fn(&[2, 3], |_| rng.gen_range(-1.5..1.5));
        let w = Tensor::from_fn(&[3, 3], |_| rng.gen_range(-1.0..1.0));
        let err = grad_check_fn(&[x, w], 1e-5, |tape, vars| {
            let y = tape.matmul(vars[0], vars[1])?;
            let y = tape.activation(y, Activation::Gelu)?;
            let y = tape.matmul(y, vars[1])?;
            let y = tape.activation(y, Activation::Gelu)?;
            tape.mean(y)
        })
        .unwrap();
        assert!(err < 1e-5, "gelu chain grad err {}", err);
    }

    #[test]
    fn grad_check_column_standardize() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::from_fn(&[6, 3], |_| rng.gen_range(-2.0..2.0));
        let c = Tensor::from_fn(&[6, 3], |_| rng.gen_range(-1.0..1.0));
        let err = grad_check_fn(&[x, c], 1e-5, |tape, vars| {
            let y = tape.column_standardize(vars[0], STANDARDIZE_EPS)?;
            let weighted = tape.mul(y, vars[1])?;
            tape.sum(weighted)
        })
        .unwrap();
        assert!(err < 1e-5, "column-standardize grad err {}", err);
    }

    #[test]
    fn column_standardize_constant_column_is_zero() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::filled(&[4, 2], 3.0));
        let y = tape.column_standardize(x, STANDARDIZE_EPS).unwrap();
        for &v in tape.value(y).data() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn column_standardize_idempotent_up_to_eps() {
        use rand::{Rng, SeedableRng};
        // iterating the op converges to its own fixed point (variance 1-eps)
        // at rate eps, so the second and third applications agree to ~eps^2
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_fn(&[64, 3], |_| rng.gen_range(-1.0..1.0)));
        let y1 = tape.column_standardize(x, STANDARDIZE_EPS).unwrap();
        let y2 = tape.column_standardize(y1, STANDARDIZE_EPS).unwrap();
        let y3 = tape.column_standardize(y2, STANDARDIZE_EPS).unwrap();
        let diff = tape.value(y2).max_rel_diff(&tape.value(y3), 1.0);
        assert!(diff < 1e-7, "not idempotent: {}", diff);
    }

    #[test]
    fn slice_and_concat_round_trip() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_fn(&[3, 4], |i| i as f64), true);
        let left = tape.slice(x, 1, 0, 2).unwrap();
        let right = tape.slice(x, 1, 2, 2).unwrap();
        let back = tape.concat(1, &[left, right]).unwrap();
        assert_eq!(tape.value(back).data(), tape.value(x).data());
        let loss = tape.sum(back).unwrap();
        tape.backward(loss).unwrap();
        assert!(tape.grad(x).data().iter().all(|&g| g == 1.0));
    }

    #[test]
    fn gather_weighted_center_weight_one() {
        let tape = Tape::<f64>::new();
        let map = tape.leaf(Tensor::from_fn(&[2, 2, 2], |i| i as f64), true);
        let idx = Arc::new(vec![[1usize, 1, 1, 1]]);
        let wts = Arc::new(vec![[1.0, 0.0, 0.0, 0.0]]);
        let out = tape.gather_weighted(map, idx, wts).unwrap();
        let v = tape.value(out);
        assert_eq!(v.shape(), &[1, 8]);
        assert_eq!(v.data()[0], 1.0); // channel 0 at site 1
        assert_eq!(v.data()[1], 5.0); // channel 1 at site 1
        let loss = tape.sum(out).unwrap();
        tape.backward(loss).unwrap();
        let g = tape.grad(map);
        assert_eq!(g.data()[1], 1.0);
        assert_eq!(g.data()[4 + 1], 1.0);
    }

    #[test]
    fn grad_check_spectral_ops() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let x = Tensor::from_fn(&[1, 6, 6], |_| rng.gen_range(-1.0..1.0));
        let c = Tensor::from_fn(&[1, 9, 9], |_| rng.gen_range(-1.0..1.0));
        let err = grad_check_fn(&[x, c], 1e-5, |tape, vars| {
            let y = tape.spectral_resize(vars[0], 9, 9)?;
            let w = tape.mul(y, vars[1])?;
            tape.sum(w)
        })
        .unwrap();
        assert!(err < 1e-6, "spectral-resize grad err {}", err);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(18);
        let x = Tensor::from_fn(&[1, 4, 4], |_| rng.gen_range(-1.0..1.0));
        let taps: Arc<Vec<f64>> =
            Arc::new(crate::spectral::SincFilter::<f64>::half_band(9).taps().to_vec());
        let c = Tensor::from_fn(&[1, 2, 2], |_| rng.gen_range(-1.0..1.0));
        let t2 = taps.clone();
        let err = grad_check_fn(&[x, c], 1e-5, move |tape, vars| {
            let y = tape.sinc_downsample(vars[0], t2.clone(), 2)?;
            let w = tape.mul(y, vars[1])?;
            tape.sum(w)
        })
        .unwrap();
        assert!(err < 1e-6, "sinc-downsample grad err {}", err);
    }

    #[test]
    fn sinc_pair_adjoint_identity() {
        use rand::{Rng, SeedableRng};
        // <descend(x), y> == <x, backward-of-descend(y)> and the upsample pair
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let taps: Arc<Vec<f64>> =
            Arc::new(crate::spectral::SincFilter::<f64>::half_band(17).taps().to_vec());

        let x = Tensor::from_fn(&[1, 8, 8], |_| rng.gen_range(-1.0..1.0));
        let y = Tensor::from_fn(&[1, 4, 4], |_| rng.gen_range(-1.0..1.0));
        let tape = Tape::<f64>::new();
        let xv = tape.leaf(x.clone(), true);
        let down = tape.sinc_downsample(xv, taps.clone(), 2).unwrap();
        let yv = tape.constant(y.clone());
        let prod = tape.mul(down, yv).unwrap();
        let loss = tape.sum(prod).unwrap();
        tape.backward(loss).unwrap();
        let lhs = tape.value(down).dot(&y);
        let rhs = x.dot(&tape.grad(xv));
        assert!((lhs - rhs).abs() < 1e-10, "adjoint broke: {} vs {}", lhs, rhs);
    }
}
