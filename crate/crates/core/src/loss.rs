//! Loss functions: L1/L2, the frequency-aware prior and its weight map,
//! the focal-style composite loss, two-stage weighting, and the
//! prior-vs-error correlation diagnostic.
//!
//! The prior `p = |reference - R(a)|` highlights regions the low-frequency
//! spectral resize cannot explain; `W(p; alpha, beta) = alpha exp(beta n(p))`
//! reweights per-pixel losses toward them.

use crate::error::{FsrError, Result};
use crate::fields::GridField;
use crate::scalar::Scalar;
use crate::spectral::spectral_resize;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Which reference the prior is computed against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorSource {
    /// `p = |target - R(a)|` (static per sample).
    TargetVsResize,
    /// `p = |prediction - R(a)|` (dynamic, recomputed from model output).
    PredictionVsResize,
}

/// Per-pixel weight matrix over the HR grid. For a non-constant prior the
/// weights span exactly `[alpha, alpha * e^beta]` by construction.
#[derive(Clone, Debug)]
pub struct PriorWeightMap<T> {
    pub weights: Tensor<T>,
    pub alpha: f64,
    pub beta: f64,
    pub source: PriorSource,
}

/// `p = |reference - R(a)|` elementwise at the reference extents.
pub fn compute_prior<T: Scalar>(reference: &GridField<T>, a: &GridField<T>) -> Result<Tensor<T>> {
    let (ny, nx) = reference.extents();
    let resized = spectral_resize(a.values(), ny, nx)?;
    if resized.shape() != reference.values().shape() {
        return Err(FsrError::shape(
            "compute-prior",
            reference.values().shape(),
            resized.shape(),
        ));
    }
    reference.values().zip(&resized, "compute-prior", |r, s| (r - s).abs())
}

/// Min-max rescale to `[0, 1]`; a constant map yields all zeros.
pub fn minmax_normalize<T: Scalar>(p: &Tensor<T>) -> Tensor<T> {
    let lo = p.min_value();
    let hi = p.max_value();
    let span = hi - lo;
    if span <= T::zero() {
        return Tensor::zeros(p.shape());
    }
    p.map(|v| (v - lo) / span)
}

/// `W = alpha * exp(beta * n(p))`.
pub fn weight_map<T: Scalar>(p: &Tensor<T>, alpha: f64, beta: f64, source: PriorSource) -> Result<PriorWeightMap<T>> {
    if alpha <= 0.0 {
        return Err(FsrError::invalid("weight-map", "alpha must be positive"));
    }
    let n = minmax_normalize(p);
    let (a, b) = (T::of_f64(alpha), T::of_f64(beta));
    Ok(PriorWeightMap {
        weights: n.map(|v| a * (b * v).exp()),
        alpha,
        beta,
        source,
    })
}

// ---------------------------------------------------------------------------
// Tape losses
// ---------------------------------------------------------------------------

/// `mean |pred - target|`.
pub fn l1_loss<T: Scalar>(tape: &Tape<T>, pred: Var, target: Var) -> Result<Var> {
    let d = tape.sub(pred, target)?;
    let a = tape.abs(d)?;
    tape.mean(a)
}

/// `mean (pred - target)^2`.
pub fn l2_loss<T: Scalar>(tape: &Tape<T>, pred: Var, target: Var) -> Result<Var> {
    let d = tape.sub(pred, target)?;
    let sq = tape.mul(d, d)?;
    tape.mean(sq)
}

/// `mean W (pred - target)^2` with a constant (detached) weight map.
pub fn weighted_l2_loss<T: Scalar>(
    tape: &Tape<T>,
    pred: Var,
    target: Var,
    weights: &Tensor<T>,
) -> Result<Var> {
    let w = tape.constant(weights.clone());
    let d = tape.sub(pred, target)?;
    let sq = tape.mul(d, d)?;
    let weighted = tape.mul(w, sq)?;
    tape.mean(weighted)
}

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct FocalParams {
    pub alpha_p: f64,
    pub beta_p: f64,
    pub alpha_b: f64,
    pub beta_b: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        FocalParams {
            alpha_p: 1.0,
            beta_p: 0.1,
            alpha_b: 1.0,
            beta_b: 0.1,
        }
    }
}

/// Focal-style composite loss
/// `mean( W(p) * W(b_err) * |pred - b| )` for a residual-mode prediction
/// (`pred` already includes the `R(a)` base). The static term uses the
/// target-vs-resize prior; the dynamic term reweights by the current
/// prediction error and is detached from gradient flow.
pub fn focal_composite_loss<T: Scalar>(
    tape: &Tape<T>,
    pred: Var,
    resize_of_input: &Tensor<T>,
    target: &Tensor<T>,
    params: FocalParams,
) -> Result<Var> {
    let p_static = target.zip(resize_of_input, "focal-loss", |t, r| (t - r).abs())?;
    let w_p = weight_map(&p_static, params.alpha_p, params.beta_p, PriorSource::TargetVsResize)?;

    let pred_now = tape.value(pred);
    if pred_now.shape() != target.shape() {
        return Err(FsrError::shape("focal-loss", pred_now.shape(), target.shape()));
    }
    let b_err = target.zip(&pred_now, "focal-loss", |t, p| (t - p).abs())?;
    let w_b = weight_map(&b_err, params.alpha_b, params.beta_b, PriorSource::PredictionVsResize)?;

    let combined = w_p.weights.zip(&w_b.weights, "focal-loss", |a, b| a * b)?;
    let w = tape.constant(combined);
    let t = tape.constant(target.clone());
    let d = tape.sub(pred, t)?;
    let a = tape.abs(d)?;
    let weighted = tape.mul(w, a)?;
    tape.mean(weighted)
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

/// Pearson correlation between the flattened absolute error and the
/// normalized prior. Returns NaN when either side has zero variance.
pub fn prior_error_correlation<T: Scalar>(
    pred: &GridField<T>,
    target: &GridField<T>,
    p: &Tensor<T>,
) -> Result<f64> {
    if pred.values().shape() != target.values().shape() || p.shape() != pred.values().shape() {
        return Err(FsrError::shape(
            "prior-error-correlation",
            pred.values().shape(),
            p.shape(),
        ));
    }
    let err: Vec<f64> = pred
        .values()
        .data()
        .iter()
        .zip(target.values().data())
        .map(|(&a, &b)| (a - b).abs().as_f64())
        .collect();
    let n_p = minmax_normalize(p);
    let prior: Vec<f64> = n_p.data().iter().map(|v| v.as_f64()).collect();
    Ok(pearson(&err, &prior))
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx.sqrt() * syy.sqrt())
}
