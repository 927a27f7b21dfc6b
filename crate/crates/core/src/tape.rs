//! Tape-based reverse-mode differentiation over a fixed op vocabulary.
//!
//! Each recorded op stores a backward rule: a pure function from the output
//! cotangent to per-input gradient contributions. Replaying the tape in
//! reverse creation order visits every node after all of its consumers, so a
//! single sweep accumulates exact gradients. Construction and backward are
//! single-threaded per tape; parallelism happens across independent tapes.

use std::cell::{Cell, RefCell};
use std::sync::Arc;

use crate::error::{FsrError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node on a tape (topologically ordered by creation).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

pub(crate) type BackRule<T> = Box<dyn Fn(&Tensor<T>) -> Vec<(usize, Tensor<T>)>>;

struct Node<T: Scalar> {
    value: Arc<Tensor<T>>,
    needs_grad: bool,
    back: Option<BackRule<T>>,
}

pub struct Tape<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
    grads: RefCell<Vec<Option<Tensor<T>>>>,
    checked: Cell<bool>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            grads: RefCell::new(Vec::new()),
            checked: Cell::new(false),
        }
    }

    /// Enable per-op finiteness checks (verification mode).
    pub fn with_checking() -> Self {
        let t = Self::new();
        t.checked.set(true);
        t
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Register an input node. Parameters use `requires_grad = true`.
    pub fn leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, None)
    }

    /// Register a shared tensor without copying its storage.
    pub fn leaf_arc(&self, value: Arc<Tensor<T>>, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            value,
            needs_grad: requires_grad,
            back: None,
        });
        Var(id)
    }

    /// Constant input (no gradient tracking).
    pub fn constant(&self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub(crate) fn push(
        &self,
        value: Tensor<T>,
        needs_grad: bool,
        back: Option<BackRule<T>>,
    ) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            value: Arc::new(value),
            needs_grad,
            back,
        });
        Var(id)
    }

    pub(crate) fn record(
        &self,
        op: &'static str,
        value: Tensor<T>,
        inputs: &[Var],
        back: impl FnOnce() -> BackRule<T>,
    ) -> Result<Var> {
        if self.checked.get() {
            value.check_finite(op)?;
        }
        let needs = inputs.iter().any(|v| self.needs_grad(*v));
        let rule = if needs { Some(back()) } else { None };
        Ok(self.push(value, needs, rule))
    }

    pub fn value(&self, v: Var) -> Arc<Tensor<T>> {
        Arc::clone(&self.nodes.borrow()[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].needs_grad
    }

    /// Gradient of the last `backward` loss w.r.t. `v` (zeros if unreached).
    pub fn grad(&self, v: Var) -> Tensor<T> {
        let grads = self.grads.borrow();
        match grads.get(v.0) {
            Some(Some(g)) => g.clone(),
            _ => Tensor::zeros(self.nodes.borrow()[v.0].value.shape()),
        }
    }

    /// Reverse sweep: fills the grad slot of every node reachable from `loss`.
    /// Deterministic: identical tapes produce bit-identical gradients.
    pub fn backward(&self, loss: Var) -> Result<()> {
        let nodes = self.nodes.borrow();
        if nodes[loss.0].value.numel() != 1 {
            return Err(FsrError::invalid(
                "backward",
                format!(
                    "loss must be scalar, got shape {:?}",
                    nodes[loss.0].value.shape()
                ),
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = Vec::with_capacity(nodes.len());
        grads.resize_with(nodes.len(), || None);
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if let Some(rule) = &nodes[i].back {
                for (j, contrib) in rule(&g) {
                    debug_assert!(j < i, "backward rule must point to earlier nodes");
                    match &mut grads[j] {
                        Some(acc) => acc.axpy(T::one(), &contrib),
                        slot @ None => *slot = Some(contrib),
                    }
                }
            }
            grads[i] = Some(g);
        }
        drop(nodes);
        *self.grads.borrow_mut() = grads;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking (verification mode, f64 only)
// ---------------------------------------------------------------------------

/// Max over all input elements of
/// `|analytic - (f(x+eps) - f(x-eps)) / 2eps| / max(1e-8, |analytic|)`.
///
/// `build` constructs the graph from leaf vars and returns the scalar loss.
/// Inputs must stay away from non-differentiable points (|x| > 10 eps around
/// the kinks of abs / relu; abs'(0) and relu'(0) are taken as 0).
pub fn grad_check_fn<F>(inputs: &[Tensor<f64>], eps: f64, build: F) -> Result<f64>
where
    F: Fn(&Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |work: &[Tensor<f64>]| -> Result<f64> {
        let tape = Tape::with_checking();
        let vars: Vec<Var> = work.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        let loss = build(&tape, &vars)?;
        Ok(tape.value(loss).item())
    };

    let tape = Tape::with_checking();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = build(&tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars.iter().map(|v| tape.grad(*v)).collect();

    let mut work = inputs.to_vec();
    let mut max_rel = 0.0f64;
    for pi in 0..work.len() {
        for e in 0..work[pi].numel() {
            let orig = work[pi].data()[e];
            work[pi].data_mut()[e] = orig + eps;
            let fp = eval(&work)?;
            work[pi].data_mut()[e] = orig - eps;
            let fm = eval(&work)?;
            work[pi].data_mut()[e] = orig;
            let fd = (fp - fm) / (2.0 * eps);
            let a = analytic[pi].data()[e];
            let rel = (a - fd).abs() / a.abs().max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}
