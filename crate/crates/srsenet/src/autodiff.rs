//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every differentiable operation of one forward pass as an
//! append-only node list; [`Tape::backward`] walks that list once in reverse
//! insertion order, accumulating gradients into the trainable leaves. The tape
//! is meant to live for a single forward/backward pass and be dropped after
//! the optimizer step.

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// grad_out, own value, parent values -> gradient per parent.
type BackwardFn<T> =
    Box<dyn Fn(&Tensor<T>, &Tensor<T>, &[&Tensor<T>]) -> Result<Vec<Tensor<T>>>>;

struct Node<T> {
    value: Tensor<T>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    trainable: bool,
}

pub struct Tape<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
    check_finite: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: RefCell::new(Vec::new()), check_finite: false }
    }

    /// Enables the per-op NaN/Inf assertion (off by default for speed).
    pub fn with_finite_checks(mut self, on: bool) -> Self {
        self.check_finite = on;
        self
    }

    /// Records a constant or parameter leaf.
    pub fn leaf(&self, value: Tensor<T>, trainable: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, parents: Vec::new(), backward: None, trainable });
        Var(nodes.len() - 1)
    }

    pub(crate) fn push(
        &self,
        op: &'static str,
        value: Tensor<T>,
        parents: Vec<Var>,
        backward: BackwardFn<T>,
    ) -> Result<Var> {
        if self.check_finite && !value.all_finite() {
            return Err(Error::NonFinite { op });
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            parents: parents.into_iter().map(|v| v.0).collect(),
            backward: Some(backward),
            trainable: false,
        });
        Ok(Var(nodes.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, v: Var) -> Tensor<T> {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn with_value<R>(&self, v: Var, f: impl FnOnce(&Tensor<T>) -> R) -> R {
        f(&self.nodes.borrow()[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes.borrow()[v.0].value.shape()
    }

    /// Reverse pass from a scalar loss node. Visits each node exactly once in
    /// reverse insertion order; gradients of non-trainable intermediates are
    /// dropped as soon as they have been propagated.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        if loss.0 >= nodes.len() {
            return Err(Error::invalid("backward", "loss node is not on this tape"));
        }
        if nodes[loss.0].value.shape() != [1, 1, 1, 1] {
            return Err(Error::ShapeMismatch {
                op: "backward",
                expected: [1, 1, 1, 1],
                got: nodes[loss.0].value.shape(),
            });
        }

        let mut grads: Vec<Option<Tensor<T>>> = vec![None; nodes.len()];
        grads[loss.0] = Some(Tensor::filled([1, 1, 1, 1], T::one()));

        for i in (0..=loss.0).rev() {
            let Some(grad_out) = grads[i].clone() else { continue };
            let node = &nodes[i];
            if let Some(backward) = &node.backward {
                let parent_vals: Vec<&Tensor<T>> =
                    node.parents.iter().map(|&p| &nodes[p].value).collect();
                let parent_grads = backward(&grad_out, &node.value, &parent_vals)?;
                debug_assert_eq!(parent_grads.len(), node.parents.len());
                for (&p, g) in node.parents.iter().zip(parent_grads) {
                    match &mut grads[p] {
                        Some(acc) => acc.add_assign(&g)?,
                        slot => *slot = Some(g),
                    }
                }
            }
            if !node.trainable {
                grads[i] = None;
            }
        }

        Ok(Gradients { grads })
    }
}

/// Result of a backward pass: one gradient per trainable leaf.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of a trainable leaf, zeros if the leaf never influenced the loss.
    pub fn get_or_zeros(&self, v: Var, shape: Shape) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

/// Central finite-difference gradient of a scalar-valued function, the
/// independent oracle every analytic gradient in this crate is checked against.
pub fn finite_diff_grad<T: Scalar, F>(mut f: F, x: &Tensor<T>, h: f64) -> Result<Tensor<T>>
where
    F: FnMut(&Tensor<T>) -> Result<T>,
{
    if h <= 0.0 {
        return Err(Error::invalid("finite_diff_grad", "step must be positive"));
    }
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + T::from_f64(h);
        let fp = f(&probe)?.to_f64();
        probe.data_mut()[i] = orig - T::from_f64(h);
        let fm = f(&probe)?.to_f64();
        probe.data_mut()[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite { op: "finite_diff_grad" });
        }
        grad.data_mut()[i] = T::from_f64((fp - fm) / (2.0 * h));
    }
    Ok(grad)
}
