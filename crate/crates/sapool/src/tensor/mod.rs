//! Dense tensor storage and the reverse-mode tape.
//!
//! A [`Tensor`] is a cheap handle (reference-counted) onto an immutable
//! row-major buffer plus an optional gradient slot. All differentiable
//! operations live on [`graph::Graph`], which records them onto an
//! append-only tape for reverse-mode differentiation.

pub mod graph;
pub mod ops;
pub mod rng;

use std::cell::{Cell, RefCell};
use std::fmt;
use std::rc::Rc;

use crate::error::{Error, Result};

/// Element type of all tensors: `f32` for training speed, `f64` for
/// gradient-check runs. The whole stack is generic over this.
pub trait Scalar:
    num_traits::Float
    + num_traits::NumAssign
    + std::iter::Sum
    + fmt::Debug
    + fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    const BYTES: usize;
    const NAME: &'static str;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn from_usize(v: usize) -> Self {
        Self::from_f64(v as f64)
    }
}

impl Scalar for f32 {
    const BYTES: usize = 4;
    const NAME: &'static str = "f32";

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const BYTES: usize = 8;
    const NAME: &'static str = "f64";

    fn from_f64(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }
}

/// Number of elements implied by a shape.
pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

struct TensorInner<S: Scalar> {
    shape: Vec<usize>,
    data: Rc<Vec<S>>,
    grad: RefCell<Option<Vec<S>>>,
    requires_grad: bool,
    /// True when this tensor participates in the recorded tape, either as a
    /// differentiable leaf or as the output of a recorded operation.
    tracked: Cell<bool>,
}

/// Dense N-dimensional array of scalars with an optional gradient slot.
///
/// Cloning copies the handle, not the data. The payload is immutable once
/// the tensor exists; gradients are the only interior-mutable part and are
/// written exclusively by [`graph::Graph::backward`].
pub struct Tensor<S: Scalar> {
    inner: Rc<TensorInner<S>>,
}

impl<S: Scalar> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<S: Scalar> fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Tensor(shape={:?}, requires_grad={}, tracked={})",
            self.inner.shape,
            self.inner.requires_grad,
            self.inner.tracked.get()
        )
    }
}

impl<S: Scalar> Tensor<S> {
    /// Build a tensor from a flat row-major buffer.
    pub fn new(data: Vec<S>, shape: &[usize]) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(Error::dimension(format!(
                "shape {:?} implies {} elements, buffer holds {}",
                shape,
                numel(shape),
                data.len()
            )));
        }
        Ok(Self::from_parts(Rc::new(data), shape.to_vec(), false))
    }

    /// Shares an existing buffer (used by views such as reshape).
    pub(crate) fn from_parts(data: Rc<Vec<S>>, shape: Vec<usize>, requires_grad: bool) -> Self {
        let tracked = requires_grad;
        Tensor {
            inner: Rc::new(TensorInner {
                shape,
                data,
                grad: RefCell::new(None),
                requires_grad,
                tracked: Cell::new(tracked),
            }),
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::from_parts(Rc::new(vec![S::zero(); numel(shape)]), shape.to_vec(), false)
    }

    pub fn full(shape: &[usize], v: S) -> Self {
        Self::from_parts(Rc::new(vec![v; numel(shape)]), shape.to_vec(), false)
    }

    pub fn scalar(v: S) -> Self {
        Self::from_parts(Rc::new(vec![v]), vec![1], false)
    }

    /// Convenience constructor from `f64` literals (tests, fixtures).
    pub fn from_f64(data: &[f64], shape: &[usize]) -> Result<Self> {
        Self::new(data.iter().map(|&v| S::from_f64(v)).collect(), shape)
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.inner.data
    }

    pub(crate) fn buffer(&self) -> &Rc<Vec<S>> {
        &self.inner.data
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub(crate) fn tracked(&self) -> bool {
        self.inner.tracked.get()
    }

    pub(crate) fn mark_tracked(&self) {
        self.inner.tracked.set(true);
    }

    /// Accumulated gradient, if backward has reached this tensor.
    pub fn grad(&self) -> Option<Vec<S>> {
        self.inner.grad.borrow().clone()
    }

    pub(crate) fn take_grad(&self) -> Option<Vec<S>> {
        self.inner.grad.borrow_mut().take()
    }

    pub(crate) fn seed_grad(&self, v: S) {
        *self.inner.grad.borrow_mut() = Some(vec![v; self.numel()]);
    }

    /// Sum `g` into the gradient slot, allocating on first touch.
    pub(crate) fn accumulate_grad(&self, g: &[S]) {
        debug_assert_eq!(g.len(), self.numel());
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => {
                for (a, &b) in acc.iter_mut().zip(g) {
                    *a += b;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Run `f` with a borrow of the gradient buffer, without cloning it.
    pub(crate) fn with_grad<R>(&self, f: impl FnOnce(Option<&[S]>) -> R) -> R {
        let slot = self.inner.grad.borrow();
        f(slot.as_deref())
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> Result<S> {
        if self.numel() != 1 {
            return Err(Error::contract(format!(
                "item() needs a scalar tensor, got shape {:?}",
                self.shape()
            )));
        }
        Ok(self.inner.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.inner.data.iter().all(|v| v.is_finite())
    }

    /// Values converted to `f64` (tests and reporting).
    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.inner.data.iter().map(|v| v.as_f64()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_mismatch_names_both_sides() {
        let err = Tensor::<f64>::new(vec![1.0, 2.0, 3.0], &[2, 2]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 2]") && msg.contains('3'), "{msg}");
    }

    #[test]
    fn grad_accumulates_across_fanout() {
        let t = Tensor::<f64>::zeros(&[3]);
        t.accumulate_grad(&[1.0, 2.0, 3.0]);
        t.accumulate_grad(&[1.0, 1.0, 1.0]);
        assert_eq!(t.grad().unwrap(), vec![2.0, 3.0, 4.0]);
    }
}
