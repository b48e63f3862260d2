//! Append-only operation tape and reverse-mode gradient propagation.

use std::cell::{Cell, RefCell};

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Backward rule: given the node's inputs, its output, and the gradient
/// flowing into the output, produce one optional gradient per input.
pub(crate) type BackFn<S> =
    Box<dyn Fn(&[Tensor<S>], &Tensor<S>, &[S]) -> Vec<Option<Vec<S>>>>;

pub(crate) struct Node<S: Scalar> {
    pub(crate) op: &'static str,
    pub(crate) inputs: Vec<Tensor<S>>,
    pub(crate) output: Tensor<S>,
    pub(crate) back: BackFn<S>,
}

/// Recorded computation graph. Creating tensors through a `Graph` appends
/// nodes in execution order, which is by construction a topological order:
/// every node's inputs exist before the node itself.
pub struct Graph<S: Scalar> {
    nodes: RefCell<Vec<Node<S>>>,
    recording: Cell<bool>,
    checks: Cell<bool>,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    /// Recording graph with non-finite output checks enabled.
    pub fn new() -> Self {
        Graph {
            nodes: RefCell::new(Vec::new()),
            recording: Cell::new(true),
            checks: Cell::new(true),
        }
    }

    /// Non-recording graph for pure inference.
    pub fn eval() -> Self {
        let g = Self::new();
        g.recording.set(false);
        g
    }

    pub fn set_checks(&self, on: bool) {
        self.checks.set(on);
    }

    pub fn checks(&self) -> bool {
        self.checks.get()
    }

    pub fn recording(&self) -> bool {
        self.recording.get()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.borrow().len()
    }

    /// Untracked constant living outside the differentiation paths.
    pub fn constant(&self, data: Vec<S>, shape: &[usize]) -> Result<Tensor<S>> {
        Tensor::new(data, shape)
    }

    /// Differentiable leaf: participates in backward and receives a gradient.
    pub fn leaf(&self, data: Vec<S>, shape: &[usize]) -> Result<Tensor<S>> {
        if super::numel(shape) != data.len() {
            return Err(Error::dimension(format!(
                "shape {:?} implies {} elements, buffer holds {}",
                shape,
                super::numel(shape),
                data.len()
            )));
        }
        Ok(Tensor::from_parts(
            std::rc::Rc::new(data),
            shape.to_vec(),
            true,
        ))
    }

    /// Wrap an op's freshly computed output, running the non-finite guard.
    pub(crate) fn output(
        &self,
        op: &'static str,
        data: Vec<S>,
        shape: &[usize],
    ) -> Result<Tensor<S>> {
        if self.checks.get() {
            if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
                return Err(Error::numeric(
                    op,
                    format!("element {pos} of output shape {shape:?}"),
                ));
            }
        }
        Tensor::new(data, shape)
    }

    /// Record a node if recording is on and any input is tracked.
    pub(crate) fn record(
        &self,
        op: &'static str,
        inputs: &[&Tensor<S>],
        output: &Tensor<S>,
        back: BackFn<S>,
    ) {
        if !self.recording.get() || !inputs.iter().any(|t| t.tracked()) {
            return;
        }
        output.mark_tracked();
        self.nodes.borrow_mut().push(Node {
            op,
            inputs: inputs.iter().map(|t| (*t).clone()).collect(),
            output: output.clone(),
            back,
        });
    }

    /// Reverse-mode sweep from a scalar loss. Visits every node exactly once
    /// in reverse recording order; gradients sum across fan-out.
    pub fn backward(&self, loss: &Tensor<S>) -> Result<()> {
        if loss.numel() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss.shape()
            )));
        }
        if !loss.tracked() {
            return Err(Error::contract(
                "backward: loss is not connected to any recorded operation",
            ));
        }
        loss.seed_grad(S::one());
        let nodes = self.nodes.borrow();
        for node in nodes.iter().rev() {
            let grads = node
                .output
                .with_grad(|g| g.map(|dout| (node.back)(&node.inputs, &node.output, dout)));
            let Some(grads) = grads else { continue };
            debug_assert_eq!(grads.len(), node.inputs.len(), "op {}", node.op);
            for (inp, g) in node.inputs.iter().zip(grads) {
                if let Some(g) = g {
                    if inp.tracked() {
                        inp.accumulate_grad(&g);
                    }
                }
            }
        }
        Ok(())
    }

    /// Drop all recorded nodes (start of a new step).
    pub fn clear(&self) {
        self.nodes.borrow_mut().clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let g: Graph<f64> = Graph::new();
        let x = g.leaf(vec![1.0, 2.0], &[2]).unwrap();
        let y = g.add(&x, &x).unwrap();
        let err = g.backward(&y).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn untracked_inputs_record_nothing() {
        let g: Graph<f64> = Graph::new();
        let x = g.constant(vec![1.0, 2.0], &[2]).unwrap();
        let _ = g.add(&x, &x).unwrap();
        assert_eq!(g.node_count(), 0);
    }

    #[test]
    fn eval_graph_never_records() {
        let g: Graph<f64> = Graph::eval();
        let x = g.leaf(vec![1.0, 2.0], &[2]).unwrap();
        let _ = g.add(&x, &x).unwrap();
        assert_eq!(g.node_count(), 0);
    }

    #[test]
    fn fanout_gradients_sum() {
        // d(sum(x + x))/dx = 2 everywhere.
        let g: Graph<f64> = Graph::new();
        let x = g.leaf(vec![1.0, -2.0, 3.0], &[3]).unwrap();
        let y = g.add(&x, &x).unwrap();
        let loss = g.sum_all(&y).unwrap();
        g.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0, 2.0]);
    }
}
