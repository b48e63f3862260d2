//! Differentiable operations, implemented as methods on [`crate::tensor::graph::Graph`].
//!
//! Forward code computes plain row-major buffers; each op hands the graph a
//! backward rule producing per-input gradients, which the backward sweep
//! accumulates across fan-out. Reduction orders are fixed so results are
//! bit-deterministic for a given build and seed.

mod conv;
mod elementwise;
mod matmul;
mod norm;
mod pool;
mod resize;
mod shape;

pub(crate) use matmul::{mat_mul_nn, mat_mul_nt, mat_mul_tn};

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

pub(crate) fn same_shape<S: Scalar>(op: &str, a: &Tensor<S>, b: &Tensor<S>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dimension(format!(
            "{op}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

pub(crate) fn expect_rank<S: Scalar>(op: &str, t: &Tensor<S>, rank: usize) -> Result<()> {
    if t.shape().len() != rank {
        return Err(Error::dimension(format!(
            "{op}: expected rank {rank}, got shape {:?}",
            t.shape()
        )));
    }
    Ok(())
}
