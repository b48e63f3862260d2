//! Matrix products: 2-D, batched-by-shared-weight, and fully batched.

use rayon::prelude::*;

use super::expect_rank;
use crate::error::{Error, Result};
use crate::tensor::graph::Graph;
use crate::tensor::{Scalar, Tensor};

/// Below this many multiply-accumulates the rayon fork overhead dominates.
const PAR_THRESHOLD: usize = 32 * 1024;

/// C[m,n] = A[m,k] · B[k,n], row-major. Deterministic: each output row is
/// produced by exactly one task with a fixed in-row accumulation order.
pub(crate) fn mat_mul_nn<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut c = vec![S::zero(); m * n];
    let row = |ci: &mut [S], i: usize| {
        for p in 0..k {
            let av = a[i * k + p];
            if av == S::zero() {
                continue;
            }
            let brow = &b[p * n..p * n + n];
            for (cv, &bv) in ci.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD && m > 1 {
        c.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, ci)| row(ci, i));
    } else {
        for (i, ci) in c.chunks_mut(n).enumerate() {
            row(ci, i);
        }
    }
    c
}

/// C[m,n] = A[m,k] · B[n,k]ᵀ — dot products of rows.
pub(crate) fn mat_mul_nt<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut c = vec![S::zero(); m * n];
    let row = |ci: &mut [S], i: usize| {
        let arow = &a[i * k..i * k + k];
        for (j, cv) in ci.iter_mut().enumerate() {
            let brow = &b[j * k..j * k + k];
            let mut acc = S::zero();
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            *cv = acc;
        }
    };
    if m * k * n >= PAR_THRESHOLD && m > 1 {
        c.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, ci)| row(ci, i));
    } else {
        for (i, ci) in c.chunks_mut(n).enumerate() {
            row(ci, i);
        }
    }
    c
}

/// C[m,n] = A[k,m]ᵀ · B[k,n].
pub(crate) fn mat_mul_tn<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut c = vec![S::zero(); m * n];
    let row = |ci: &mut [S], i: usize| {
        for p in 0..k {
            let av = a[p * m + i];
            if av == S::zero() {
                continue;
            }
            let brow = &b[p * n..p * n + n];
            for (cv, &bv) in ci.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD && m > 1 {
        c.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, ci)| row(ci, i));
    } else {
        for (i, ci) in c.chunks_mut(n).enumerate() {
            row(ci, i);
        }
    }
    c
}

impl<S: Scalar> Graph<S> {
    /// Matrix product. Accepted shapes:
    /// `[M,K]·[K,N]`, `[B,M,K]·[K,N]` (shared weight), `[B,M,K]·[B,K,N]`.
    pub fn matmul(&self, a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
        match (a.shape(), b.shape()) {
            ([m, ka], [kb, n]) => {
                if ka != kb {
                    return Err(dim_err(a, b));
                }
                let (m, k, n) = (*m, *ka, *n);
                let data = mat_mul_nn(a.data(), b.data(), m, k, n);
                let out = self.output("matmul", data, &[m, n])?;
                self.record(
                    "matmul",
                    &[a, b],
                    &out,
                    Box::new(move |ins, _, dout| {
                        let ga = ins[0]
                            .tracked()
                            .then(|| mat_mul_nt(dout, ins[1].data(), m, n, k));
                        let gb = ins[1]
                            .tracked()
                            .then(|| mat_mul_tn(ins[0].data(), dout, k, m, n));
                        vec![ga, gb]
                    }),
                );
                Ok(out)
            }
            ([bs, m, ka], [kb, n]) => {
                if ka != kb {
                    return Err(dim_err(a, b));
                }
                // Shared-weight case folds the batch into rows: [B·M,K]·[K,N].
                let (bs, m, k, n) = (*bs, *m, *ka, *n);
                let data = mat_mul_nn(a.data(), b.data(), bs * m, k, n);
                let out = self.output("matmul", data, &[bs, m, n])?;
                self.record(
                    "matmul",
                    &[a, b],
                    &out,
                    Box::new(move |ins, _, dout| {
                        let ga = ins[0]
                            .tracked()
                            .then(|| mat_mul_nt(dout, ins[1].data(), bs * m, n, k));
                        let gb = ins[1]
                            .tracked()
                            .then(|| mat_mul_tn(ins[0].data(), dout, k, bs * m, n));
                        vec![ga, gb]
                    }),
                );
                Ok(out)
            }
            ([ba, m, ka], [bb, kb, n]) => {
                if ba != bb || ka != kb {
                    return Err(dim_err(a, b));
                }
                let (bs, m, k, n) = (*ba, *m, *ka, *n);
                let mut data = vec![S::zero(); bs * m * n];
                for i in 0..bs {
                    let c = mat_mul_nn(&a.data()[i * m * k..(i + 1) * m * k],
                                       &b.data()[i * k * n..(i + 1) * k * n], m, k, n);
                    data[i * m * n..(i + 1) * m * n].copy_from_slice(&c);
                }
                let out = self.output("matmul", data, &[bs, m, n])?;
                self.record(
                    "matmul",
                    &[a, b],
                    &out,
                    Box::new(move |ins, _, dout| {
                        let (av, bv) = (ins[0].data(), ins[1].data());
                        let ga = ins[0].tracked().then(|| {
                            let mut g = vec![S::zero(); bs * m * k];
                            for i in 0..bs {
                                let gi = mat_mul_nt(
                                    &dout[i * m * n..(i + 1) * m * n],
                                    &bv[i * k * n..(i + 1) * k * n],
                                    m,
                                    n,
                                    k,
                                );
                                g[i * m * k..(i + 1) * m * k].copy_from_slice(&gi);
                            }
                            g
                        });
                        let gb = ins[1].tracked().then(|| {
                            let mut g = vec![S::zero(); bs * k * n];
                            for i in 0..bs {
                                let gi = mat_mul_tn(
                                    &av[i * m * k..(i + 1) * m * k],
                                    &dout[i * m * n..(i + 1) * m * n],
                                    k,
                                    m,
                                    n,
                                );
                                g[i * k * n..(i + 1) * k * n].copy_from_slice(&gi);
                            }
                            g
                        });
                        vec![ga, gb]
                    }),
                );
                Ok(out)
            }
            _ => Err(dim_err(a, b)),
        }
    }

    /// Swap the last two axes of a rank-2 or rank-3 tensor.
    pub fn transpose_last2(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let shape = x.shape().to_vec();
        if shape.len() != 2 && shape.len() != 3 {
            return Err(Error::dimension(format!(
                "transpose_last2: need rank 2 or 3, got {shape:?}"
            )));
        }
        let (bs, r, c) = match shape.as_slice() {
            [r, c] => (1, *r, *c),
            [b, r, c] => (*b, *r, *c),
            _ => unreachable!(),
        };
        let mut out_shape = shape.clone();
        let n = out_shape.len();
        out_shape.swap(n - 2, n - 1);
        let data = transpose_rc(x.data(), bs, r, c);
        let out = self.output("transpose", data, &out_shape)?;
        self.record(
            "transpose",
            &[x],
            &out,
            Box::new(move |_, _, dout| vec![Some(transpose_rc(dout, bs, c, r))]),
        );
        Ok(out)
    }
}

fn transpose_rc<S: Scalar>(x: &[S], bs: usize, r: usize, c: usize) -> Vec<S> {
    let mut out = vec![S::zero(); bs * r * c];
    for b in 0..bs {
        let src = &x[b * r * c..(b + 1) * r * c];
        let dst = &mut out[b * r * c..(b + 1) * r * c];
        for i in 0..r {
            for j in 0..c {
                dst[j * r + i] = src[i * c + j];
            }
        }
    }
    out
}

fn dim_err<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Error {
    Error::dimension(format!(
        "matmul: incompatible shapes {:?} and {:?}",
        a.shape(),
        b.shape()
    ))
}

#[cfg(test)]
mod tests {
    use crate::tensor::graph::Graph;

    #[test]
    fn identity_times_matrix_is_matrix() {
        let g: Graph<f64> = Graph::new();
        let eye = g.constant(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
        let m = g.constant(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let y = g.matmul(&eye, &m).unwrap();
        assert_eq!(y.data(), m.data());
    }

    #[test]
    fn row_times_column_is_dot_product() {
        // [[1,2]]·[[3],[4]] = [[11]]
        let g: Graph<f64> = Graph::new();
        let a = g.constant(vec![1.0, 2.0], &[1, 2]).unwrap();
        let b = g.constant(vec![3.0, 4.0], &[2, 1]).unwrap();
        let y = g.matmul(&a, &b).unwrap();
        assert_eq!(y.shape(), &[1, 1]);
        assert_eq!(y.data(), &[11.0]);
    }

    #[test]
    fn grad_of_sum_wrt_a_is_row_sums_of_b() {
        let g: Graph<f64> = Graph::new();
        let a = g.leaf(vec![0.5, -1.0, 2.0, 0.0, 1.0, 3.0], &[2, 3]).unwrap();
        let b = g
            .constant(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[3, 2])
            .unwrap();
        let y = g.matmul(&a, &b).unwrap();
        let loss = g.sum_all(&y).unwrap();
        g.backward(&loss).unwrap();
        // d sum(AB) / dA[i,p] = Σ_j B[p,j]
        assert_eq!(a.grad().unwrap(), vec![3.0, 7.0, 11.0, 3.0, 7.0, 11.0]);
    }

    #[test]
    fn shape_mismatch_reports_both_shapes() {
        let g: Graph<f64> = Graph::new();
        let a = g.constant(vec![0.0; 6], &[2, 3]).unwrap();
        let b = g.constant(vec![0.0; 4], &[2, 2]).unwrap();
        let msg = g.matmul(&a, &b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn batched_matches_per_item() {
        let g: Graph<f64> = Graph::new();
        let a = g
            .constant((0..12).map(f64::from).collect(), &[2, 2, 3])
            .unwrap();
        let b = g
            .constant((0..12).map(|v| f64::from(v) * 0.5).collect(), &[2, 3, 2])
            .unwrap();
        let y = g.matmul(&a, &b).unwrap();
        for i in 0..2 {
            let ai = g
                .constant(a.data()[i * 6..(i + 1) * 6].to_vec(), &[2, 3])
                .unwrap();
            let bi = g
                .constant(b.data()[i * 6..(i + 1) * 6].to_vec(), &[3, 2])
                .unwrap();
            let yi = g.matmul(&ai, &bi).unwrap();
            assert_eq!(&y.data()[i * 4..(i + 1) * 4], yi.data());
        }
    }

    #[test]
    fn transpose_roundtrips() {
        let g: Graph<f64> = Graph::new();
        let x = g
            .constant((0..24).map(f64::from).collect(), &[2, 3, 4])
            .unwrap();
        let t = g.transpose_last2(&x).unwrap();
        assert_eq!(t.shape(), &[2, 4, 3]);
        let back = g.transpose_last2(&t).unwrap();
        assert_eq!(back.data(), x.data());
    }
}
