//! Pointwise operations, broadcast addition, and full reductions.

use super::same_shape;
use crate::error::{Error, Result};
use crate::tensor::graph::Graph;
use crate::tensor::{Scalar, Tensor};

impl<S: Scalar> Graph<S> {
    /// Shared skeleton for unary pointwise ops. `df(x, y)` is the local
    /// derivative given the input and the already-computed output.
    fn unary(
        &self,
        op: &'static str,
        x: &Tensor<S>,
        f: impl Fn(S) -> S,
        df: fn(S, S) -> S,
    ) -> Result<Tensor<S>> {
        let data: Vec<S> = x.data().iter().map(|&v| f(v)).collect();
        let out = self.output(op, data, x.shape())?;
        self.record(
            op,
            &[x],
            &out,
            Box::new(move |ins, out, dout| {
                let g = ins[0]
                    .data()
                    .iter()
                    .zip(out.data())
                    .zip(dout)
                    .map(|((&x, &y), &d)| d * df(x, y))
                    .collect();
                vec![Some(g)]
            }),
        );
        Ok(out)
    }

    pub fn relu(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.unary(
            "relu",
            x,
            |v| if v > S::zero() { v } else { S::zero() },
            |x, _| if x > S::zero() { S::one() } else { S::zero() },
        )
    }

    /// Numerically stable logistic; output strictly inside (0, 1).
    pub fn sigmoid(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.unary(
            "sigmoid",
            x,
            |v| {
                if v >= S::zero() {
                    S::one() / (S::one() + (-v).exp())
                } else {
                    let e = v.exp();
                    e / (S::one() + e)
                }
            },
            |_, y| y * (S::one() - y),
        )
    }

    pub fn exp(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.unary("exp", x, |v| v.exp(), |_, y| y)
    }

    pub fn add(&self, a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
        same_shape("add", a, b)?;
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
        let out = self.output("add", data, a.shape())?;
        self.record(
            "add",
            &[a, b],
            &out,
            Box::new(|ins, _, dout| {
                let ga = ins[0].tracked().then(|| dout.to_vec());
                let gb = ins[1].tracked().then(|| dout.to_vec());
                vec![ga, gb]
            }),
        );
        Ok(out)
    }

    pub fn sub(&self, a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
        same_shape("sub", a, b)?;
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x - y).collect();
        let out = self.output("sub", data, a.shape())?;
        self.record(
            "sub",
            &[a, b],
            &out,
            Box::new(|ins, _, dout| {
                let ga = ins[0].tracked().then(|| dout.to_vec());
                let gb = ins[1]
                    .tracked()
                    .then(|| dout.iter().map(|&d| -d).collect());
                vec![ga, gb]
            }),
        );
        Ok(out)
    }

    pub fn mul(&self, a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
        same_shape("mul", a, b)?;
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
        let out = self.output("mul", data, a.shape())?;
        self.record(
            "mul",
            &[a, b],
            &out,
            Box::new(|ins, _, dout| {
                let ga = ins[0]
                    .tracked()
                    .then(|| ins[1].data().iter().zip(dout).map(|(&y, &d)| d * y).collect());
                let gb = ins[1]
                    .tracked()
                    .then(|| ins[0].data().iter().zip(dout).map(|(&x, &d)| d * x).collect());
                vec![ga, gb]
            }),
        );
        Ok(out)
    }

    pub fn div(&self, a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
        same_shape("div", a, b)?;
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x / y).collect();
        let out = self.output("div", data, a.shape())?;
        self.record(
            "div",
            &[a, b],
            &out,
            Box::new(|ins, _, dout| {
                let (a, b) = (ins[0].data(), ins[1].data());
                let ga = ins[0]
                    .tracked()
                    .then(|| b.iter().zip(dout).map(|(&y, &d)| d / y).collect());
                let gb = ins[1].tracked().then(|| {
                    a.iter()
                        .zip(b)
                        .zip(dout)
                        .map(|((&x, &y), &d)| -d * x / (y * y))
                        .collect()
                });
                vec![ga, gb]
            }),
        );
        Ok(out)
    }

    /// Multiply by a compile-time-known constant.
    pub fn scale(&self, x: &Tensor<S>, c: S) -> Result<Tensor<S>> {
        let data = x.data().iter().map(|&v| v * c).collect();
        let out = self.output("scale", data, x.shape())?;
        self.record(
            "scale",
            &[x],
            &out,
            Box::new(move |_, _, dout| vec![Some(dout.iter().map(|&d| d * c).collect())]),
        );
        Ok(out)
    }

    /// `a + b` where `b`'s shape is a suffix of `a`'s shape (`b` repeats over
    /// the leading dimensions). Covers bias rows and positional tables.
    pub fn add_broadcast(&self, a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
        let (sa, sb) = (a.shape(), b.shape());
        if sb.len() > sa.len() || &sa[sa.len() - sb.len()..] != sb {
            return Err(Error::dimension(format!(
                "add_broadcast: {sb:?} is not a suffix of {sa:?}"
            )));
        }
        let nb = b.numel().max(1);
        let data = a
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + b.data()[i % nb])
            .collect();
        let out = self.output("add_broadcast", data, sa)?;
        self.record(
            "add_broadcast",
            &[a, b],
            &out,
            Box::new(move |ins, _, dout| {
                let ga = ins[0].tracked().then(|| dout.to_vec());
                let gb = ins[1].tracked().then(|| {
                    let mut g = vec![S::zero(); nb];
                    for (i, &d) in dout.iter().enumerate() {
                        g[i % nb] += d;
                    }
                    g
                });
                vec![ga, gb]
            }),
        );
        Ok(out)
    }

    /// Sum of all elements, as a scalar tensor.
    pub fn sum_all(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let total = x.data().iter().copied().sum();
        let out = self.output("sum_all", vec![total], &[1])?;
        self.record(
            "sum_all",
            &[x],
            &out,
            Box::new(|ins, _, dout| vec![Some(vec![dout[0]; ins[0].numel()])]),
        );
        Ok(out)
    }

    pub fn mean_all(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let n = S::from_usize(x.numel());
        let s = self.sum_all(x)?;
        self.scale(&s, S::one() / n)
    }

    /// Weighted sum with fixed weights; the independent-oracle loss used by
    /// gradient checks (a plain sum would hide row-coupled errors).
    pub fn weighted_sum(&self, x: &Tensor<S>, weights: &[S]) -> Result<Tensor<S>> {
        if weights.len() != x.numel() {
            return Err(Error::dimension(format!(
                "weighted_sum: {} weights for {} elements",
                weights.len(),
                x.numel()
            )));
        }
        let total = x
            .data()
            .iter()
            .zip(weights)
            .map(|(&v, &w)| v * w)
            .sum();
        let out = self.output("weighted_sum", vec![total], &[1])?;
        let w = weights.to_vec();
        self.record(
            "weighted_sum",
            &[x],
            &out,
            Box::new(move |_, _, dout| {
                vec![Some(w.iter().map(|&wi| wi * dout[0]).collect())]
            }),
        );
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use crate::tensor::graph::Graph;
    use crate::tensor::Tensor;

    #[test]
    fn sigmoid_midpoint_and_range() {
        let g: Graph<f64> = Graph::new();
        let x = g.constant(vec![0.0, -50.0, 50.0], &[3]).unwrap();
        let y = g.sigmoid(&x).unwrap();
        assert_eq!(y.data()[0], 0.5);
        for &v in y.data() {
            assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn relu_clamps_negative() {
        let g: Graph<f64> = Graph::new();
        let x = g.constant(vec![-3.0, 3.0], &[2]).unwrap();
        let y = g.relu(&x).unwrap();
        assert_eq!(y.data(), &[0.0, 3.0]);
    }

    #[test]
    fn exp_of_sigmoid_stays_in_open_interval() {
        // exp(sigmoid(x)) ∈ (1, e) for any finite x.
        let g: Graph<f64> = Graph::new();
        let x = g.constant(vec![-50.0, 0.0, 50.0], &[3]).unwrap();
        let y = g.exp(&g.sigmoid(&x).unwrap()).unwrap();
        for &v in y.data() {
            assert!(v > 1.0 && v < std::f64::consts::E, "{v}");
        }
    }

    #[test]
    fn sum_of_squares_gradient_is_2x() {
        let g: Graph<f64> = Graph::new();
        let x = g.leaf(vec![1.0, -2.0, 0.5], &[3]).unwrap();
        let y = g.mul(&x, &x).unwrap();
        let loss = g.sum_all(&y).unwrap();
        g.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, -4.0, 1.0]);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let g: Graph<f64> = Graph::new();
        let x = g.leaf(vec![5.0, 7.0], &[2]).unwrap();
        let loss = g.sum_all(&x).unwrap();
        g.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn broadcast_add_sums_gradient_over_leading_dims() {
        let g: Graph<f64> = Graph::new();
        let a = g.leaf(vec![0.0; 6], &[2, 3]).unwrap();
        let b = g.leaf(vec![1.0, 2.0, 3.0], &[3]).unwrap();
        let y = g.add_broadcast(&a, &b).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let loss = g.sum_all(&y).unwrap();
        g.backward(&loss).unwrap();
        assert_eq!(b.grad().unwrap(), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn non_finite_output_is_caught_when_checks_on() {
        let g: Graph<f64> = Graph::new();
        let x = g.constant(vec![1000.0], &[1]).unwrap();
        assert!(g.exp(&x).is_err());
        g.set_checks(false);
        let y = g.exp(&x).unwrap();
        assert!(y.data()[0].is_infinite());
    }
}
