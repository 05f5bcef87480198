use super::graph::Op;
use super::{Float, Graph, Tensor, Var};
use crate::error::{Error, Result};

fn sigmoid<T: Float>(v: T) -> T {
    // split by sign so exp never overflows
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

fn map<T: Float>(t: &Tensor<T>, f: impl Fn(T) -> T) -> Tensor<T> {
    Tensor::new(t.shape(), t.data().iter().map(|&v| f(v)).collect()).expect("same shape")
}

fn zip<T: Float>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    Tensor::new(
        a.shape(),
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect(),
    )
    .expect("same shape")
}

/// `(outer, axis_len, inner)` strides for reducing over `axis`.
fn axis_layout(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<T: Float> Graph<T> {
    pub fn relu(&mut self, x: Var) -> Var {
        let y = map(self.value(x), |v| if v > T::zero() { v } else { T::zero() });
        self.push(y, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y = map(self.value(x), sigmoid);
        self.push(y, Op::Sigmoid(x), &[x])
    }

    /// `x * sigmoid(x)`.
    pub fn swish(&mut self, x: Var) -> Var {
        let y = map(self.value(x), |v| v * sigmoid(v));
        self.push(y, Op::Swish(x), &[x])
    }

    /// Softmax along `axis`, stabilised by subtracting the running maximum.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xt = self.value(x);
        if axis >= xt.shape().len() {
            return Err(Error::shape(format!(
                "softmax axis {axis} out of range for shape {:?}",
                xt.shape()
            )));
        }
        let (outer, len, inner) = axis_layout(xt.shape(), axis);
        let xv = xt.data();
        let mut out = vec![T::zero(); xv.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |k: usize| (o * len + k) * inner + i;
                let mut max = T::neg_infinity();
                for k in 0..len {
                    max = max.max(xv[idx(k)]);
                }
                let mut sum = T::zero();
                for k in 0..len {
                    let e = (xv[idx(k)] - max).exp();
                    out[idx(k)] = e;
                    sum += e;
                }
                for k in 0..len {
                    out[idx(k)] /= sum;
                }
            }
        }
        let y = Tensor::new(xt.shape(), out)?;
        Ok(self.push(y, Op::Softmax { x, axis }, &[x]))
    }
}

pub(super) fn relu_backward<T: Float>(x: &Tensor<T>, gout: &Tensor<T>) -> Tensor<T> {
    zip(x, gout, |v, g| if v > T::zero() { g } else { T::zero() })
}

pub(super) fn sigmoid_backward<T: Float>(y: &Tensor<T>, gout: &Tensor<T>) -> Tensor<T> {
    zip(y, gout, |s, g| g * s * (T::one() - s))
}

pub(super) fn swish_backward<T: Float>(x: &Tensor<T>, gout: &Tensor<T>) -> Tensor<T> {
    zip(x, gout, |v, g| {
        let s = sigmoid(v);
        g * (s + v * s * (T::one() - s))
    })
}

pub(super) fn softmax_backward<T: Float>(
    y: &Tensor<T>,
    axis: usize,
    gout: &Tensor<T>,
) -> Tensor<T> {
    let (outer, len, inner) = axis_layout(y.shape(), axis);
    let yv = y.data();
    let go = gout.data();
    let mut dx = vec![T::zero(); yv.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * len + k) * inner + i;
            let dot: T = (0..len).map(|k| yv[idx(k)] * go[idx(k)]).sum();
            for k in 0..len {
                dx[idx(k)] = yv[idx(k)] * (go[idx(k)] - dot);
            }
        }
    }
    Tensor::new(y.shape(), dx).expect("same shape")
}
