//! Row-wise primitives the metric-learning and classification losses are
//! built from.

use super::graph::Op;
use super::{Float, Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Lower clamp applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-7;

impl<T: Float> Graph<T> {
    /// Squared Euclidean distances `[N, K]` between rows of `x: [N, D]` and
    /// rows of `c: [K, D]`.
    pub fn sqdist(&mut self, x: Var, c: Var) -> Result<Var> {
        let [n, d] = self.value(x).dims2("sqdist rows")?;
        let [k, d2] = self.value(c).dims2("sqdist centers")?;
        if d != d2 {
            return Err(Error::shape(format!("sqdist: widths {d} and {d2} differ")));
        }
        let (xv, cv) = (self.value(x).data(), self.value(c).data());
        let mut out = Vec::with_capacity(n * k);
        for i in 0..n {
            for j in 0..k {
                out.push(
                    xv[i * d..(i + 1) * d]
                        .iter()
                        .zip(&cv[j * d..(j + 1) * d])
                        .map(|(&a, &b)| (a - b) * (a - b))
                        .sum(),
                );
            }
        }
        let y = Tensor::new(&[n, k], out)?;
        Ok(self.push(y, Op::SqDist { x, c }, &[x, c]))
    }

    fn check_rows(&self, x: Var, idx: &[usize], what: &str) -> Result<[usize; 2]> {
        let [n, k] = self.value(x).dims2(what)?;
        if idx.len() != n {
            return Err(Error::shape(format!(
                "{what}: {} indices for {n} rows",
                idx.len()
            )));
        }
        if let Some(bad) = idx.iter().find(|&&i| i >= k) {
            return Err(Error::invalid(format!("{what}: column {bad} out of {k}")));
        }
        Ok([n, k])
    }

    /// `y[i] = x[i, idx[i]]`.
    pub fn gather(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let [n, k] = self.check_rows(x, idx, "gather")?;
        let xv = self.value(x).data();
        let out = (0..n).map(|i| xv[i * k + idx[i]]).collect();
        let y = Tensor::new(&[n], out)?;
        let flat = (0..n).map(|i| i * k + idx[i]).collect();
        Ok(self.push(y, Op::Gather { x, idx: flat }, &[x]))
    }

    /// `y[i] = min_{j != idx[i]} x[i, j]`; needs at least two columns.
    pub fn min_excluding(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let [n, k] = self.check_rows(x, idx, "min_excluding")?;
        if k < 2 {
            return Err(Error::shape("min_excluding needs at least two columns"));
        }
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(n);
        let mut arg = Vec::with_capacity(n);
        for i in 0..n {
            let (j, v) = (0..k)
                .filter(|&j| j != idx[i])
                .map(|j| (j, xv[i * k + j]))
                .fold((usize::MAX, T::infinity()), |best, cur| {
                    if cur.1 < best.1 {
                        cur
                    } else {
                        best
                    }
                });
            out.push(v);
            arg.push(i * k + j);
        }
        let y = Tensor::new(&[n], out)?;
        Ok(self.push(y, Op::MinExcluding { x, arg }, &[x]))
    }

    /// Per-sample focal loss `-alpha (1 - p)^gamma ln p` on true-class
    /// probabilities `p: [N]`, with `p` clamped below at 1e-7.
    pub fn focal(&mut self, p: Var, alpha: &[T], gamma: T) -> Result<Var> {
        let pv = self.value(p);
        if pv.shape().len() != 1 || alpha.len() != pv.numel() {
            return Err(Error::shape(
                "focal: expects [N] probabilities and N weights",
            ));
        }
        let floor = T::cst(PROB_FLOOR);
        let out = pv
            .data()
            .iter()
            .zip(alpha)
            .map(|(&p, &a)| {
                let p = p.max(floor).min(T::one());
                -a * (T::one() - p).powf(gamma) * p.ln()
            })
            .collect();
        let y = Tensor::new(pv.shape(), out)?;
        Ok(self.push(
            y,
            Op::Focal {
                p,
                alpha: alpha.to_vec(),
                gamma,
            },
            &[p],
        ))
    }

    /// Per-sample weighted negative log-likelihood `-w ln p` on true-class
    /// probabilities `p: [N]`, clamped below at 1e-7.
    pub fn weighted_nll(&mut self, p: Var, weights: &[T]) -> Result<Var> {
        let pv = self.value(p);
        if pv.shape().len() != 1 || weights.len() != pv.numel() {
            return Err(Error::shape(
                "weighted_nll: expects [N] probabilities and N weights",
            ));
        }
        let floor = T::cst(PROB_FLOOR);
        let out = pv
            .data()
            .iter()
            .zip(weights)
            .map(|(&p, &w)| -w * p.max(floor).ln())
            .collect();
        let y = Tensor::new(pv.shape(), out)?;
        Ok(self.push(
            y,
            Op::WeightedNll {
                p,
                weights: weights.to_vec(),
            },
            &[p],
        ))
    }
}

pub(super) fn sqdist_backward<T: Float>(
    graph: &Graph<T>,
    x: Var,
    c: Var,
    gout: &Tensor<T>,
) -> Vec<(Var, Tensor<T>)> {
    let xt = graph.value(x);
    let ct = graph.value(c);
    let [n, d] = xt.dims2("sqdist").expect("checked");
    let k = ct.shape()[0];
    let (xv, cv, go) = (xt.data(), ct.data(), gout.data());
    let mut dx = vec![T::zero(); n * d];
    let mut dc = vec![T::zero(); k * d];
    let two = T::cst(2.0);
    for i in 0..n {
        for j in 0..k {
            let g = two * go[i * k + j];
            for t in 0..d {
                let diff = g * (xv[i * d + t] - cv[j * d + t]);
                dx[i * d + t] += diff;
                dc[j * d + t] -= diff;
            }
        }
    }
    let mut grads = Vec::with_capacity(2);
    if graph.needs(x) {
        grads.push((x, Tensor::new(&[n, d], dx).expect("shape")));
    }
    if graph.needs(c) {
        grads.push((c, Tensor::new(&[k, d], dc).expect("shape")));
    }
    grads
}

/// Backward of gather-style ops: route each output gradient to its source.
pub(super) fn pick_backward<T: Float>(
    x: &Tensor<T>,
    flat: &[usize],
    gout: &Tensor<T>,
) -> Tensor<T> {
    let mut dx = vec![T::zero(); x.numel()];
    for (&at, &g) in flat.iter().zip(gout.data()) {
        dx[at] += g;
    }
    Tensor::new(x.shape(), dx).expect("shape")
}

pub(super) fn focal_backward<T: Float>(
    p: &Tensor<T>,
    alpha: &[T],
    gamma: T,
    gout: &Tensor<T>,
) -> Tensor<T> {
    let floor = T::cst(PROB_FLOOR);
    let dp = p
        .data()
        .iter()
        .zip(alpha)
        .zip(gout.data())
        .map(|((&p, &a), &g)| {
            if p < floor || p > T::one() {
                return T::zero();
            }
            let q = T::one() - p;
            // d/dp of (1-p)^gamma ln p; the second term vanishes as p -> 1
            let first = q.powf(gamma) / p;
            let second = if q > T::zero() && gamma != T::zero() {
                gamma * q.powf(gamma - T::one()) * p.ln()
            } else {
                T::zero()
            };
            -g * a * (first - second)
        })
        .collect();
    Tensor::new(p.shape(), dp).expect("shape")
}

pub(super) fn nll_backward<T: Float>(p: &Tensor<T>, weights: &[T], gout: &Tensor<T>) -> Tensor<T> {
    let floor = T::cst(PROB_FLOOR);
    let dp = p
        .data()
        .iter()
        .zip(weights)
        .zip(gout.data())
        .map(|((&p, &w), &g)| if p < floor { T::zero() } else { -g * w / p })
        .collect();
    Tensor::new(p.shape(), dp).expect("shape")
}
