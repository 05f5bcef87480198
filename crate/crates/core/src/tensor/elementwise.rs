use super::graph::Op;
use super::{Float, Graph, Tensor, Var};
use crate::error::{Error, Result};

pub(super) fn scaled<T: Float>(t: &Tensor<T>, c: T) -> Tensor<T> {
    Tensor::new(t.shape(), t.data().iter().map(|&v| v * c).collect()).expect("same shape")
}

/// `(n, c, rest)` view used by the channel ops; works for rank >= 2.
fn channel_layout(shape: &[usize]) -> (usize, usize, usize) {
    (shape[0], shape[1], shape[2..].iter().product())
}

impl<T: Float> Graph<T> {
    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let (at, bt) = (self.value(a), self.value(b));
        let data = at
            .data()
            .iter()
            .zip(bt.data())
            .map(|(&x, &y)| x + y)
            .collect();
        let y = Tensor::new(at.shape(), data)?;
        Ok(self.push(y, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let (at, bt) = (self.value(a), self.value(b));
        let data = at
            .data()
            .iter()
            .zip(bt.data())
            .map(|(&x, &y)| x * y)
            .collect();
        let y = Tensor::new(at.shape(), data)?;
        Ok(self.push(y, Op::Mul(a, b), &[a, b]))
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Var {
        let xt = self.value(x);
        let y = Tensor::new(xt.shape(), xt.data().iter().map(|&v| v + c).collect())
            .expect("same shape");
        self.push(y, Op::AddScalar(x), &[x])
    }

    pub fn mul_scalar(&mut self, x: Var, c: T) -> Var {
        let y = scaled(self.value(x), c);
        self.push(y, Op::MulScalar(x, c), &[x])
    }

    /// Multiplies every channel plane of `x: [N, C, ...]` by `s: [N, C]`.
    pub fn scale_channels(&mut self, x: Var, s: Var) -> Result<Var> {
        let xt = self.value(x);
        if xt.shape().len() < 2 || self.shape(s) != &xt.shape()[..2] {
            return Err(Error::shape(format!(
                "scale_channels: gate {:?} does not match input {:?}",
                self.shape(s),
                xt.shape()
            )));
        }
        let (n, c, rest) = channel_layout(xt.shape());
        let sv = self.value(s).data();
        let mut out = xt.data().to_vec();
        for i in 0..n * c {
            out[i * rest..(i + 1) * rest]
                .iter_mut()
                .for_each(|v| *v *= sv[i]);
        }
        let y = Tensor::new(xt.shape(), out)?;
        Ok(self.push(y, Op::ScaleChannels { x, s }, &[x, s]))
    }

    /// Concatenation along the channel axis (dim 1).
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self
            .shape(
                *parts
                    .first()
                    .ok_or_else(|| Error::invalid("concat of nothing"))?,
            )
            .to_vec();
        let mut total_c = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != first.len() || s[0] != first[0] || s[2..] != first[2..] {
                return Err(Error::shape(format!(
                    "concat: {s:?} incompatible with {first:?}"
                )));
            }
            total_c += s[1];
        }
        let (n, _, rest) = channel_layout(&first);
        let mut out = Vec::with_capacity(n * total_c * rest);
        for s in 0..n {
            for &p in parts {
                let c = self.shape(p)[1];
                out.extend_from_slice(&self.value(p).data()[s * c * rest..(s + 1) * c * rest]);
            }
        }
        let mut shape = first;
        shape[1] = total_c;
        let y = Tensor::new(&shape, out)?;
        Ok(self.push(y, Op::Concat(parts.to_vec()), parts))
    }

    /// Channels `start..start + len` of `x: [N, C, ...]`.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xt = self.value(x);
        let (n, c, rest) = channel_layout(xt.shape());
        if len == 0 || start + len > c {
            return Err(Error::shape(format!(
                "slice {start}..{} out of {c} channels",
                start + len
            )));
        }
        let mut out = Vec::with_capacity(n * len * rest);
        for s in 0..n {
            out.extend_from_slice(&xt.data()[(s * c + start) * rest..(s * c + start + len) * rest]);
        }
        let mut shape = xt.shape().to_vec();
        shape[1] = len;
        let y = Tensor::new(&shape, out)?;
        Ok(self.push(y, Op::SliceChannels { x, start }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let y = self.value(x).clone().reshape(shape)?;
        Ok(self.push(y, Op::Reshape(x), &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xt = self.value(x);
        let s: T = xt.data().iter().copied().sum();
        let m = s / T::cst(xt.numel() as f64);
        self.push(Tensor::scalar(m), Op::Mean(x), &[x])
    }
}

pub(super) fn mul_backward<T: Float>(
    graph: &Graph<T>,
    a: Var,
    b: Var,
    gout: &Tensor<T>,
) -> Vec<(Var, Tensor<T>)> {
    let prod = |other: Var| {
        let data = gout
            .data()
            .iter()
            .zip(graph.value(other).data())
            .map(|(&g, &v)| g * v)
            .collect();
        Tensor::new(gout.shape(), data).expect("same shape")
    };
    let mut grads = Vec::with_capacity(2);
    if graph.needs(a) {
        grads.push((a, prod(b)));
    }
    if graph.needs(b) {
        grads.push((b, prod(a)));
    }
    grads
}

pub(super) fn scale_channels_backward<T: Float>(
    graph: &Graph<T>,
    x: Var,
    s: Var,
    gout: &Tensor<T>,
) -> Vec<(Var, Tensor<T>)> {
    let xt = graph.value(x);
    let (n, c, rest) = channel_layout(xt.shape());
    let sv = graph.value(s).data();
    let go = gout.data();
    let mut grads = Vec::with_capacity(2);
    if graph.needs(x) {
        let mut dx = go.to_vec();
        for i in 0..n * c {
            dx[i * rest..(i + 1) * rest]
                .iter_mut()
                .for_each(|v| *v *= sv[i]);
        }
        grads.push((x, Tensor::new(xt.shape(), dx).expect("shape")));
    }
    if graph.needs(s) {
        let xv = xt.data();
        let ds = (0..n * c)
            .map(|i| {
                go[i * rest..(i + 1) * rest]
                    .iter()
                    .zip(&xv[i * rest..(i + 1) * rest])
                    .map(|(&g, &v)| g * v)
                    .sum()
            })
            .collect();
        grads.push((s, Tensor::new(&[n, c], ds).expect("shape")));
    }
    grads
}

pub(super) fn concat_backward<T: Float>(
    graph: &Graph<T>,
    parts: &[Var],
    gout: &Tensor<T>,
) -> Vec<(Var, Tensor<T>)> {
    let (n, total_c, rest) = channel_layout(gout.shape());
    let mut grads = Vec::with_capacity(parts.len());
    let mut offset = 0;
    for &p in parts {
        let c = graph.shape(p)[1];
        if graph.needs(p) {
            let mut d = Vec::with_capacity(n * c * rest);
            for s in 0..n {
                d.extend_from_slice(
                    &gout.data()[(s * total_c + offset) * rest..(s * total_c + offset + c) * rest],
                );
            }
            grads.push((p, Tensor::new(graph.shape(p), d).expect("shape")));
        }
        offset += c;
    }
    grads
}

pub(super) fn slice_backward<T: Float>(x: &Tensor<T>, start: usize, gout: &Tensor<T>) -> Tensor<T> {
    let (n, c, rest) = channel_layout(x.shape());
    let len = gout.shape()[1];
    let mut dx = vec![T::zero(); x.numel()];
    for s in 0..n {
        dx[(s * c + start) * rest..(s * c + start + len) * rest]
            .copy_from_slice(&gout.data()[s * len * rest..(s + 1) * len * rest]);
    }
    Tensor::new(x.shape(), dx).expect("shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_then_slice_roundtrips() {
        let mut g = Graph::<f64>::new();
        let a = g.input(Tensor::from_f64(&[2, 1, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap());
        let b =
            g.input(Tensor::from_f64(&[2, 2, 2], &[5., 6., 7., 8., 9., 10., 11., 12.]).unwrap());
        let c = g.concat_channels(&[a, b]).unwrap();
        assert_eq!(
            g.value(c).data(),
            &[1., 2., 5., 6., 7., 8., 3., 4., 9., 10., 11., 12.]
        );
        let back = g.slice_channels(c, 1, 2).unwrap();
        assert_eq!(g.value(back), g.value(b));
    }

    #[test]
    fn mismatched_add_rejected() {
        let mut g = Graph::<f64>::new();
        let a = g.input(Tensor::zeros(&[2]));
        let b = g.input(Tensor::zeros(&[3]));
        assert!(g.add(a, b).is_err());
    }
}
