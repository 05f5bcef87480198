use super::graph::Op;
use super::{Float, Graph, Tensor, Var};
use crate::error::{Error, Result};

fn pooled_hw(
    h: usize,
    w: usize,
    window: (usize, usize),
    stride: (usize, usize),
) -> Result<(usize, usize)> {
    if window.0 == 0 || window.1 == 0 || stride.0 == 0 || stride.1 == 0 {
        return Err(Error::invalid("pooling window and stride must be positive"));
    }
    if window.0 > h || window.1 > w {
        return Err(Error::shape(format!(
            "pooling window {window:?} larger than input {h}x{w}"
        )));
    }
    Ok(((h - window.0) / stride.0 + 1, (w - window.1) / stride.1 + 1))
}

impl<T: Float> Graph<T> {
    /// `[N, C, H, W] -> [N, C]` spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4("global_avg_pool")?;
        let hw = h * w;
        let inv = T::cst(1.0 / hw as f64);
        let xv = self.value(x).data();
        let out = (0..n * c)
            .map(|i| xv[i * hw..(i + 1) * hw].iter().copied().sum::<T>() * inv)
            .collect();
        let y = Tensor::new(&[n, c], out)?;
        Ok(self.push(y, Op::GlobalAvgPool(x), &[x]))
    }

    pub fn avg_pool(
        &mut self,
        x: Var,
        window: (usize, usize),
        stride: (usize, usize),
    ) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4("avg_pool")?;
        let (ho, wo) = pooled_hw(h, w, window, stride)?;
        let inv = T::cst(1.0 / (window.0 * window.1) as f64);
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); n * c * ho * wo];
        for i in 0..n * c {
            let plane = &xv[i * h * w..(i + 1) * h * w];
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut s = T::zero();
                    for ky in 0..window.0 {
                        for kx in 0..window.1 {
                            s += plane[(oy * stride.0 + ky) * w + ox * stride.1 + kx];
                        }
                    }
                    out[(i * ho + oy) * wo + ox] = s * inv;
                }
            }
        }
        let y = Tensor::new(&[n, c, ho, wo], out)?;
        Ok(self.push(y, Op::AvgPool { x, window, stride }, &[x]))
    }

    pub fn max_pool(
        &mut self,
        x: Var,
        window: (usize, usize),
        stride: (usize, usize),
    ) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4("max_pool")?;
        let (ho, wo) = pooled_hw(h, w, window, stride)?;
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); n * c * ho * wo];
        let mut argmax = vec![0usize; out.len()];
        for i in 0..n * c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = T::neg_infinity();
                    let mut at = 0;
                    for ky in 0..window.0 {
                        for kx in 0..window.1 {
                            let idx = i * h * w + (oy * stride.0 + ky) * w + ox * stride.1 + kx;
                            if xv[idx] > best {
                                best = xv[idx];
                                at = idx;
                            }
                        }
                    }
                    let o = (i * ho + oy) * wo + ox;
                    out[o] = best;
                    argmax[o] = at;
                }
            }
        }
        let y = Tensor::new(&[n, c, ho, wo], out)?;
        Ok(self.push(y, Op::MaxPool { x, argmax }, &[x]))
    }
}

pub(super) fn global_avg_backward<T: Float>(x: &Tensor<T>, gout: &Tensor<T>) -> Tensor<T> {
    let [_, _, h, w] = x.dims4("global_avg_pool").expect("checked");
    let hw = h * w;
    let inv = T::cst(1.0 / hw as f64);
    let mut dx = vec![T::zero(); x.numel()];
    for (i, &g) in gout.data().iter().enumerate() {
        dx[i * hw..(i + 1) * hw]
            .iter_mut()
            .for_each(|v| *v = g * inv);
    }
    Tensor::new(x.shape(), dx).expect("shape")
}

pub(super) fn avg_backward<T: Float>(
    x: &Tensor<T>,
    window: (usize, usize),
    stride: (usize, usize),
    gout: &Tensor<T>,
) -> Tensor<T> {
    let [n, c, h, w] = x.dims4("avg_pool").expect("checked");
    let [_, _, ho, wo] = gout.dims4("avg_pool").expect("checked");
    let inv = T::cst(1.0 / (window.0 * window.1) as f64);
    let go = gout.data();
    let mut dx = vec![T::zero(); x.numel()];
    for i in 0..n * c {
        for oy in 0..ho {
            for ox in 0..wo {
                let g = go[(i * ho + oy) * wo + ox] * inv;
                for ky in 0..window.0 {
                    for kx in 0..window.1 {
                        dx[i * h * w + (oy * stride.0 + ky) * w + ox * stride.1 + kx] += g;
                    }
                }
            }
        }
    }
    Tensor::new(x.shape(), dx).expect("shape")
}

pub(super) fn max_backward<T: Float>(
    x: &Tensor<T>,
    argmax: &[usize],
    gout: &Tensor<T>,
) -> Tensor<T> {
    let mut dx = vec![T::zero(); x.numel()];
    for (&at, &g) in argmax.iter().zip(gout.data()) {
        dx[at] += g;
    }
    Tensor::new(x.shape(), dx).expect("shape")
}
