use super::graph::Op;
use super::{Float, Graph, Tensor, Var};
use crate::error::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Running statistics updated by a training-mode batch norm.
pub struct RunningStats<'a, T> {
    pub mean: &'a mut [T],
    pub var: &'a mut [T],
}

impl<T: Float> Graph<T> {
    /// Per-channel batch normalisation of an `[N, C, H, W]` tensor.
    ///
    /// Training mode normalises with batch statistics and, when `running` is
    /// given, folds them into the running estimates with momentum 0.1.
    /// Inference mode normalises with the running estimates, which must then
    /// be supplied.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: Option<RunningStats<'_, T>>,
        training: bool,
    ) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4("batch_norm")?;
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::shape(format!(
                "batch_norm over {c} channels got affine shapes {:?}/{:?}",
                self.shape(gamma),
                self.shape(beta)
            )));
        }
        let hw = h * w;
        let m = n * hw;
        let eps = T::cst(BN_EPSILON);
        let xv = self.value(x).data();
        let (mean, inv_std) = if training {
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            for ch in 0..c {
                let mut s = 0.0f64;
                for s_ in 0..n {
                    s += xv[(s_ * c + ch) * hw..][..hw]
                        .iter()
                        .map(|v| v.as_f64())
                        .sum::<f64>();
                }
                let mu = s / m as f64;
                let mut q = 0.0f64;
                for s_ in 0..n {
                    q += xv[(s_ * c + ch) * hw..][..hw]
                        .iter()
                        .map(|v| {
                            let d = v.as_f64() - mu;
                            d * d
                        })
                        .sum::<f64>();
                }
                mean[ch] = T::cst(mu);
                var[ch] = T::cst(q / m as f64);
            }
            if let Some(r) = running {
                let mom = T::cst(BN_MOMENTUM);
                let unbias = if m > 1 {
                    T::cst(m as f64 / (m - 1) as f64)
                } else {
                    T::one()
                };
                for ch in 0..c {
                    r.mean[ch] = (T::one() - mom) * r.mean[ch] + mom * mean[ch];
                    r.var[ch] = (T::one() - mom) * r.var[ch] + mom * var[ch] * unbias;
                }
            }
            let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
            (mean, inv_std)
        } else {
            let r = running.ok_or_else(|| {
                Error::invalid("inference-mode batch_norm requires running statistics")
            })?;
            if r.mean.len() != c || r.var.len() != c {
                return Err(Error::shape("running statistics length mismatch"));
            }
            let inv_std: Vec<T> = r.var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
            (r.mean.to_vec(), inv_std)
        };
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let mut out = vec![T::zero(); xv.len()];
        for s in 0..n {
            for ch in 0..c {
                let scale = gv[ch] * inv_std[ch];
                let shift = bv[ch] - mean[ch] * scale;
                let off = (s * c + ch) * hw;
                for (o, &v) in out[off..off + hw].iter_mut().zip(&xv[off..off + hw]) {
                    *o = v * scale + shift;
                }
            }
        }
        let value = Tensor::new(&[n, c, h, w], out)?;
        Ok(self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                inv_std,
                training,
            },
            &[x, gamma, beta],
        ))
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn backward<T: Float>(
    graph: &Graph<T>,
    x: Var,
    gamma: Var,
    beta: Var,
    mean: &[T],
    inv_std: &[T],
    training: bool,
    gout: &Tensor<T>,
) -> Vec<(Var, Tensor<T>)> {
    let xt = graph.value(x);
    let [n, c, h, w] = xt.dims4("batch_norm").expect("checked in forward");
    let hw = h * w;
    let m = T::cst((n * hw) as f64);
    let xv = xt.data();
    let go = gout.data();
    let gv = graph.value(gamma).data();

    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for s in 0..n {
        for ch in 0..c {
            let off = (s * c + ch) * hw;
            for i in off..off + hw {
                let xhat = (xv[i] - mean[ch]) * inv_std[ch];
                dgamma[ch] += go[i] * xhat;
                dbeta[ch] += go[i];
            }
        }
    }

    let mut grads = Vec::with_capacity(3);
    if graph.needs(x) {
        let mut dx = vec![T::zero(); xv.len()];
        for s in 0..n {
            for ch in 0..c {
                let off = (s * c + ch) * hw;
                let k = gv[ch] * inv_std[ch];
                for i in off..off + hw {
                    dx[i] = if training {
                        let xhat = (xv[i] - mean[ch]) * inv_std[ch];
                        k * (go[i] - dbeta[ch] / m - xhat * dgamma[ch] / m)
                    } else {
                        k * go[i]
                    };
                }
            }
        }
        grads.push((x, Tensor::new(xt.shape(), dx).expect("shape")));
    }
    if graph.needs(gamma) {
        grads.push((gamma, Tensor::new(&[c], dgamma).expect("shape")));
    }
    if graph.needs(beta) {
        grads.push((beta, Tensor::new(&[c], dbeta).expect("shape")));
    }
    grads
}
