use super::graph::Op;
use super::{gemm, Float, Graph, MatView, Tensor, Var};
use crate::error::{Error, Result};

impl<T: Float> Graph<T> {
    /// Affine map `x W + b` for `x: [N, D]`, `W: [D, E]`, `b: [E]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let [n, d] = self.value(x).dims2("linear input")?;
        let [d2, e] = self.value(w).dims2("linear weight")?;
        if d != d2 {
            return Err(Error::shape(format!(
                "linear: input width {d} does not match weight rows {d2}"
            )));
        }
        if let Some(b) = b {
            if self.shape(b) != [e] {
                return Err(Error::shape(format!(
                    "linear: bias shape {:?}, expected [{e}]",
                    self.shape(b)
                )));
            }
        }
        let mut out = match b {
            Some(b) => {
                let bv = self.value(b).data();
                (0..n).flat_map(|_| bv.iter().copied()).collect()
            }
            None => vec![T::zero(); n * e],
        };
        gemm(
            self.value(x).data(),
            MatView::plain(n, d),
            self.value(w).data(),
            MatView::plain(d, e),
            &mut out,
            T::one(),
        );
        let y = Tensor::new(&[n, e], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(y, Op::Linear { x, w, b }, &inputs))
    }
}

pub(super) fn backward<T: Float>(
    graph: &Graph<T>,
    x: Var,
    w: Var,
    b: Option<Var>,
    gout: &Tensor<T>,
) -> Vec<(Var, Tensor<T>)> {
    let xt = graph.value(x);
    let wt = graph.value(w);
    let [n, d] = xt.dims2("linear").expect("checked");
    let e = wt.shape()[1];
    let mut grads = Vec::with_capacity(3);
    if graph.needs(x) {
        let mut dx = vec![T::zero(); n * d];
        gemm(
            gout.data(),
            MatView::plain(n, e),
            wt.data(),
            MatView::t(d, e),
            &mut dx,
            T::zero(),
        );
        grads.push((x, Tensor::new(&[n, d], dx).expect("shape")));
    }
    if graph.needs(w) {
        let mut dw = vec![T::zero(); d * e];
        gemm(
            xt.data(),
            MatView::t(n, d),
            gout.data(),
            MatView::plain(n, e),
            &mut dw,
            T::zero(),
        );
        grads.push((w, Tensor::new(&[d, e], dw).expect("shape")));
    }
    if let Some(b) = b.filter(|&b| graph.needs(b)) {
        let mut db = vec![T::zero(); e];
        for row in gout.data().chunks(e) {
            for (acc, &g) in db.iter_mut().zip(row) {
                *acc += g;
            }
        }
        grads.push((b, Tensor::new(&[e], db).expect("shape")));
    }
    grads
}
