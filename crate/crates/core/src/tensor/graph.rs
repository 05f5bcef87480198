use std::collections::HashMap;

use super::{ConvSpec, Float, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

pub(crate) enum Op<T> {
    Input,
    Param,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        spec: ConvSpec,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<T>,
        inv_std: Vec<T>,
        training: bool,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Relu(Var),
    Sigmoid(Var),
    Swish(Var),
    Softmax {
        x: Var,
        axis: usize,
    },
    Add(Var, Var),
    Mul(Var, Var),
    AddScalar(Var),
    MulScalar(Var, T),
    ScaleChannels {
        x: Var,
        s: Var,
    },
    GlobalAvgPool(Var),
    AvgPool {
        x: Var,
        window: (usize, usize),
        stride: (usize, usize),
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Concat(Vec<Var>),
    SliceChannels {
        x: Var,
        start: usize,
    },
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    SqDist {
        x: Var,
        c: Var,
    },
    Gather {
        x: Var,
        idx: Vec<usize>,
    },
    MinExcluding {
        x: Var,
        arg: Vec<usize>,
    },
    Focal {
        p: Var,
        alpha: Vec<T>,
        gamma: T,
    },
    WeightedNll {
        p: Var,
        weights: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    requires_grad: bool,
    op: Op<T>,
}

/// Tape of executed operations.
///
/// Nodes are appended in execution order, so every node's inputs precede it
/// and a single reverse sweep visits each node exactly once.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, Var>,
}

impl<T: Float> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Float> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant input that never receives a gradient.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: Op::Input,
        });
        Var(self.nodes.len() - 1)
    }

    /// Binds a stored parameter into the graph. Each parameter is bound once
    /// per graph; later calls return the same node.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let p = store.get(id);
        self.nodes.push(Node {
            value: p.value.clone(),
            grad: None,
            requires_grad: p.trainable,
            op: Op::Param,
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Fingerprint of every piecewise choice made in the forward pass: ReLU
    /// signs, max-pool and min winners, and probability clamps. Two
    /// evaluations with equal fingerprints lie on the same smooth piece.
    pub fn branch_signature(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        let floor = T::cst(super::loss_ops::PROB_FLOOR);
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => {
                    for v in self.value(*x).data() {
                        (*v > T::zero()).hash(&mut h);
                    }
                }
                Op::MaxPool { argmax, .. } => argmax.hash(&mut h),
                Op::MinExcluding { arg, .. } => arg.hash(&mut h),
                Op::Focal { p, .. } | Op::WeightedNll { p, .. } => {
                    for v in self.value(*p).data() {
                        (*v < floor, *v > T::one()).hash(&mut h);
                    }
                }
                _ => {}
            }
        }
        h.finish()
    }

    /// Clears every gradient on the graph.
    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Reverse sweep from a scalar `loss`. Gradients accumulate into leaf
    /// nodes across calls; intermediate gradients are released as soon as
    /// they have been propagated.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss).to_vec();
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got shape {shape:?}"
            )));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.accumulate(loss, Tensor::full(&shape, T::one()));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let leaf = matches!(self.nodes[i].op, Op::Input | Op::Param);
            if leaf {
                continue;
            }
            let Some(gout) = self.nodes[i].grad.take() else {
                continue;
            };
            let contributions = self.backward_node(Var(i), &gout);
            for (v, g) in contributions {
                if self.nodes[v.0].requires_grad {
                    self.accumulate(v, g);
                }
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: Tensor<T>) {
        assert_eq!(g.shape(), self.nodes[v.0].value.shape());
        let node = &mut self.nodes[v.0];
        match &mut node.grad {
            Some(acc) => acc.add_assign(&g),
            None => node.grad = Some(g),
        }
    }

    /// Adds the gradients of every bound parameter into the store.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore<T>) {
        let mut bound: Vec<_> = self.params.iter().collect();
        bound.sort();
        for (&id, &v) in bound {
            if let Some(g) = &self.nodes[v.0].grad {
                store.accumulate_grad(id, g);
            }
        }
    }

    /// Parameters bound into this graph, in store order.
    pub fn bound_params(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = self.params.keys().copied().collect();
        ids.sort();
        ids
    }

    pub(crate) fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backward_node(&self, out: Var, gout: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
        use super::{activation, conv, elementwise, linear, loss_ops, norm, pool};
        let y = self.value(out);
        match &self.nodes[out.0].op {
            Op::Input | Op::Param => Vec::new(),
            Op::Conv2d { x, w, b, spec } => conv::backward(self, *x, *w, *b, spec, gout),
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                inv_std,
                training,
            } => norm::backward(self, *x, *gamma, *beta, mean, inv_std, *training, gout),
            Op::Linear { x, w, b } => linear::backward(self, *x, *w, *b, gout),
            Op::Relu(x) => vec![(*x, activation::relu_backward(self.value(*x), gout))],
            Op::Sigmoid(x) => vec![(*x, activation::sigmoid_backward(y, gout))],
            Op::Swish(x) => vec![(*x, activation::swish_backward(self.value(*x), gout))],
            Op::Softmax { x, axis } => {
                vec![(*x, activation::softmax_backward(y, *axis, gout))]
            }
            Op::Add(a, b) => vec![(*a, gout.clone()), (*b, gout.clone())],
            Op::Mul(a, b) => elementwise::mul_backward(self, *a, *b, gout),
            Op::AddScalar(x) => vec![(*x, gout.clone())],
            Op::MulScalar(x, c) => vec![(*x, elementwise::scaled(gout, *c))],
            Op::ScaleChannels { x, s } => elementwise::scale_channels_backward(self, *x, *s, gout),
            Op::GlobalAvgPool(x) => vec![(*x, pool::global_avg_backward(self.value(*x), gout))],
            Op::AvgPool { x, window, stride } => {
                vec![(
                    *x,
                    pool::avg_backward(self.value(*x), *window, *stride, gout),
                )]
            }
            Op::MaxPool { x, argmax } => {
                vec![(*x, pool::max_backward(self.value(*x), argmax, gout))]
            }
            Op::Concat(parts) => elementwise::concat_backward(self, parts, gout),
            Op::SliceChannels { x, start } => {
                vec![(
                    *x,
                    elementwise::slice_backward(self.value(*x), *start, gout),
                )]
            }
            Op::Reshape(x) => {
                let g = Tensor::new(self.shape(*x), gout.data().to_vec()).expect("same numel");
                vec![(*x, g)]
            }
            Op::Sum(x) => vec![(*x, Tensor::full(self.shape(*x), gout.item()))],
            Op::Mean(x) => {
                let n = T::cst(self.value(*x).numel() as f64);
                vec![(*x, Tensor::full(self.shape(*x), gout.item() / n))]
            }
            Op::SqDist { x, c } => loss_ops::sqdist_backward(self, *x, *c, gout),
            Op::Gather { x, idx } => {
                vec![(*x, loss_ops::pick_backward(self.value(*x), idx, gout))]
            }
            Op::MinExcluding { x, arg } => {
                vec![(*x, loss_ops::pick_backward(self.value(*x), arg, gout))]
            }
            Op::Focal { p, alpha, gamma } => {
                vec![(
                    *p,
                    loss_ops::focal_backward(self.value(*p), alpha, *gamma, gout),
                )]
            }
            Op::WeightedNll { p, weights } => {
                vec![(*p, loss_ops::nll_backward(self.value(*p), weights, gout))]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_f64(&[3], &[1.0, -2.0, 5.0]).unwrap(), true);
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_gradient_is_two_x() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_f64(&[2], &[1.0, 2.0]).unwrap(), true);
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_f64(&[2], &[1.0, 2.0]).unwrap(), true);
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq);
        g.backward(s).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[4.0, 8.0]);
        g.zero_grads();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_f64(&[2], &[1.0, 2.0]).unwrap(), true);
        let y = g.relu(x);
        assert!(matches!(g.backward(y), Err(Error::Shape(_))));
    }

    #[test]
    fn params_bind_once_and_flow_to_store() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", Tensor::from_f64(&[2], &[3.0, 4.0]).unwrap());
        let mut g = Graph::new();
        let a = g.param(&store, id);
        let b = g.param(&store, id);
        assert_eq!(a, b);
        let p = g.mul(a, b).unwrap();
        let s = g.sum(p);
        g.backward(s).unwrap();
        g.accumulate_param_grads(&mut store);
        assert_eq!(store.grad(id).data(), &[6.0, 8.0]);
    }
}
