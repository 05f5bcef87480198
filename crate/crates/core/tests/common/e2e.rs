//! Full network plus combined loss versus central finite differences, in
//! double precision on a tiny configuration.

use super::{rel_err, FD_STEP};
use eabn::losses::{combined_loss, ClassCenters, LossWeights};
use eabn::model::{BackboneConfig, Ctx, EabnModel};
use eabn::tensor::{ParamId, ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOL: f64 = 1e-3;
const INPUT_HW: (usize, usize) = (8, 12);
const LABELS: [usize; 4] = [0, 1, 1, 0];

pub struct Setup {
    model: EabnModel,
    centers: ClassCenters,
    input: Tensor<f64>,
    weights: LossWeights,
}

pub fn setup(backbone: &BackboneConfig, seed: u64) -> (Setup, ParamStore<f64>) {
    let mut store = ParamStore::new();
    let model = EabnModel::new(&mut store, backbone, INPUT_HW, seed).unwrap();
    let centers = ClassCenters::new(&mut store, seed + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
    let n = LABELS.len() * INPUT_HW.0 * INPUT_HW.1;
    let data = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let input = Tensor::new(&[LABELS.len(), 1, INPUT_HW.0, INPUT_HW.1], data).unwrap();
    let weights = LossWeights {
        focal_alpha: [0.6, 1.4],
        ce_weights: [1.0, 2.0],
        ..LossWeights::default()
    };
    (
        Setup {
            model,
            centers,
            input,
            weights,
        },
        store,
    )
}

/// Loss value and branch signature; with `grads`, also leaves parameter
/// gradients in the store.
pub fn loss(s: &Setup, store: &mut ParamStore<f64>, grads: bool) -> (f64, u64) {
    let mut graph = eabn::tensor::Graph::new();
    let x = graph.input(s.input.clone());
    let out = {
        let mut ctx = Ctx::new(&mut graph, store, true);
        s.model.forward(&mut ctx, x).unwrap()
    };
    let c = graph.param(store, s.centers.id());
    let l = combined_loss(&mut graph, &out, c, &LABELS, &s.weights).unwrap();
    let value = graph.value(l.total).item();
    if grads {
        store.zero_grads();
        graph.backward(l.total).unwrap();
        graph.accumulate_param_grads(store);
    }
    (value, graph.branch_signature())
}

/// Roundoff floor of a central difference of an O(10) loss at this step:
/// directions along which the loss is exactly invariant (e.g. a shift that
/// a later training-mode batch norm removes) are judged against it.
const NOISE_FLOOR: f64 = 1e-6;
const REDRAWS: usize = 20;

#[derive(Debug, Default)]
pub struct Report {
    pub worst_direction: f64,
    pub worst_scalar: f64,
    pub scalars: usize,
    pub invariant: Vec<String>,
    pub kinked_scalars: usize,
    /// Tensors or scalars over tolerance, with both estimates.
    pub failures: Vec<String>,
}

impl Report {
    /// No mismatches, and only shifts that a following batch norm cancels
    /// are invariant.
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
            && self
                .invariant
                .iter()
                .all(|n| n.ends_with("project.bn.beta"))
    }
}

/// Central difference along `dir` in one parameter tensor; `None` when the
/// two evaluations fall on different smooth pieces.
pub fn directional_fd(
    s: &Setup,
    store: &mut ParamStore<f64>,
    id: ParamId,
    dir: &[f64],
    base_sig: u64,
) -> Option<f64> {
    let base = store.value(id).clone();
    let mut at = |sign: f64| {
        for ((v, b), d) in store
            .value_mut(id)
            .data_mut()
            .iter_mut()
            .zip(base.data())
            .zip(dir)
        {
            *v = b + sign * FD_STEP * d;
        }
        loss(s, store, false)
    };
    let (plus, sp) = at(1.0);
    let (minus, sm) = at(-1.0);
    *store.value_mut(id) = base;
    (sp == base_sig && sm == base_sig).then(|| (plus - minus) / (2.0 * FD_STEP))
}

/// (a) one random direction per parameter tensor, redrawn while it crosses
/// a kink, and (b) every scalar with a non-negligible gradient whose
/// perturbation stays on one smooth piece.
pub fn check(backbone: &BackboneConfig, seed: u64) -> Report {
    let (s, mut store) = setup(backbone, seed);
    let (_, base_sig) = loss(&s, &mut store, true);
    let ids = store.trainable_ids();
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| store.grad(id).data().to_vec())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 3);
    let mut report = Report::default();

    for (k, &id) in ids.iter().enumerate() {
        let name = store.get(id).name.clone();
        let n = store.value(id).numel();
        let (ad, fd) = (0..REDRAWS)
            .find_map(|_| {
                let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let ad: f64 = analytic[k].iter().zip(&dir).map(|(a, d)| a * d).sum();
                directional_fd(&s, &mut store, id, &dir, base_sig).map(|fd| (ad, fd))
            })
            .unwrap_or_else(|| panic!("{name}: every direction crossed a kink"));
        if ad.abs() < 1e-12 && fd.abs() < NOISE_FLOOR {
            report.invariant.push(name);
            continue;
        }
        let err = rel_err(ad, fd);
        if err > TOL {
            report
                .failures
                .push(format!("{name} direction: autodiff {ad} fd {fd} rel {err}"));
        }
        report.worst_direction = report.worst_direction.max(err);
    }

    for (k, &id) in ids.iter().enumerate() {
        let n = store.value(id).numel();
        for j in 0..n {
            let a = analytic[k][j];
            if a.abs() < 1e-4 {
                continue;
            }
            let mut unit = vec![0.0; n];
            unit[j] = 1.0;
            let Some(fd) = directional_fd(&s, &mut store, id, &unit, base_sig) else {
                report.kinked_scalars += 1;
                continue;
            };
            let err = rel_err(a, fd);
            if err > TOL {
                let name = &store.get(id).name;
                report
                    .failures
                    .push(format!("{name}[{j}]: autodiff {a} fd {fd} rel {err}"));
            }
            report.worst_scalar = report.worst_scalar.max(err);
            report.scalars += 1;
        }
    }
    report
}
