//! Adam with bias correction and the warmup / inverse-square-root schedule.

use crate::error::{Error, Result};
use crate::tensor::{Float, ParamId, ParamStore};

/// `peak * min(step / warmup, sqrt(warmup / step))`: a linear ramp that
/// reaches `peak` at `step == warmup`, then inverse-square-root decay.
pub fn lr_at_step(step: u64, warmup: u64, peak: f64) -> Result<f64> {
    if step == 0 {
        return Err(Error::invalid("learning-rate steps are counted from 1"));
    }
    if warmup == 0 {
        return Err(Error::Config("warmup must be at least one step".into()));
    }
    let (s, w) = (step as f64, warmup as f64);
    Ok(peak * (s / w).min((w / s).sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.98,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("Adam epsilon must be > 0".into()));
        }
        Ok(())
    }
}

/// First/second moment estimates per trainable parameter.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    ids: Vec<ParamId>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    /// Zeroed moments for every trainable parameter of `store`.
    pub fn new<T: Float>(store: &ParamStore<T>, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        let ids = store.trainable_ids();
        let zeros = |id: &ParamId| vec![0.0; store.value(*id).numel()];
        Ok(Adam {
            config,
            step: 0,
            m: ids.iter().map(zeros).collect(),
            v: ids.iter().map(zeros).collect(),
            ids,
        })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients in `store`. `with_grads` lists
    /// the parameters that took part in the backward pass; any tracked
    /// parameter missing from it is an error naming that parameter.
    pub fn step<T: Float>(
        &mut self,
        store: &mut ParamStore<T>,
        with_grads: &[ParamId],
        lr: f64,
    ) -> Result<()> {
        for id in &self.ids {
            if with_grads.binary_search(id).is_err() {
                return Err(Error::invalid(format!(
                    "no gradient for parameter {}",
                    store.get(*id).name
                )));
            }
            if !store.grad(*id).all_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite gradient for {}",
                    store.get(*id).name
                )));
            }
        }
        self.step += 1;
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let c1 = 1.0 - beta1.powf(self.step as f64);
        let c2 = 1.0 - beta2.powf(self.step as f64);
        for (k, &id) in self.ids.iter().enumerate() {
            let p = store.get_mut(id);
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, (w, g)) in p.value.data_mut().iter_mut().zip(p.grad.data()).enumerate() {
                let g = g.as_f64();
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let update = lr * (m[i] / c1) / ((v[i] / c2).sqrt() + epsilon);
                *w = T::cst(w.as_f64() - update);
            }
        }
        Ok(())
    }
}
