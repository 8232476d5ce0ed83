use std::collections::BTreeMap;

use ndarray::{Array2, Zip};

use crate::{ParamId, ParamStore, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

/// First and second moment estimates of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments<T> {
    pub m: Array2<T>,
    pub v: Array2<T>,
}

/// Decoupled-weight-decay Adam. Parameters without a gradient in a step
/// are left untouched, including decay.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub cfg: AdamWConfig,
    step: u64,
    state: BTreeMap<ParamId, Moments<T>>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(cfg: AdamWConfig) -> Self {
        Self {
            cfg,
            step: 0,
            state: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> impl Iterator<Item = (ParamId, &Moments<T>)> {
        self.state.iter().map(|(&id, m)| (id, m))
    }

    /// Restores optimizer state, e.g. from a checkpoint.
    pub fn restore(&mut self, step: u64, state: impl IntoIterator<Item = (ParamId, Moments<T>)>) {
        self.step = step;
        self.state = state.into_iter().collect();
    }

    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[(ParamId, Array2<T>)], lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::lit(self.cfg.beta1);
        let b2 = T::lit(self.cfg.beta2);
        let one = T::one();
        let bias1 = one - b1.powi(t);
        let bias2 = one - b2.powi(t);
        let lr_t = T::lit(lr);
        let eps = T::lit(self.cfg.eps);
        let decay = one - T::lit(lr * self.cfg.weight_decay);
        for (id, grad) in grads {
            let param = store.value_mut(*id);
            let st = self.state.entry(*id).or_insert_with(|| Moments {
                m: Array2::zeros(param.dim()),
                v: Array2::zeros(param.dim()),
            });
            Zip::from(param)
                .and(&mut st.m)
                .and(&mut st.v)
                .and(grad)
                .for_each(|p, m, v, &g| {
                    *p *= decay;
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    let m_hat = *m / bias1;
                    let v_hat = *v / bias2;
                    *p -= lr_t * m_hat / (v_hat.sqrt() + eps);
                });
        }
    }
}

/// Scales gradients in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Scalar>(grads: &mut [(ParamId, Array2<T>)], max_norm: f64) -> f64 {
    let total: f64 = grads
        .iter()
        .map(|(_, g)| g.iter().map(|&v| v.to_f64() * v.to_f64()).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if total > max_norm && total > 0.0 {
        let factor = T::lit(max_norm / total);
        for (_, g) in grads.iter_mut() {
            g.mapv_inplace(|v| v * factor);
        }
    }
    total
}
