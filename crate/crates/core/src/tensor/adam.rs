use serde::{Deserialize, Serialize};

use super::{ParamStore, TensorError};

/// Bias-corrected Adam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }

    /// Applies one update to every trainable parameter, then clears the
    /// gradients. Every trainable parameter must carry a gradient.
    pub fn step(&self, store: &mut ParamStore) -> Result<(), TensorError> {
        if let Some(missing) = store.params().iter().find(|p| p.trainable && p.grad.is_none()) {
            return Err(TensorError::MissingGrad(missing.name.clone()));
        }
        let t = store.step() + 1;
        store.set_step(t);
        let bc1 = 1.0 - self.beta1.powf(t as f64);
        let bc2 = 1.0 - self.beta2.powf(t as f64);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let p = store.param_mut(id);
            if !p.trainable {
                continue;
            }
            let g = p.grad.take().expect("checked above");
            let value = p.value.data_mut();
            let m = p.m.data_mut();
            let v = p.v.data_mut();
            for i in 0..g.len() {
                let gi = g.data()[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                value[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
