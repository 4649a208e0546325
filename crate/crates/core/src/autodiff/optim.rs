use serde::{Deserialize, Serialize};

use super::{Gradients, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = Gradients::zeros_like(store).bufs;
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    /// One bias-corrected Adam update. Refuses to touch any parameter when a
    /// gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients, cfg: &AdamConfig) -> Result<()> {
        for id in store.ids() {
            if grads.get(id).iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence(format!(
                    "non-finite gradient for parameter {}",
                    store.name(id)
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for id in store.ids() {
            let g = grads.get(id);
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            let p = &mut store.get_mut(id).data;
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.norm();
    if norm > max_norm && norm.is_finite() {
        grads.scale(max_norm / norm);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn one_param(x: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("x", Tensor::vector(vec![x]));
        s
    }

    #[test]
    fn first_step_moves_by_lr() {
        // Bias correction makes the first step exactly lr·sign(g) (up to eps).
        let mut store = one_param(1.0);
        let mut adam = AdamState::new(&store);
        let mut g = Gradients::zeros_like(&store);
        g.bufs[0][0] = 3.0;
        adam.step(&mut store, &g, &AdamConfig::default()).unwrap();
        assert!((store.tensors[0].data[0] - (1.0 - 0.001)).abs() < 1e-10);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut store = one_param(2.0);
        let mut adam = AdamState::new(&store);
        let cfg = AdamConfig { lr: 0.05, ..AdamConfig::default() };
        for _ in 0..2000 {
            let x = store.tensors[0].data[0];
            let mut g = Gradients::zeros_like(&store);
            g.bufs[0][0] = 2.0 * (x - 0.5);
            adam.step(&mut store, &g, &cfg).unwrap();
        }
        assert!((store.tensors[0].data[0] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn non_finite_gradient_is_rejected_untouched() {
        let mut store = one_param(1.0);
        let mut adam = AdamState::new(&store);
        let mut g = Gradients::zeros_like(&store);
        g.bufs[0][0] = f64::NAN;
        assert!(matches!(
            adam.step(&mut store, &g, &AdamConfig::default()),
            Err(Error::Divergence(_))
        ));
        assert_eq!(store.tensors[0].data[0], 1.0);
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn clipping() {
        let store = one_param(0.0);
        let mut g = Gradients::zeros_like(&store);
        g.bufs[0][0] = -10.0;
        assert_eq!(clip_global_norm(&mut g, 5.0), 10.0);
        assert_eq!(g.bufs[0][0], -5.0);
        g.bufs[0][0] = 1.0;
        clip_global_norm(&mut g, 5.0);
        assert_eq!(g.bufs[0][0], 1.0);
    }
}
