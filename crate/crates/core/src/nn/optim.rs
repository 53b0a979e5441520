use std::collections::HashMap;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use super::{Param, Parameterized};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty added to the gradient (coupled, as in the classic Adam).
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

/// Adam with per-parameter moment state keyed by parameter name.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    state: HashMap<String, (ArrayD<f64>, ArrayD<f64>)>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, state: HashMap::new(), step: 0 }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Updates every trainable parameter whose name satisfies `in_scope`.
    /// Parameters outside the scope are not touched at all.
    pub fn step(&mut self, model: &mut dyn Parameterized, in_scope: &dyn Fn(&str) -> bool) {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let state = &mut self.state;
        model.visit("", &mut |name: &str, p: &mut Param| {
            if !p.trainable || !in_scope(name) {
                return;
            }
            let (m, v) = state
                .entry(name.to_string())
                .or_insert_with(|| (ArrayD::zeros(p.value.raw_dim()), ArrayD::zeros(p.value.raw_dim())));
            ndarray::Zip::from(&mut p.value).and(&p.grad).and(m).and(v).for_each(|w, &g, m, v| {
                let g = g + c.weight_decay * *w;
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let mh = *m / bc1;
                let vh = *v / bc2;
                *w -= c.lr * mh / (vh.sqrt() + c.eps);
            });
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::join;

    struct Quad {
        p: Param,
    }

    impl Parameterized for Quad {
        fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
            f(&join(prefix, "p"), &mut self.p);
        }
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut q = Quad { p: Param::filled(&[2], 3.0) };
        let mut opt = Adam::new(AdamConfig { lr: 0.1, ..Default::default() });
        for _ in 0..500 {
            q.zero_grad();
            let g = q.p.value.mapv(|w| 2.0 * (w - 1.0));
            q.p.grad.assign(&g);
            opt.step(&mut q, &|_| true);
        }
        assert!(q.p.value.iter().all(|w| (w - 1.0).abs() < 1e-3));
    }

    #[test]
    fn out_of_scope_parameters_are_bit_identical() {
        let mut q = Quad { p: Param::filled(&[2], 3.0) };
        q.p.grad.fill(1.0);
        let before = q.p.value.clone();
        let mut opt = Adam::new(AdamConfig::default());
        opt.step(&mut q, &|name| !name.starts_with('p'));
        assert_eq!(before, q.p.value);
    }
}
