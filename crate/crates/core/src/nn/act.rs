use ndarray::{Array, Dimension};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Ctx, ReluRule};

#[derive(Clone, Debug, Default)]
pub struct Relu {
    mask: Vec<bool>,
    rule: ReluRule,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward<D: Dimension>(&mut self, x: &Array<f64, D>, ctx: Ctx) -> Array<f64, D> {
        let x = x.as_standard_layout();
        self.mask = x.iter().map(|&v| v > 0.0).collect();
        self.rule = ctx.relu_rule;
        // NaN passes through so divergence stays visible
        x.mapv(|v| if v > 0.0 || v.is_nan() { v } else { 0.0 })
    }

    pub fn backward<D: Dimension>(&mut self, dy: &Array<f64, D>) -> Array<f64, D> {
        let dy = dy.as_standard_layout().into_owned();
        assert_eq!(dy.len(), self.mask.len(), "relu backward shape");
        let guided = self.rule == ReluRule::Guided;
        let mut out = dy;
        for (g, &m) in out.iter_mut().zip(&self.mask) {
            if !m || (guided && *g < 0.0) {
                *g = 0.0;
            }
        }
        out
    }
}

/// Inverted dropout; identity outside training mode.
#[derive(Clone, Debug)]
pub struct Dropout {
    pub rate: f64,
    rng: ChaCha8Rng,
    scale_mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate in [0,1)");
        Self { rate, rng: ChaCha8Rng::seed_from_u64(seed), scale_mask: None }
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn forward<D: Dimension>(&mut self, x: &Array<f64, D>, ctx: Ctx) -> Array<f64, D> {
        if !ctx.is_train() || self.rate == 0.0 {
            self.scale_mask = None;
            return x.to_owned();
        }
        let keep = 1.0 - self.rate;
        let mut out = x.as_standard_layout().into_owned();
        let mask: Vec<f64> = (0..out.len()).map(|_| if self.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
        for (v, m) in out.iter_mut().zip(&mask) {
            *v *= m;
        }
        self.scale_mask = Some(mask);
        out
    }

    pub fn backward<D: Dimension>(&mut self, dy: &Array<f64, D>) -> Array<f64, D> {
        let mut out = dy.as_standard_layout().into_owned();
        if let Some(mask) = &self.scale_mask {
            for (v, m) in out.iter_mut().zip(mask) {
                *v *= m;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;

    #[test]
    fn guided_rule_drops_negative_gradients() {
        let mut r = Relu::new();
        let x = arr1(&[1.0, -1.0, 2.0, 3.0]);
        r.forward(&x, Ctx::train());
        let dy = arr1(&[-1.0, 5.0, 2.0, 0.5]);
        assert_eq!(r.backward(&dy), arr1(&[-1.0, 0.0, 2.0, 0.5]));
        r.forward(&x, Ctx::guided());
        assert_eq!(r.backward(&dy), arr1(&[0.0, 0.0, 2.0, 0.5]));
    }

    #[test]
    fn dropout_is_identity_in_eval() {
        let mut d = Dropout::new(0.5, 1);
        let x = arr1(&[1.0, 2.0, 3.0]);
        assert_eq!(d.forward(&x, Ctx::eval()), x);
    }
}
