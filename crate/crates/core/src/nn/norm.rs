use ndarray::{Array5, ArrayD, IxDyn};

use super::{join, Ctx, Param, Parameterized};

/// Per-channel batch normalization over `(N, C, T, H, W)`.
///
/// Training mode normalizes with batch statistics and updates running
/// estimates; evaluation mode uses the running estimates.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    pub momentum: f64,
    pub eps: f64,
    channels: usize,
    cache: Option<Cache>,
}

#[derive(Clone, Debug)]
struct Cache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    dims: (usize, usize, usize, usize, usize),
    train: bool,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::filled(&[channels], 1.0),
            beta: Param::zeros(&[channels]),
            running_mean: Param::buffer(ArrayD::zeros(IxDyn(&[channels]))),
            running_var: Param::buffer(ArrayD::ones(IxDyn(&[channels]))),
            momentum: 0.1,
            eps: 1e-5,
            channels,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array5<f64>, ctx: Ctx) -> Array5<f64> {
        let dims = x.dim();
        let (n, c, t, h, w) = dims;
        assert_eq!(c, self.channels, "batch-norm channels");
        let s = t * h * w;
        let m = n * s;
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let mut xhat = vec![0.0; xs.len()];
        let mut out = vec![0.0; xs.len()];
        let mut inv_std = vec![0.0; c];
        let train = ctx.is_train();
        for ch in 0..c {
            let (mean, var) = if train {
                let mut sum = 0.0;
                for i in 0..n {
                    sum += xs[(i * c + ch) * s..(i * c + ch + 1) * s].iter().sum::<f64>();
                }
                let mean = sum / m as f64;
                let mut sq = 0.0;
                for i in 0..n {
                    sq += xs[(i * c + ch) * s..(i * c + ch + 1) * s].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
                }
                let var = sq / m as f64;
                let unbiased = if m > 1 { sq / (m - 1) as f64 } else { var };
                let rm = &mut self.running_mean.value[ch];
                *rm = (1.0 - self.momentum) * *rm + self.momentum * mean;
                let rv = &mut self.running_var.value[ch];
                *rv = (1.0 - self.momentum) * *rv + self.momentum * unbiased;
                (mean, var)
            } else {
                (self.running_mean.value[ch], self.running_var.value[ch])
            };
            let is = 1.0 / (var + self.eps).sqrt();
            inv_std[ch] = is;
            let g = self.gamma.value[ch];
            let b = self.beta.value[ch];
            for i in 0..n {
                let range = (i * c + ch) * s..(i * c + ch + 1) * s;
                for k in range {
                    let xh = (xs[k] - mean) * is;
                    xhat[k] = xh;
                    out[k] = g * xh + b;
                }
            }
        }
        self.cache = Some(Cache { xhat, inv_std, dims, train });
        Array5::from_shape_vec(dims, out).expect("bn shape")
    }

    pub fn backward(&mut self, dy: &Array5<f64>) -> Array5<f64> {
        let cache = self.cache.as_ref().expect("bn backward before forward");
        let (n, c, t, h, w) = cache.dims;
        let s = t * h * w;
        let m = (n * s) as f64;
        let dy = dy.as_standard_layout();
        let dys = dy.as_slice().expect("standard layout");
        let mut dx = vec![0.0; dys.len()];
        for ch in 0..c {
            let mut sum_dy = 0.0;
            let mut sum_dy_xhat = 0.0;
            for i in 0..n {
                for k in (i * c + ch) * s..(i * c + ch + 1) * s {
                    sum_dy += dys[k];
                    sum_dy_xhat += dys[k] * cache.xhat[k];
                }
            }
            self.gamma.grad[ch] += sum_dy_xhat;
            self.beta.grad[ch] += sum_dy;
            let g = self.gamma.value[ch];
            let is = cache.inv_std[ch];
            for i in 0..n {
                for k in (i * c + ch) * s..(i * c + ch + 1) * s {
                    dx[k] = if cache.train {
                        g * is / m * (m * dys[k] - sum_dy - cache.xhat[k] * sum_dy_xhat)
                    } else {
                        g * is * dys[k]
                    };
                }
            }
        }
        Array5::from_shape_vec(cache.dims, dx).expect("bn shape")
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

impl Parameterized for BatchNorm {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.gamma);
        f(&join(prefix, "bias"), &mut self.beta);
        f(&join(prefix, "running_mean"), &mut self.running_mean);
        f(&join(prefix, "running_var"), &mut self.running_var);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_mode_output_is_standardized() {
        let mut bn = BatchNorm::new(2);
        let x = Array5::from_shape_fn((3, 2, 2, 2, 2), |(a, b, c, d, e)| (a * 7 + b * 3 + c + d * 2 + e) as f64);
        let y = bn.forward(&x, Ctx::train());
        for ch in 0..2 {
            let v: Vec<f64> = y.slice(ndarray::s![.., ch, .., .., ..]).iter().copied().collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn train_backward_matches_finite_differences() {
        let mut bn = BatchNorm::new(1);
        bn.gamma.value[0] = 1.7;
        bn.beta.value[0] = -0.3;
        let x = Array5::from_shape_fn((2, 1, 1, 2, 2), |(a, _, _, d, e)| ((a * 4 + d * 2 + e) as f64 * 0.9).sin());
        let weights = Array5::from_shape_fn((2, 1, 1, 2, 2), |(a, _, _, d, e)| (a + 2 * d + 3 * e) as f64 - 2.0);
        let loss = |bn: &mut BatchNorm, x: &Array5<f64>| (bn.forward(x, Ctx::train()) * &weights).sum();
        loss(&mut bn, &x);
        let dx = bn.backward(&weights);
        let h = 1e-6;
        for idx in [[0, 0, 0, 0, 0], [1, 0, 0, 1, 1], [0, 0, 0, 1, 0]] {
            let mut xp = x.clone();
            xp[idx] += h;
            let mut xm = x.clone();
            xm[idx] -= h;
            let num = (loss(&mut bn, &xp) - loss(&mut bn, &xm)) / (2.0 * h);
            assert!((num - dx[idx]).abs() < 1e-6, "{num} vs {}", dx[idx]);
        }
    }
}
