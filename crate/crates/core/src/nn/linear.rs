use ndarray::{Array2, Ix2};
use rand_chacha::ChaCha8Rng;

use super::{join, Param, Parameterized};

/// Affine map `y = x W^T + b` on `(N, in)` rows.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    input: Option<Array2<f64>>,
}

impl Linear {
    pub fn new(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        Self {
            weight: Param::uniform(&[output, input], bound, rng),
            bias: Param::zeros(&[output]),
            input: None,
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.value.shape()[0]
    }

    fn w(&self) -> ndarray::ArrayView2<'_, f64> {
        self.weight.value.view().into_dimensionality::<Ix2>().expect("2d weight")
    }

    pub fn forward(&mut self, x: &Array2<f64>) -> Array2<f64> {
        let b = self.bias.value.view().into_dimensionality::<ndarray::Ix1>().expect("1d bias");
        let y = x.dot(&self.w().t()) + &b;
        self.input = Some(x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let x = self.input.as_ref().expect("linear backward before forward");
        {
            let mut gw = self.weight.grad.view_mut().into_dimensionality::<Ix2>().expect("2d grad");
            ndarray::linalg::general_mat_mul(1.0, &dy.t(), x, 1.0, &mut gw);
        }
        let db = dy.sum_axis(ndarray::Axis(0));
        for (g, d) in self.bias.grad.iter_mut().zip(db.iter()) {
            *g += d;
        }
        dy.dot(&self.w())
    }
}

impl Parameterized for Linear {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}
