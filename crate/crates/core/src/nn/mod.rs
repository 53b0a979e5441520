//! A small CPU neural-network engine with explicit forward/backward passes.
//!
//! Every layer caches what its backward pass needs during `forward` and
//! accumulates parameter gradients during `backward`. All math is `f64` so
//! finite-difference gradient checks are meaningful.
//!
//! Video activations use the layout `(N, C, T, H, W)`; 2D layers run on
//! `(N, C, 1, H, W)` volumes so a single convolution kernel serves both.

mod act;
mod conv;
mod gru;
mod linear;
pub mod loss;
mod norm;
mod optim;
mod pool;

pub use act::{Dropout, Relu};
pub use conv::Conv3d;
pub use gru::{BiGru, Gru};
pub use linear::Linear;
pub use norm::BatchNorm;
pub use optim::{Adam, AdamConfig};
pub use pool::MaxPool3d;

use ndarray::{Array3, Array5, ArrayD, Axis, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Whether layers run with training behaviour (batch statistics, dropout).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// How ReLU layers route gradients in the backward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ReluRule {
    /// Ordinary derivative: pass gradient where the forward input was positive.
    #[default]
    Standard,
    /// Guided backpropagation: additionally drop negative incoming gradient.
    Guided,
}

/// Forward-pass context shared by every layer in a network.
#[derive(Clone, Copy, Debug)]
pub struct Ctx {
    pub mode: Mode,
    pub relu_rule: ReluRule,
}

impl Ctx {
    pub fn train() -> Self {
        Self { mode: Mode::Train, relu_rule: ReluRule::Standard }
    }

    pub fn eval() -> Self {
        Self { mode: Mode::Eval, relu_rule: ReluRule::Standard }
    }

    pub fn guided() -> Self {
        Self { mode: Mode::Eval, relu_rule: ReluRule::Guided }
    }

    pub fn is_train(&self) -> bool {
        self.mode == Mode::Train
    }
}

/// A named tensor owned by a layer.
#[derive(Clone, Debug)]
pub struct Param {
    pub value: ArrayD<f64>,
    pub grad: ArrayD<f64>,
    /// `false` for buffers such as batch-norm running statistics.
    pub trainable: bool,
}

impl Param {
    pub fn new(value: ArrayD<f64>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Self { value, grad, trainable: true }
    }

    pub fn buffer(value: ArrayD<f64>) -> Self {
        Self { trainable: false, ..Self::new(value) }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(ArrayD::zeros(IxDyn(shape)))
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        Self::new(ArrayD::from_elem(IxDyn(shape), v))
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform(shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Self {
        let value = ArrayD::from_shape_simple_fn(IxDyn(shape), || rng.gen_range(-bound..=bound));
        Self::new(value)
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Anything that owns named parameters.
pub trait Parameterized {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param));

    fn zero_grad(&mut self) {
        self.visit("", &mut |_, p| p.zero_grad());
    }

    /// Total number of trainable scalars.
    fn num_trainable(&mut self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, p| {
            if p.trainable {
                n += p.len()
            }
        });
        n
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// `(N, C, T, H, W)` -> `(N*T, C, 1, H, W)`, one 2D image per frame.
pub fn frames_of(x: &Array5<f64>) -> Array5<f64> {
    let (n, c, t, h, w) = x.dim();
    let permuted = x.view().permuted_axes([0, 2, 1, 3, 4]);
    let owned = permuted.as_standard_layout().into_owned();
    owned.into_shape_with_order((n * t, c, 1, h, w)).expect("contiguous reshape")
}

/// Inverse of [`frames_of`].
pub fn unframe(x: &Array5<f64>, n: usize, t: usize) -> Array5<f64> {
    let (nt, c, one, h, w) = x.dim();
    assert_eq!(nt, n * t);
    assert_eq!(one, 1);
    let v = x.as_standard_layout().into_owned();
    let reshaped = v.into_shape_with_order((n, t, c, h, w)).expect("contiguous reshape");
    reshaped.permuted_axes([0, 2, 1, 3, 4]).as_standard_layout().into_owned()
}

/// Spatial global average: `(N, C, 1, H, W)` -> `(N, C)`.
pub fn spatial_mean(x: &Array5<f64>) -> ndarray::Array2<f64> {
    let (n, c, t, h, w) = x.dim();
    let flat = x
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((n, c, t * h * w))
        .expect("contiguous reshape");
    flat.mean_axis(Axis(2)).expect("non-empty spatial extent")
}

pub fn spatial_mean_backward(dy: &ndarray::Array2<f64>, dims: (usize, usize, usize, usize, usize)) -> Array5<f64> {
    let (n, c, t, h, w) = dims;
    let scale = 1.0 / (t * h * w) as f64;
    Array5::from_shape_fn(dims, |(i, j, _, _, _)| dy[[i, j]] * scale)
        .into_shape_with_order((n, c, t, h, w))
        .expect("same shape")
}

/// Mean over the time axis of `(B, T, F)`.
pub fn time_mean(x: &Array3<f64>) -> ndarray::Array2<f64> {
    x.mean_axis(Axis(1)).expect("non-empty sequence")
}

pub fn time_mean_backward(dy: &ndarray::Array2<f64>, t: usize) -> Array3<f64> {
    let (b, f) = dy.dim();
    let scale = 1.0 / t as f64;
    Array3::from_shape_fn((b, t, f), |(i, _, k)| dy[[i, k]] * scale)
}

pub(crate) fn kaiming_bound(fan_in: usize) -> f64 {
    // He-uniform for ReLU networks.
    (6.0 / fan_in.max(1) as f64).sqrt()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
