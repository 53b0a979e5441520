//! Word-level recognizer: 3D convolutional frontend, per-frame 2D residual
//! trunk with spatial average pooling, and a switchable temporal backend
//! (temporal-convolution head for the early training stages, bidirectional
//! GRU for the final one).

use ndarray::{Array2, Array3, Array5};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{config_digest, ModelError, Network};
use crate::nn::{
    frames_of, join, loss::softmax, spatial_mean, spatial_mean_backward, time_mean, time_mean_backward, unframe,
    BatchNorm, BiGru, Conv3d, Ctx, Linear, MaxPool3d, Param, Parameterized, Relu,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontendConfig {
    /// `(t, h, w)` kernel of the spatiotemporal convolution.
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub channels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResNetConfig {
    pub widths: [usize; 4],
    pub blocks: [usize; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnnConfig {
    pub layers: usize,
    pub hidden: usize,
    pub bidirectional: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalConvConfig {
    pub kernel: usize,
    pub hidden: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordModelConfig {
    pub vocab_size: usize,
    /// `(H, W, C)` of one input frame.
    pub input_size: (usize, usize, usize),
    pub frontend: FrontendConfig,
    pub resnet: ResNetConfig,
    pub feature_dim: usize,
    pub temporal_conv: TemporalConvConfig,
    pub rnn: RnnConfig,
    pub seed: u64,
}

impl WordModelConfig {
    /// Full-size configuration: 112x112 grayscale input, ResNet-18 trunk,
    /// 512-d frame features and a 2-layer Bi-GRU with 1024 hidden units.
    pub fn full(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            input_size: (112, 112, 1),
            frontend: FrontendConfig { kernel: [5, 7, 7], stride: [1, 2, 2], channels: 64 },
            resnet: ResNetConfig { widths: [64, 128, 256, 512], blocks: [2, 2, 2, 2] },
            feature_dim: 512,
            temporal_conv: TemporalConvConfig { kernel: 5, hidden: 512 },
            rnn: RnnConfig { layers: 2, hidden: 1024, bidirectional: true },
            seed: 0,
        }
    }

    /// Same topology at desk scale: narrow trunk, small recurrent backend.
    pub fn compact(vocab_size: usize, input: (usize, usize)) -> Self {
        Self {
            vocab_size,
            input_size: (input.0, input.1, 1),
            frontend: FrontendConfig { kernel: [3, 5, 5], stride: [1, 2, 2], channels: 8 },
            resnet: ResNetConfig { widths: [8, 16, 24, 32], blocks: [1, 1, 1, 1] },
            feature_dim: 32,
            temporal_conv: TemporalConvConfig { kernel: 3, hidden: 32 },
            rnn: RnnConfig { layers: 2, hidden: 32, bidirectional: true },
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.vocab_size == 0 {
            return bad("vocab_size must be positive");
        }
        if self.feature_dim != self.resnet.widths[3] {
            return bad("feature_dim must equal the last residual stage width");
        }
        if !self.rnn.bidirectional || self.rnn.layers == 0 || self.rnn.hidden == 0 {
            return bad("backend must be a bidirectional GRU with at least one layer");
        }
        if self.frontend.kernel.iter().any(|k| k % 2 == 0) {
            return bad("frontend kernel extents must be odd");
        }
        if self.temporal_conv.kernel % 2 == 0 {
            return bad("temporal-conv kernel must be odd");
        }
        if self.resnet.blocks.iter().any(|&b| b == 0) {
            return bad("every residual stage needs at least one block");
        }
        if !matches!(self.input_size.2, 1 | 3) {
            return bad("input channels must be 1 or 3");
        }
        Ok(())
    }

    /// Spatial size after the frontend (conv + 3x3/2 max-pool).
    pub fn frontend_out_hw(&self) -> (usize, usize) {
        let conv = |n: usize, k: usize, s: usize| (n + 2 * (k / 2) - k) / s + 1;
        let pool = |n: usize| (n + 2 - 3) / 2 + 1;
        let f = &self.frontend;
        (pool(conv(self.input_size.0, f.kernel[1], f.stride[1])), pool(conv(self.input_size.1, f.kernel[2], f.stride[2])))
    }

    /// Number of output steps for `t` input frames.
    pub fn temporal_out_len(&self, t: usize) -> usize {
        let k = self.frontend.kernel[0];
        (t + 2 * (k / 2) - k) / self.frontend.stride[0] + 1
    }

    /// Exact parameter count (trainable weights plus batch-norm buffers are
    /// reported separately by [`WordModelConfig::buffer_count`]).
    pub fn param_count(&self) -> usize {
        let c = self.input_size.2;
        let f = &self.frontend;
        let bn = |ch: usize| 2 * ch;
        let mut n = f.channels * c * f.kernel.iter().product::<usize>() + bn(f.channels);
        let mut cin = f.channels;
        for (stage, (&w, &blocks)) in self.resnet.widths.iter().zip(&self.resnet.blocks).enumerate() {
            for b in 0..blocks {
                let stride = if stage > 0 && b == 0 { 2 } else { 1 };
                n += w * cin * 9 + bn(w) + w * w * 9 + bn(w);
                if stride != 1 || cin != w {
                    n += w * cin + bn(w);
                }
                cin = w;
            }
        }
        let tc = &self.temporal_conv;
        n += tc.hidden * self.feature_dim * tc.kernel + bn(tc.hidden);
        n += tc.hidden * tc.hidden * tc.kernel + bn(tc.hidden);
        n += self.vocab_size * tc.hidden + self.vocab_size;
        let h = self.rnn.hidden;
        for l in 0..self.rnn.layers {
            let inp = if l == 0 { self.feature_dim } else { 2 * h };
            n += 2 * (3 * h * inp + 3 * h * h + 6 * h);
        }
        n += self.vocab_size * 2 * h + self.vocab_size;
        n
    }

    pub fn buffer_count(&self) -> usize {
        let mut channels = self.frontend.channels;
        let mut cin = self.frontend.channels;
        for (stage, (&w, &blocks)) in self.resnet.widths.iter().zip(&self.resnet.blocks).enumerate() {
            for b in 0..blocks {
                let stride = if stage > 0 && b == 0 { 2 } else { 1 };
                channels += 2 * w;
                if stride != 1 || cin != w {
                    channels += w;
                }
                cin = w;
            }
        }
        channels += 2 * self.temporal_conv.hidden;
        2 * channels
    }

    /// Serialized form of the frontend-relevant fields only.
    fn frontend_view(&self) -> serde_json::Value {
        serde_json::json!({
            "input_size": self.input_size,
            "frontend": self.frontend,
            "resnet": self.resnet,
            "feature_dim": self.feature_dim,
        })
    }
}

#[derive(Clone, Debug)]
struct BasicBlock {
    conv1: Conv3d,
    bn1: BatchNorm,
    relu1: Relu,
    conv2: Conv3d,
    bn2: BatchNorm,
    down: Option<(Conv3d, BatchNorm)>,
    relu_out: Relu,
}

impl BasicBlock {
    fn new(cin: usize, cout: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let down = (stride != 1 || cin != cout)
            .then(|| (Conv3d::new_2d(cin, cout, 1, stride, 0, false, rng), BatchNorm::new(cout)));
        Self {
            conv1: Conv3d::new_2d(cin, cout, 3, stride, 1, false, rng),
            bn1: BatchNorm::new(cout),
            relu1: Relu::new(),
            conv2: Conv3d::new_2d(cout, cout, 3, 1, 1, false, rng),
            bn2: BatchNorm::new(cout),
            down,
            relu_out: Relu::new(),
        }
    }

    fn forward(&mut self, x: &Array5<f64>, ctx: Ctx) -> Array5<f64> {
        let o = self.conv1.forward(x);
        let o = self.bn1.forward(&o, ctx);
        let o = self.relu1.forward(&o, ctx);
        let o = self.conv2.forward(&o);
        let o = self.bn2.forward(&o, ctx);
        let shortcut = match &mut self.down {
            Some((conv, bn)) => {
                let s = conv.forward(x);
                bn.forward(&s, ctx)
            }
            None => x.clone(),
        };
        self.relu_out.forward(&(o + shortcut), ctx)
    }

    fn backward(&mut self, dy: &Array5<f64>) -> Array5<f64> {
        let d = self.relu_out.backward(dy);
        let g = self.bn2.backward(&d);
        let g = self.conv2.backward(&g);
        let g = self.relu1.backward(&g);
        let g = self.bn1.backward(&g);
        let dx = self.conv1.backward(&g);
        let ds = match &mut self.down {
            Some((conv, bn)) => {
                let s = bn.backward(&d);
                conv.backward(&s)
            }
            None => d,
        };
        dx + ds
    }
}

impl Parameterized for BasicBlock {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.bn1.visit(&join(prefix, "bn1"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
        self.bn2.visit(&join(prefix, "bn2"), f);
        if let Some((conv, bn)) = &mut self.down {
            conv.visit(&join(prefix, "downsample.conv"), f);
            bn.visit(&join(prefix, "downsample.bn"), f);
        }
    }
}

/// Layers whose activations can be inspected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerId {
    /// Output of the spatiotemporal stem (after max-pooling).
    Stem,
    /// Output of residual stage 1..=4.
    Stage(usize),
}

impl std::str::FromStr for LayerId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stem" => Ok(Self::Stem),
            _ => s
                .strip_prefix("layer")
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|n| (1..=4).contains(n))
                .map(Self::Stage)
                .ok_or_else(|| ModelError::UnknownLayer(s.to_string())),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Frontend {
    conv: Conv3d,
    bn: BatchNorm,
    relu: Relu,
    pool: MaxPool3d,
    stages: Vec<Vec<BasicBlock>>,
    shape: Option<(usize, usize, (usize, usize, usize, usize, usize))>,
}

impl Frontend {
    fn new(cfg: &WordModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let f = &cfg.frontend;
        let pad = [f.kernel[0] / 2, f.kernel[1] / 2, f.kernel[2] / 2];
        let conv = Conv3d::new(cfg.input_size.2, f.channels, f.kernel, f.stride, pad, false, rng);
        let mut cin = f.channels;
        let mut stages = Vec::new();
        for (stage, (&w, &blocks)) in cfg.resnet.widths.iter().zip(&cfg.resnet.blocks).enumerate() {
            let mut v = Vec::new();
            for b in 0..blocks {
                let stride = if stage > 0 && b == 0 { 2 } else { 1 };
                v.push(BasicBlock::new(cin, w, stride, rng));
                cin = w;
            }
            stages.push(v);
        }
        Self {
            conv,
            bn: BatchNorm::new(f.channels),
            relu: Relu::new(),
            pool: MaxPool3d::new([1, 3, 3], [1, 2, 2], [0, 1, 1]),
            stages,
            shape: None,
        }
    }

    /// `(B, C, T, H, W)` -> `(B, T', F)`, optionally capturing the activation
    /// of `capture` laid out as `(B, C, T', h, w)`.
    fn forward(&mut self, x: &Array5<f64>, ctx: Ctx, capture: Option<LayerId>) -> (Array3<f64>, Option<Array5<f64>>) {
        let b = x.dim().0;
        let o = self.conv.forward(x);
        let o = self.bn.forward(&o, ctx);
        let o = self.relu.forward(&o, ctx);
        let o = self.pool.forward(&o);
        let t = o.dim().2;
        let mut captured = (capture == Some(LayerId::Stem)).then(|| o.clone());
        let mut fr = frames_of(&o);
        for (i, stage) in self.stages.iter_mut().enumerate() {
            for block in stage.iter_mut() {
                fr = block.forward(&fr, ctx);
            }
            if capture == Some(LayerId::Stage(i + 1)) {
                captured = Some(unframe(&fr, b, t));
            }
        }
        self.shape = Some((b, t, fr.dim()));
        let pooled = spatial_mean(&fr);
        let feat_dim = pooled.dim().1;
        let seq = pooled.into_shape_with_order((b, t, feat_dim)).expect("feature reshape");
        (seq, captured)
    }

    fn backward(&mut self, dseq: &Array3<f64>) -> Array5<f64> {
        let (b, t, fr_dims) = self.shape.expect("frontend backward before forward");
        let f = dseq.dim().2;
        let dpooled = dseq.to_owned().into_shape_with_order((b * t, f)).expect("reshape");
        let mut g = spatial_mean_backward(&dpooled, fr_dims);
        for stage in self.stages.iter_mut().rev() {
            for block in stage.iter_mut().rev() {
                g = block.backward(&g);
            }
        }
        let g = unframe(&g, b, t);
        let g = self.pool.backward(&g);
        let g = self.relu.backward(&g);
        let g = self.bn.backward(&g);
        self.conv.backward(&g)
    }
}

impl Parameterized for Frontend {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.conv.visit(&join(prefix, "conv3d"), f);
        self.bn.visit(&join(prefix, "bn"), f);
        for (i, stage) in self.stages.iter_mut().enumerate() {
            for (j, block) in stage.iter_mut().enumerate() {
                block.visit(&join(prefix, &format!("layer{}.{j}", i + 1)), f);
            }
        }
    }
}

#[derive(Clone, Debug)]
struct TemporalConvHead {
    conv1: Conv3d,
    bn1: BatchNorm,
    relu1: Relu,
    conv2: Conv3d,
    bn2: BatchNorm,
    relu2: Relu,
    fc: Linear,
    t: usize,
}

impl TemporalConvHead {
    fn new(cfg: &WordModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let k = cfg.temporal_conv.kernel;
        let h = cfg.temporal_conv.hidden;
        Self {
            conv1: Conv3d::new(cfg.feature_dim, h, [k, 1, 1], [1, 1, 1], [k / 2, 0, 0], false, rng),
            bn1: BatchNorm::new(h),
            relu1: Relu::new(),
            conv2: Conv3d::new(h, h, [k, 1, 1], [1, 1, 1], [k / 2, 0, 0], false, rng),
            bn2: BatchNorm::new(h),
            relu2: Relu::new(),
            fc: Linear::new(h, cfg.vocab_size, rng),
            t: 0,
        }
    }

    fn forward(&mut self, seq: &Array3<f64>, ctx: Ctx) -> Array2<f64> {
        let (b, t, f) = seq.dim();
        self.t = t;
        // (B, T, F) -> (B, F, T, 1, 1)
        let x = seq.view().permuted_axes([0, 2, 1]).as_standard_layout().into_owned();
        let x = x.into_shape_with_order((b, f, t, 1, 1)).expect("reshape");
        let o = self.conv1.forward(&x);
        let o = self.bn1.forward(&o, ctx);
        let o = self.relu1.forward(&o, ctx);
        let o = self.conv2.forward(&o);
        let o = self.bn2.forward(&o, ctx);
        let o = self.relu2.forward(&o, ctx);
        let h = o.dim().1;
        let pooled = o.into_shape_with_order((b, h, t)).expect("reshape").mean_axis(ndarray::Axis(2)).expect("t > 0");
        self.fc.forward(&pooled)
    }

    fn backward(&mut self, dlogits: &Array2<f64>) -> Array3<f64> {
        let t = self.t;
        let dp = self.fc.backward(dlogits);
        let (b, h) = dp.dim();
        let g = Array5::from_shape_fn((b, h, t, 1, 1), |(i, j, _, _, _)| dp[[i, j]] / t as f64);
        let g = self.relu2.backward(&g);
        let g = self.bn2.backward(&g);
        let g = self.conv2.backward(&g);
        let g = self.relu1.backward(&g);
        let g = self.bn1.backward(&g);
        let g = self.conv1.backward(&g);
        let f = g.dim().1;
        let g = g.into_shape_with_order((b, f, t)).expect("reshape");
        g.permuted_axes([0, 2, 1]).as_standard_layout().into_owned()
    }
}

impl Parameterized for TemporalConvHead {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.bn1.visit(&join(prefix, "bn1"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
        self.bn2.visit(&join(prefix, "bn2"), f);
        self.fc.visit(&join(prefix, "fc"), f);
    }
}

#[derive(Clone, Debug)]
struct GruHead {
    rnn: BiGru,
    fc: Linear,
    t: usize,
}

impl GruHead {
    fn new(cfg: &WordModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let rnn = BiGru::new(cfg.feature_dim, cfg.rnn.hidden, cfg.rnn.layers, rng);
        let fc = Linear::new(rnn.out_features(), cfg.vocab_size, rng);
        Self { rnn, fc, t: 0 }
    }

    fn forward(&mut self, seq: &Array3<f64>) -> Array2<f64> {
        self.t = seq.dim().1;
        let h = self.rnn.forward(seq);
        self.fc.forward(&time_mean(&h))
    }

    fn backward(&mut self, dlogits: &Array2<f64>) -> Array3<f64> {
        let dp = self.fc.backward(dlogits);
        let dh = time_mean_backward(&dp, self.t);
        self.rnn.backward(&dh)
    }
}

impl Parameterized for GruHead {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.rnn.visit(&join(prefix, "rnn"), f);
        self.fc.visit(&join(prefix, "fc"), f);
    }
}

/// Which temporal backend produces the class scores.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    TemporalConv,
    BiGru,
}

#[derive(Clone, Debug)]
pub struct WordModel {
    config: WordModelConfig,
    frontend: Frontend,
    tcn: TemporalConvHead,
    gru: GruHead,
    pub backend: Backend,
    /// Frozen frontend: batch norm uses running statistics even in training
    /// mode and no gradient reaches frontend parameters.
    pub frozen_frontend: bool,
}

/// Class scores plus their softmax.
#[derive(Clone, Debug)]
pub struct WordOutput {
    pub logits: Array2<f64>,
    pub probs: Array2<f64>,
}

impl WordModel {
    pub fn new(config: WordModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let frontend = Frontend::new(&config, &mut rng);
        let tcn = TemporalConvHead::new(&config, &mut rng);
        let gru = GruHead::new(&config, &mut rng);
        Ok(Self { config, frontend, tcn, gru, backend: Backend::BiGru, frozen_frontend: false })
    }

    pub fn config(&self) -> &WordModelConfig {
        &self.config
    }

    pub fn check_input(&self, x: &Array5<f64>) -> Result<(), ModelError> {
        let (_, c, t, h, w) = x.dim();
        let (eh, ew, ec) = self.config.input_size;
        if (c, h, w) != (ec, eh, ew) || t == 0 {
            return Err(ModelError::ShapeMismatch {
                expected: format!("(B, {ec}, T>0, {eh}, {ew})"),
                got: format!("{:?}", x.dim()),
            });
        }
        Ok(())
    }

    /// Pre-softmax class scores for a `(B, C, T, H, W)` batch.
    pub fn logits(&mut self, x: &Array5<f64>, ctx: Ctx) -> Result<Array2<f64>, ModelError> {
        self.check_input(x)?;
        let (seq, _) = self.frontend.forward(x, self.frontend_ctx(ctx), None);
        Ok(match self.backend {
            Backend::TemporalConv => self.tcn.forward(&seq, ctx),
            Backend::BiGru => self.gru.forward(&seq),
        })
    }

    pub fn forward(&mut self, x: &Array5<f64>, ctx: Ctx) -> Result<WordOutput, ModelError> {
        let logits = self.logits(x, ctx)?;
        let probs = softmax(&logits);
        Ok(WordOutput { logits, probs })
    }

    fn frontend_ctx(&self, ctx: Ctx) -> Ctx {
        if self.frozen_frontend {
            Ctx { mode: crate::nn::Mode::Eval, ..ctx }
        } else {
            ctx
        }
    }

    /// Backpropagates d(loss)/d(logits) of the last forward call to the input.
    /// With a frozen frontend the backward pass stops at the frontend output
    /// and an empty array is returned.
    pub fn backward(&mut self, dlogits: &Array2<f64>) -> Array5<f64> {
        let dseq = match self.backend {
            Backend::TemporalConv => self.tcn.backward(dlogits),
            Backend::BiGru => self.gru.backward(dlogits),
        };
        if self.frozen_frontend {
            return Array5::zeros((0, 0, 0, 0, 0));
        }
        self.frontend.backward(&dseq)
    }

    /// The per-step frame features `(B, T', F)`.
    pub fn frontend_features(&mut self, x: &Array5<f64>, ctx: Ctx) -> Result<Array3<f64>, ModelError> {
        self.check_input(x)?;
        Ok(self.frontend.forward(x, ctx, None).0)
    }

    /// Activation of an inner layer as `(B, C, T', h, w)`.
    pub fn layer_activation(&mut self, x: &Array5<f64>, layer: LayerId, ctx: Ctx) -> Result<Array5<f64>, ModelError> {
        self.check_input(x)?;
        if let LayerId::Stage(s) = layer {
            if !(1..=4).contains(&s) {
                return Err(ModelError::UnknownLayer(format!("layer{s}")));
            }
        }
        Ok(self.frontend.forward(x, ctx, Some(layer)).1.expect("capture requested"))
    }

    /// Spatial size of `layer`'s activation for the configured input.
    pub fn layer_hw(&self, layer: LayerId) -> (usize, usize) {
        let (mut h, mut w) = self.config.frontend_out_hw();
        if let LayerId::Stage(s) = layer {
            for _ in 1..s {
                h = (h + 2 - 3) / 2 + 1;
                w = (w + 2 - 3) / 2 + 1;
            }
        }
        (h, w)
    }

    /// Temporal receptive radius of the frontend in frames.
    pub fn temporal_receptive_radius(&self) -> usize {
        self.config.frontend.kernel[0] / 2
    }
}

impl Parameterized for WordModel {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.frontend.visit(&join(prefix, "frontend"), f);
        self.tcn.visit(&join(prefix, "backend.tcn"), f);
        self.gru.visit(&join(prefix, "backend.gru"), f);
    }
}

impl Network for WordModel {
    /// The init seed is left out: it does not change what a checkpoint fits.
    fn config_hash(&self) -> String {
        config_digest(&WordModelConfig { seed: 0, ..self.config.clone() })
    }

    fn frontend_hash(&self) -> String {
        config_digest(&self.config.frontend_view())
    }
}
