//! Sentence-level recognizer: three spatiotemporal conv blocks, a stacked
//! bidirectional GRU and a per-step softmax over the alphabet plus blank.

use ndarray::{Array3, Array5, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{config_digest, ModelError, Network};
use crate::nn::{join, loss::log_softmax, BiGru, Conv3d, Ctx, Dropout, Linear, MaxPool3d, Param, Parameterized, Relu};

/// Index of the blank symbol in every per-step distribution.
pub const BLANK: usize = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StBlockConfig {
    pub channels: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pool: [usize; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceModelConfig {
    /// Output symbols excluding blank; symbol `i` maps to class `i + 1`.
    pub alphabet: Vec<char>,
    /// `(H, W, C)` of one frame.
    pub input_size: (usize, usize, usize),
    pub blocks: Vec<StBlockConfig>,
    pub rnn_layers: usize,
    pub rnn_hidden: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl SentenceModelConfig {
    pub fn default_alphabet() -> Vec<char> {
        " abcdefghijklmnopqrstuvwxyz".chars().collect()
    }

    /// LipNet-style defaults on 100x50 mouth crops.
    pub fn full(alphabet: Vec<char>) -> Self {
        Self {
            alphabet,
            input_size: (50, 100, 3),
            blocks: vec![
                StBlockConfig { channels: 32, kernel: [3, 5, 5], stride: [1, 2, 2], pool: [1, 2, 2] },
                StBlockConfig { channels: 64, kernel: [3, 5, 5], stride: [1, 1, 1], pool: [1, 2, 2] },
                StBlockConfig { channels: 96, kernel: [3, 3, 3], stride: [1, 1, 1], pool: [1, 2, 2] },
            ],
            rnn_layers: 2,
            rnn_hidden: 256,
            dropout_rate: 0.5,
            seed: 0,
        }
    }

    pub fn compact(alphabet: Vec<char>, input: (usize, usize)) -> Self {
        Self {
            alphabet,
            input_size: (input.0, input.1, 1),
            blocks: vec![
                StBlockConfig { channels: 8, kernel: [3, 5, 5], stride: [1, 2, 2], pool: [1, 2, 2] },
                StBlockConfig { channels: 16, kernel: [3, 3, 3], stride: [1, 1, 1], pool: [1, 2, 2] },
                StBlockConfig { channels: 16, kernel: [3, 3, 3], stride: [1, 1, 1], pool: [1, 1, 1] },
            ],
            rnn_layers: 2,
            rnn_hidden: 32,
            dropout_rate: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.blocks.len() != 3 {
            return bad("exactly three spatiotemporal blocks are required");
        }
        if self.alphabet.is_empty() {
            return bad("alphabet must be nonempty");
        }
        if self.rnn_layers == 0 || self.rnn_hidden == 0 {
            return bad("recurrent backend must have at least one layer");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if self.blocks.iter().any(|b| b.kernel.iter().any(|k| k % 2 == 0)) {
            return bad("block kernels must be odd");
        }
        let (h, w) = self.out_hw();
        if h == 0 || w == 0 {
            return bad("input too small for the configured blocks");
        }
        Ok(())
    }

    pub fn num_symbols(&self) -> usize {
        self.alphabet.len() + 1
    }

    fn block_len(b: &StBlockConfig, axis: usize, n: usize) -> usize {
        let k = b.kernel[axis];
        let conv = (n + 2 * (k / 2) - k) / b.stride[axis] + 1;
        conv / b.pool[axis]
    }

    /// Output steps for `t` frames: each block maps `n` to
    /// `((n + 2*(k/2) - k) / stride + 1) / pool` along time.
    pub fn temporal_out_len(&self, t: usize) -> usize {
        self.blocks.iter().fold(t, |n, b| Self::block_len(b, 0, n))
    }

    pub fn out_hw(&self) -> (usize, usize) {
        let h = self.blocks.iter().fold(self.input_size.0, |n, b| Self::block_len(b, 1, n));
        let w = self.blocks.iter().fold(self.input_size.1, |n, b| Self::block_len(b, 2, n));
        (h, w)
    }

    /// Frames on either side of a step that can influence the frontend's
    /// output at that step (all temporal strides and pools equal 1).
    pub fn temporal_receptive_radius(&self) -> usize {
        self.blocks.iter().map(|b| b.kernel[0] / 2).sum()
    }

    pub fn char_to_class(&self, c: char) -> Option<usize> {
        self.alphabet.iter().position(|&a| a == c).map(|i| i + 1)
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>, ModelError> {
        text.chars()
            .map(|c| self.char_to_class(c).ok_or_else(|| ModelError::InvalidConfig(format!("character {c:?} not in alphabet"))))
            .collect()
    }

    pub fn decode_classes(&self, classes: &[usize]) -> String {
        classes.iter().filter(|&&c| c != BLANK).map(|&c| self.alphabet[c - 1]).collect()
    }
}

#[derive(Clone, Debug)]
struct StBlock {
    conv: Conv3d,
    relu: Relu,
    dropout: Dropout,
    pool: MaxPool3d,
}

#[derive(Clone, Debug)]
pub struct SentenceModel {
    config: SentenceModelConfig,
    blocks: Vec<StBlock>,
    rnn: BiGru,
    fc: Linear,
    shape: Option<(usize, usize, usize, usize, usize)>,
}

impl SentenceModel {
    pub fn new(config: SentenceModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut cin = config.input_size.2;
        let mut blocks = Vec::new();
        for (i, b) in config.blocks.iter().enumerate() {
            let pad = [b.kernel[0] / 2, b.kernel[1] / 2, b.kernel[2] / 2];
            blocks.push(StBlock {
                conv: Conv3d::new(cin, b.channels, b.kernel, b.stride, pad, true, &mut rng),
                relu: Relu::new(),
                dropout: Dropout::new(config.dropout_rate, config.seed ^ (0x5eed_0000 + i as u64)),
                pool: MaxPool3d::new(b.pool, b.pool, [0, 0, 0]),
            });
            cin = b.channels;
        }
        let (h, w) = config.out_hw();
        let rnn = BiGru::new(cin * h * w, config.rnn_hidden, config.rnn_layers, &mut rng);
        let fc = Linear::new(rnn.out_features(), config.num_symbols(), &mut rng);
        Ok(Self { config, blocks, rnn, fc, shape: None })
    }

    pub fn config(&self) -> &SentenceModelConfig {
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

    /// Output of the convolutional frontend, `(B, C, T', h, w)`.
    pub fn frontend(&mut self, x: &Array5<f64>, ctx: Ctx) -> Result<Array5<f64>, ModelError> {
        self.check_input(x)?;
        let mut o = x.clone();
        for b in &mut self.blocks {
            o = b.conv.forward(&o);
            o = b.relu.forward(&o, ctx);
            o = b.dropout.forward(&o, ctx);
            o = b.pool.forward(&o);
        }
        Ok(o)
    }

    /// Per-step log-probabilities `(B, T', |V|+1)`.
    pub fn log_probs(&mut self, x: &Array5<f64>, ctx: Ctx) -> Result<Array3<f64>, ModelError> {
        let feats = self.frontend(x, ctx)?;
        let dims = feats.dim();
        let (b, c, t, h, w) = dims;
        self.shape = Some(dims);
        let seq = feats.permuted_axes([0, 2, 1, 3, 4]).as_standard_layout().into_owned();
        let seq = seq.into_shape_with_order((b, t, c * h * w)).expect("reshape");
        let hs = self.rnn.forward(&seq);
        let hf = hs.dim().2;
        let flat = hs.into_shape_with_order((b * t, hf)).expect("reshape");
        let logits = self.fc.forward(&flat);
        let k = logits.dim().1;
        Ok(log_softmax(&logits).into_shape_with_order((b, t, k)).expect("reshape"))
    }

    /// Per-step distributions over alphabet plus blank.
    pub fn forward(&mut self, x: &Array5<f64>, ctx: Ctx) -> Result<Array3<f64>, ModelError> {
        Ok(self.log_probs(x, ctx)?.mapv(f64::exp))
    }

    /// Backpropagates d(loss)/d(logits), shaped `(B, T', K)`, to the input.
    pub fn backward(&mut self, dlogits: &Array3<f64>) -> Array5<f64> {
        let (b, c, t, h, w) = self.shape.expect("sentence backward before forward");
        let k = dlogits.dim().2;
        let d = dlogits.to_owned().into_shape_with_order((b * t, k)).expect("reshape");
        let dh = self.fc.backward(&d);
        let hf = dh.dim().1;
        let dseq = self.rnn.backward(&dh.into_shape_with_order((b, t, hf)).expect("reshape"));
        let g = dseq.into_shape_with_order((b, t, c, h, w)).expect("reshape");
        let mut g = g.permuted_axes([0, 2, 1, 3, 4]).as_standard_layout().into_owned();
        for blk in self.blocks.iter_mut().rev() {
            g = blk.pool.backward(&g);
            g = blk.dropout.backward(&g);
            g = blk.relu.backward(&g);
            g = blk.conv.backward(&g);
        }
        g
    }

    /// Reseeds the dropout masks, e.g. once per epoch.
    pub fn reseed_dropout(&mut self, seed: u64) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.dropout.reseed(seed ^ (0x5eed_0000 + i as u64));
        }
    }
}

/// Greedy per-step argmax path of one `(T', K)` distribution.
pub fn argmax_path(probs: ndarray::ArrayView2<'_, f64>) -> Vec<usize> {
    probs
        .axis_iter(Axis(0))
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
                .0
        })
        .collect()
}

impl Parameterized for SentenceModel {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.conv.visit(&join(prefix, &format!("frontend.block{}.conv", i + 1)), f);
        }
        self.rnn.visit(&join(prefix, "backend.rnn"), f);
        self.fc.visit(&join(prefix, "backend.fc"), f);
    }
}

impl Network for SentenceModel {
    /// The init seed is left out: it does not change what a checkpoint fits.
    fn config_hash(&self) -> String {
        config_digest(&SentenceModelConfig { seed: 0, ..self.config.clone() })
    }

    fn frontend_hash(&self) -> String {
        config_digest(&serde_json::json!({ "input_size": self.config.input_size, "blocks": self.config.blocks }))
    }
}
