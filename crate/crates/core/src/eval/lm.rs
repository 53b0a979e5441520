use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Character n-gram model with add-k smoothing.
///
/// Symbols are the alphabet plus an end marker; contexts are left-padded
/// with a begin marker. A context never seen in training backs off to its
/// longest seen suffix, so every context still gets a proper distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharNGramLM {
    pub order: usize,
    pub alphabet: Vec<char>,
    pub add_k: f64,
    /// Context (symbol ids, most recent last) -> counts per symbol.
    counts: HashMap<Vec<u32>, Vec<f64>>,
    uniform: bool,
}

const BOS: u32 = u32::MAX;

impl CharNGramLM {
    pub const DEFAULT_ORDER: usize = 5;
    pub const DEFAULT_ADD_K: f64 = 0.1;

    /// Number of predicted symbols (alphabet + end marker).
    pub fn num_symbols(&self) -> usize {
        self.alphabet.len() + 1
    }

    pub fn eos(&self) -> u32 {
        self.alphabet.len() as u32
    }

    fn id(&self, c: char) -> Option<u32> {
        self.alphabet.iter().position(|&a| a == c).map(|i| i as u32)
    }

    /// Fits counts for every context length `0..order`.
    pub fn fit(corpus: &[&str], alphabet: &[char], order: usize, add_k: f64) -> Self {
        assert!(order >= 1, "order must be positive");
        let mut lm = Self { order, alphabet: alphabet.to_vec(), add_k, counts: HashMap::new(), uniform: false };
        let k = lm.num_symbols();
        for text in corpus {
            let mut seq: Vec<u32> = vec![BOS; order - 1];
            seq.extend(text.chars().filter_map(|c| lm.id(c)));
            seq.push(lm.eos());
            for pos in order - 1..seq.len() {
                let sym = seq[pos] as usize;
                for len in 0..order {
                    let ctx = seq[pos - len..pos].to_vec();
                    lm.counts.entry(ctx).or_insert_with(|| vec![0.0; k])[sym] += 1.0;
                }
            }
        }
        lm
    }

    /// Every context predicts every symbol equally.
    pub fn uniform(alphabet: &[char], order: usize) -> Self {
        Self { order, alphabet: alphabet.to_vec(), add_k: 1.0, counts: HashMap::new(), uniform: true }
    }

    /// `(order - 1)`-symbol context ending at the end of `history`.
    fn context(&self, history: &[u32]) -> Vec<u32> {
        let n = self.order - 1;
        let mut ctx = vec![BOS; n.saturating_sub(history.len())];
        ctx.extend_from_slice(&history[history.len().saturating_sub(n)..]);
        ctx
    }

    /// Distribution over the symbols given symbol-id history.
    pub fn distribution(&self, history: &[u32]) -> Vec<f64> {
        let k = self.num_symbols();
        if self.uniform {
            return vec![1.0 / k as f64; k];
        }
        let ctx = self.context(history);
        for start in 0..=ctx.len() {
            if let Some(c) = self.counts.get(&ctx[start..]) {
                let total: f64 = c.iter().sum();
                if total > 0.0 {
                    let denom = total + self.add_k * k as f64;
                    return c.iter().map(|n| (n + self.add_k) / denom).collect();
                }
            }
        }
        vec![1.0 / k as f64; k]
    }

    pub fn log_prob(&self, history: &[u32], symbol: u32) -> f64 {
        self.distribution(history)[symbol as usize].ln()
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        text.chars().filter_map(|c| self.id(c)).collect()
    }

    /// `log p(text, end)`.
    pub fn score(&self, text: &str) -> f64 {
        self.score_ids(&self.encode(text), true)
    }

    pub fn score_ids(&self, ids: &[u32], with_end: bool) -> f64 {
        let mut total: f64 = (0..ids.len()).map(|i| self.log_prob(&ids[..i], ids[i])).sum();
        if with_end {
            total += self.log_prob(ids, self.eos());
        }
        total
    }

    /// Per-symbol perplexity, end markers included.
    pub fn perplexity(&self, texts: &[&str]) -> f64 {
        let mut ll = 0.0;
        let mut n = 0usize;
        for t in texts {
            let ids = self.encode(t);
            ll += self.score_ids(&ids, true);
            n += ids.len() + 1;
        }
        (-ll / n as f64).exp()
    }

    /// Every context seen in training (and the empty one).
    pub fn contexts(&self) -> Vec<Vec<u32>> {
        let mut v: Vec<Vec<u32>> = self.counts.keys().cloned().collect();
        v.sort();
        v
    }
}
