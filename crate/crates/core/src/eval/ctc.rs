//! CTC decoding over `(T, K)` per-step posteriors with blank at class 0.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView2};

use super::lm::CharNGramLM;
use crate::nn::loss::{ctc_loss, log_sum_exp};

pub const BLANK: usize = 0;

/// Argmax class per step (first maximum wins).
pub fn best_path(posteriors: ArrayView2<'_, f64>) -> Vec<usize> {
    posteriors
        .rows()
        .into_iter()
        .map(|r| r.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b }).0)
        .collect()
}

/// Merges repeats, then drops blanks.
pub fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &k in path {
        if Some(k) != prev && k != BLANK {
            out.push(k);
        }
        prev = Some(k);
    }
    out
}

pub fn ctc_greedy(posteriors: ArrayView2<'_, f64>) -> Vec<usize> {
    collapse(&best_path(posteriors))
}

/// Class `k >= 1` is `alphabet[k - 1]`.
pub fn labels_to_text(labels: &[usize], alphabet: &[char]) -> String {
    labels.iter().filter_map(|&k| k.checked_sub(1).and_then(|i| alphabet.get(i))).collect()
}

pub fn text_to_labels(text: &str, alphabet: &[char]) -> Option<Vec<usize>> {
    text.chars().map(|c| alphabet.iter().position(|&a| a == c).map(|i| i + 1)).collect()
}

/// `log p(labels | posteriors)`, summed over all alignments.
pub fn ctc_log_prob(posteriors: ArrayView2<'_, f64>, labels: &[usize]) -> f64 {
    let logp = posteriors.mapv(f64::ln);
    -ctc_loss(logp.view(), labels, BLANK).0
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BeamConfig {
    pub beam_width: usize,
    /// LM weight.
    pub alpha: f64,
    /// Per-character insertion bonus.
    pub beta: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self { beam_width: 100, alpha: 0.5, beta: 0.1 }
    }
}

impl BeamConfig {
    pub fn plain(beam_width: usize) -> Self {
        Self { beam_width, alpha: 0.0, beta: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub labels: Vec<usize>,
    pub text: String,
    /// `log p_ctc + alpha log p_lm + beta |labels|`.
    pub score: f64,
    pub ctc_log_prob: f64,
}

#[derive(Clone, Debug)]
pub struct DecodeResult {
    pub hypothesis: String,
    pub labels: Vec<usize>,
    pub score: f64,
    /// Ranked by score, best first; `alternatives[0]` is the hypothesis.
    pub alternatives: Vec<Hypothesis>,
    pub posteriors: Array2<f64>,
}

/// Prefix beam search.
///
/// Beam entries are `(prefix, ends-in-blank)` pairs, each carrying its own
/// CTC log-probability, and pruning ranks them by
/// `ctc + alpha * lm(prefix) + beta * |prefix|`. With width 1 this follows
/// the argmax path exactly. Surviving prefixes and the greedy labeling are
/// rescored at the end with the exact CTC probability and the LM end marker.
pub fn ctc_beam_search(
    posteriors: ArrayView2<'_, f64>,
    cfg: &BeamConfig,
    lm: Option<&CharNGramLM>,
    alphabet: &[char],
) -> DecodeResult {
    assert!(cfg.beam_width >= 1, "beam width must be positive");
    let (t_len, k) = posteriors.dim();
    let logp = posteriors.mapv(f64::ln);
    let use_lm = lm.filter(|_| cfg.alpha != 0.0);
    if let Some(m) = use_lm {
        assert_eq!(m.alphabet, alphabet, "LM and decoder alphabets differ");
    }
    // lm ids of the labels: class k >= 1 maps to alphabet index k - 1
    let lm_bonus = |prefix: &[usize]| -> f64 {
        let ids: Vec<u32> = prefix.iter().map(|&c| (c - 1) as u32).collect();
        let lm_part = use_lm.map_or(0.0, |m| cfg.alpha * m.score_ids(&ids, false));
        lm_part + cfg.beta * prefix.len() as f64
    };
    let ext_bonus = |prefix: &[usize], c: usize| -> f64 {
        let ids: Vec<u32> = prefix.iter().map(|&c| (c - 1) as u32).collect();
        let lm_part = use_lm.map_or(0.0, |m| cfg.alpha * m.log_prob(&ids, (c - 1) as u32));
        lm_part + cfg.beta
    };

    // prefixes are interned; beam states refer to them by id
    let mut arena: Vec<Vec<usize>> = vec![Vec::new()];
    let mut index: HashMap<Vec<usize>, usize> = HashMap::from([(Vec::new(), 0)]);
    let mut bonus: Vec<f64> = vec![0.0];
    // (prefix id, blank_end) -> ctc log prob
    let mut beam: Vec<((usize, bool), f64)> = vec![((0, true), 0.0)];
    for t in 0..t_len {
        let mut order: Vec<(usize, bool)> = Vec::new();
        let mut acc: HashMap<(usize, bool), Vec<f64>> = HashMap::new();
        let mut add = |key: (usize, bool), v: f64, order: &mut Vec<(usize, bool)>| {
            acc.entry(key)
                .or_insert_with(|| {
                    order.push(key);
                    Vec::new()
                })
                .push(v);
        };
        for &((pid, blank_end), lp) in &beam {
            let last = arena[pid].last().copied();
            for c in 0..k {
                let v = lp + logp[[t, c]];
                if c == BLANK {
                    add((pid, true), v, &mut order);
                } else if Some(c) == last && !blank_end {
                    add((pid, false), v, &mut order);
                } else {
                    let mut next = arena[pid].clone();
                    next.push(c);
                    let nid = match index.get(&next) {
                        Some(&i) => i,
                        None => {
                            let b = bonus[pid] + ext_bonus(&arena[pid], c);
                            arena.push(next.clone());
                            bonus.push(b);
                            index.insert(next, arena.len() - 1);
                            arena.len() - 1
                        }
                    };
                    add((nid, false), v, &mut order);
                }
            }
        }
        let mut next: Vec<((usize, bool), f64)> = order.iter().map(|key| (*key, log_sum_exp(acc[key].iter().copied()))).collect();
        // stable: ties keep generation order
        next.sort_by(|a, b| (b.1 + bonus[b.0 .0]).total_cmp(&(a.1 + bonus[a.0 .0])));
        next.truncate(cfg.beam_width);
        beam = next;
    }

    let mut candidates: Vec<Vec<usize>> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for ((pid, _), _) in &beam {
        if seen.insert(*pid) {
            candidates.push(arena[*pid].clone());
        }
    }
    let greedy = ctc_greedy(posteriors);
    if !candidates.contains(&greedy) {
        candidates.push(greedy);
    }
    let mut alternatives: Vec<Hypothesis> = candidates
        .into_iter()
        .map(|labels| {
            let ctc = ctc_log_prob(posteriors, &labels);
            let end = use_lm.map_or(0.0, |m| {
                let ids: Vec<u32> = labels.iter().map(|&c| (c - 1) as u32).collect();
                cfg.alpha * m.log_prob(&ids, m.eos())
            });
            Hypothesis {
                text: labels_to_text(&labels, alphabet),
                score: ctc + lm_bonus(&labels) + end,
                ctc_log_prob: ctc,
                labels,
            }
        })
        .collect();
    alternatives.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.labels.cmp(&b.labels)));
    let best = alternatives[0].clone();
    DecodeResult {
        hypothesis: best.text,
        labels: best.labels,
        score: best.score,
        alternatives,
        posteriors: posteriors.to_owned(),
    }
}

/// Total score `log p_ctc + alpha log p_lm(with end) + beta |labels|` of a
/// fixed labeling.
pub fn score_labeling(
    posteriors: ArrayView2<'_, f64>,
    labels: &[usize],
    cfg: &BeamConfig,
    lm: Option<&CharNGramLM>,
) -> f64 {
    let ctc = ctc_log_prob(posteriors, labels);
    let lm_part = lm.filter(|_| cfg.alpha != 0.0).map_or(0.0, |m| {
        let ids: Vec<u32> = labels.iter().map(|&c| (c - 1) as u32).collect();
        cfg.alpha * m.score_ids(&ids, true)
    });
    ctc + lm_part + cfg.beta * labels.len() as f64
}
