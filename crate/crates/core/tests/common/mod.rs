//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use ndarray::Array2;
use rand::Rng;

/// Best `(edits, indels, s, d, i)` over every edit script, by plain
/// recursion (no memoization).
pub fn edit_script_oracle(r: &[u8], h: &[u8]) -> (usize, usize, usize) {
    fn go(r: &[u8], h: &[u8]) -> (usize, usize, usize, usize, usize) {
        if r.is_empty() {
            return (h.len(), h.len(), 0, 0, h.len());
        }
        if h.is_empty() {
            return (r.len(), r.len(), 0, r.len(), 0);
        }
        let mut best = (usize::MAX, usize::MAX, 0, 0, 0);
        let mut consider = |c: (usize, usize, usize, usize, usize)| {
            if (c.0, c.1) < (best.0, best.1) {
                best = c;
            }
        };
        let rest = go(&r[1..], &h[1..]);
        if r[0] == h[0] {
            consider(rest);
        } else {
            consider((rest.0 + 1, rest.1, rest.2 + 1, rest.3, rest.4));
        }
        let del = go(&r[1..], h);
        consider((del.0 + 1, del.1 + 1, del.2, del.3 + 1, del.4));
        let ins = go(r, &h[1..]);
        consider((ins.0 + 1, ins.1 + 1, ins.2, ins.3, ins.4 + 1));
        best
    }
    let b = go(r, h);
    (b.2, b.3, b.4)
}

pub fn random_tokens(rng: &mut impl Rng, max_len: usize, alphabet: u8) -> Vec<u8> {
    let n = rng.gen_range(0..=max_len);
    (0..n).map(|_| rng.gen_range(0..alphabet)).collect()
}

/// Every alignment path enumerated: labeling -> total probability.
pub fn ctc_exhaustive(post: &Array2<f64>) -> HashMap<Vec<usize>, f64> {
    let (t, k) = post.dim();
    let mut out: HashMap<Vec<usize>, f64> = HashMap::new();
    let total = k.pow(t as u32);
    for code in 0..total {
        let mut c = code;
        let mut path = Vec::with_capacity(t);
        let mut p = 1.0;
        for step in 0..t {
            let s = c % k;
            c /= k;
            path.push(s);
            p *= post[[step, s]];
        }
        let mut label = Vec::new();
        let mut prev = usize::MAX;
        for &s in &path {
            if s != prev && s != 0 {
                label.push(s);
            }
            prev = s;
        }
        *out.entry(label).or_default() += p;
    }
    out
}

/// Random row-stochastic `(T, K)` grid with peaked rows.
pub fn random_posteriors(rng: &mut impl Rng, t: usize, k: usize) -> Array2<f64> {
    let mut p = Array2::from_shape_fn((t, k), |_| rng.gen_range(0.0f64..1.0).powi(3) + 1e-3);
    for mut row in p.rows_mut() {
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    p
}
