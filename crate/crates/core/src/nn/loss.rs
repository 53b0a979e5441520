//! Softmax cross-entropy and connectionist temporal classification losses.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

pub fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn lse2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub fn softmax_row(row: ArrayView1<'_, f64>) -> Array1<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = row.mapv(|v| (v - m).exp());
    let s = e.sum();
    e / s
}

pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for (mut o, r) in out.axis_iter_mut(Axis(0)).zip(logits.axis_iter(Axis(0))) {
        o.assign(&softmax_row(r));
    }
    out
}

pub fn log_softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let lse = log_sum_exp(row.iter().copied());
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Mean cross-entropy over the batch and its gradient w.r.t. the logits.
pub fn cross_entropy(logits: &Array2<f64>, targets: &[usize]) -> (f64, Array2<f64>) {
    let (b, _) = logits.dim();
    assert_eq!(b, targets.len());
    let mut grad = softmax(logits);
    let lsm = log_softmax(logits);
    let mut loss = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        loss -= lsm[[i, t]];
        grad[[i, t]] -= 1.0;
    }
    grad /= b as f64;
    (loss / b as f64, grad)
}

/// CTC negative log-likelihood of `labels` given per-step log-probabilities
/// `(T, K)` and the gradient w.r.t. the *pre-softmax* logits.
///
/// `blank` is the blank index; labels must not contain it. Returns
/// `f64::INFINITY` (and a zero gradient) when no alignment exists.
pub fn ctc_loss(log_probs: ArrayView2<'_, f64>, labels: &[usize], blank: usize) -> (f64, Array2<f64>) {
    let (t_len, k) = log_probs.dim();
    let ext: Vec<usize> = std::iter::once(blank)
        .chain(labels.iter().flat_map(|&l| [l, blank]))
        .collect();
    let s_len = ext.len();
    let ninf = f64::NEG_INFINITY;
    let can_skip = |s: usize| s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];

    let mut alpha = Array2::from_elem((t_len, s_len), ninf);
    alpha[[0, 0]] = log_probs[[0, blank]];
    if s_len > 1 {
        alpha[[0, 1]] = log_probs[[0, ext[1]]];
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let mut a = alpha[[t - 1, s]];
            if s >= 1 {
                a = lse2(a, alpha[[t - 1, s - 1]]);
            }
            if can_skip(s) {
                a = lse2(a, alpha[[t - 1, s - 2]]);
            }
            alpha[[t, s]] = a + log_probs[[t, ext[s]]];
        }
    }
    let mut beta = Array2::from_elem((t_len, s_len), ninf);
    beta[[t_len - 1, s_len - 1]] = log_probs[[t_len - 1, ext[s_len - 1]]];
    if s_len > 1 {
        beta[[t_len - 1, s_len - 2]] = log_probs[[t_len - 1, ext[s_len - 2]]];
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let mut b = beta[[t + 1, s]];
            if s + 1 < s_len {
                b = lse2(b, beta[[t + 1, s + 1]]);
            }
            if s + 2 < s_len && ext[s + 2] != blank && ext[s + 2] != ext[s] {
                b = lse2(b, beta[[t + 1, s + 2]]);
            }
            beta[[t, s]] = b + log_probs[[t, ext[s]]];
        }
    }
    let last = alpha[[t_len - 1, s_len - 1]];
    let log_p = if s_len > 1 { lse2(last, alpha[[t_len - 1, s_len - 2]]) } else { last };
    let mut grad = Array2::zeros((t_len, k));
    if log_p == ninf {
        return (f64::INFINITY, grad);
    }
    for t in 0..t_len {
        // alpha*beta double-counts the emission at t.
        let mut occ = vec![ninf; k];
        for s in 0..s_len {
            let ab = alpha[[t, s]] + beta[[t, s]] - log_probs[[t, ext[s]]];
            occ[ext[s]] = lse2(occ[ext[s]], ab);
        }
        for c in 0..k {
            let y = log_probs[[t, c]].exp();
            grad[[t, c]] = y - (occ[c] - log_p).exp();
        }
    }
    (-log_p, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn single_step_single_label_is_negative_log_prob() {
        let logits = arr2(&[[0.3, -1.2, 2.0]]);
        let lp = log_softmax(&logits);
        let (loss, _) = ctc_loss(lp.view(), &[2], 0);
        assert!((loss + lp[[0, 2]]).abs() < 1e-15);
    }

    #[test]
    fn impossible_alignment_is_infinite() {
        let lp = log_softmax(&arr2(&[[0.0, 0.0], [0.0, 0.0]]));
        // "aa" needs three frames (a, blank, a)
        let (loss, _) = ctc_loss(lp.view(), &[1, 1], 0);
        assert!(loss.is_infinite());
    }

    #[test]
    fn cross_entropy_gradient_rows_sum_to_zero() {
        let logits = arr2(&[[1.0, 2.0, 0.5], [0.0, 0.0, 0.0]]);
        let (loss, g) = cross_entropy(&logits, &[1, 2]);
        assert!(loss > 0.0);
        for r in g.rows() {
            assert!(r.sum().abs() < 1e-15);
        }
    }

    #[test]
    fn ctc_gradient_matches_finite_differences() {
        let logits = arr2(&[[0.2, -0.4, 1.1], [0.7, 0.1, -0.3], [-0.5, 0.9, 0.4], [0.3, 0.3, -1.0]]);
        let labels = [1, 2];
        let f = |l: &Array2<f64>| ctc_loss(log_softmax(l).view(), &labels, 0).0;
        let (_, g) = ctc_loss(log_softmax(&logits).view(), &labels, 0);
        let h = 1e-6;
        for t in 0..4 {
            for c in 0..3 {
                let mut p = logits.clone();
                p[[t, c]] += h;
                let mut m = logits.clone();
                m[[t, c]] -= h;
                let num = (f(&p) - f(&m)) / (2.0 * h);
                assert!((num - g[[t, c]]).abs() < 1e-8);
            }
        }
    }
}
