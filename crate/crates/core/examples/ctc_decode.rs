//! Greedy CTC decoding against prefix beam search, with and without a
//! character n-gram language model, on a hand-made posterior grid.
//!
//!     cargo run --release --example ctc_decode

use facevsr::eval::ctc::labels_to_text;
use facevsr::eval::{ctc_beam_search, ctc_greedy, BeamConfig, CharNGramLM};
use ndarray::Array2;

fn main() {
    let alphabet: Vec<char> = " abnow".chars().collect();
    // classes: 0 blank, then alphabet[i] at i + 1
    let cls = |c: char| alphabet.iter().position(|&a| a == c).unwrap() + 1;
    let frames = ["b", "b", "i", "-", "n", "n", "-", " ", "n", "o", "-", "w"];
    let k = alphabet.len() + 1;
    let mut post = Array2::from_elem((frames.len(), k), 0.04);
    for (t, f) in frames.iter().enumerate() {
        let c = match f.chars().next().unwrap() {
            '-' => 0,
            c if alphabet.contains(&c) => cls(c),
            // letters outside the alphabet blur between two neighbours
            _ => {
                post[[t, cls('o')]] = 0.45;
                cls('a')
            }
        };
        post[[t, c]] += 0.5;
    }
    post.rows_mut().into_iter().for_each(|mut r| {
        let s = r.sum();
        r /= s;
    });

    let greedy = labels_to_text(&ctc_greedy(post.view()), &alphabet);
    println!("greedy           {greedy:?}");
    let plain = ctc_beam_search(post.view(), &BeamConfig::plain(16), None, &alphabet);
    println!("beam 16          {:?}  log p {:.3}", plain.hypothesis, plain.score);

    let lm = CharNGramLM::fit(&["bon now", "bon on", "bon no", "ban on"], &alphabet, 3, 0.01);
    let with_lm = ctc_beam_search(post.view(), &BeamConfig { beam_width: 16, alpha: 0.8, beta: 0.5 }, Some(&lm), &alphabet);
    println!("beam 16 + LM     {:?}", with_lm.hypothesis);
    for h in with_lm.alternatives.iter().take(4) {
        println!("    {:12?} score {:7.3}  ctc {:7.3}", h.text, h.score, h.ctc_log_prob);
    }
}
