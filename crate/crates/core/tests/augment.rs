use std::collections::BTreeSet;

use facevsr::augment::{
    cutout_with_offset, hflip, random_crop_consistent, sample_rng, temporal_jitter, AugmentPolicy, CutoutConfig,
    TemporalJitter,
};
use facevsr::data::VideoClip;
use ndarray::Array4;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bright(t: usize, h: usize, w: usize) -> VideoClip {
    // strictly positive so zeroed pixels are exactly the patch
    VideoClip::new(Array4::from_shape_fn((t, h, w, 1), |(a, b, c, _)| 0.1 + ((a + 3 * b + 7 * c) % 9) as f64 / 10.0))
}

fn zero_set(clip: &VideoClip, t: usize) -> BTreeSet<(usize, usize)> {
    let (h, w) = clip.frame_size();
    (0..h).flat_map(|r| (0..w).map(move |c| (r, c))).filter(|&(r, c)| clip.pixels[[t, r, c, 0]] == 0.0).collect()
}

#[test]
fn cutout_mask_is_frame_invariant() {
    let clip = bright(25, 112, 112);
    let cfg = CutoutConfig::half(112);
    for seed in 0..50 {
        let (out, off) = cutout_with_offset(&clip, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let (r, c) = off.unwrap();
        let first = zero_set(&out, 0);
        assert_eq!(first.len(), 3136);
        assert!(first.iter().all(|&(y, x)| (r..r + 56).contains(&y) && (c..c + 56).contains(&x)));
        for t in 1..25 {
            assert_eq!(zero_set(&out, t), first);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn augmentations_keep_range_labels_and_determinism(seed in any::<u64>(), flip in 0.0f64..=1.0, patch in 0usize..=12) {
        let clip = bright(5, 14, 14);
        let policy = AugmentPolicy {
            cutout: Some(CutoutConfig::new(patch, patch)),
            random_crop_to: Some((12, 12)),
            hflip_prob: flip,
            temporal_jitter_prob: 0.1,
        };
        let a = policy.train(&clip, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = policy.train(&clip, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.pixels.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(a.frame_size(), (12, 12));
        prop_assert_eq!(&a.meta, &clip.meta);
    }

    #[test]
    fn crop_offset_is_shared_by_all_frames(seed in any::<u64>()) {
        // every frame is the same image, so a consistent crop gives identical frames
        let base = Array4::from_shape_fn((1, 20, 20, 1), |(_, y, x, _)| (y * 20 + x) as f64 / 400.0);
        let clip = VideoClip::new(ndarray::concatenate(ndarray::Axis(0), &[base.view(), base.view(), base.view()]).unwrap());
        let out = random_crop_consistent(&clip, (16, 16), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(out.frame(0), out.frame(2));
        let v = out.pixels[[0, 0, 0, 0]] * 400.0;
        let (r, c) = ((v.round() as usize) / 20, (v.round() as usize) % 20);
        prop_assert!(r <= 4 && c <= 4);
    }

    #[test]
    fn flip_all_or_nothing(seed in any::<u64>()) {
        let clip = bright(4, 5, 7);
        let out = hflip(&clip, &mut ChaCha8Rng::seed_from_u64(seed), 0.5).unwrap();
        let flipped = facevsr::augment::flip_horizontal(&clip);
        prop_assert!(out == clip || out == flipped);
    }
}

#[test]
fn jitter_preserves_expected_length() {
    // Monte Carlo: each frame contributes 0, 1 or 2 frames with probabilities
    // p, 1 - 2p, p; mean 1, variance 2p per frame.
    let t = 20usize;
    let p = 0.05;
    let clip = bright(t, 2, 2);
    let trials = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let total: usize = (0..trials).map(|_| temporal_jitter(&clip, p, &mut rng).unwrap().frames()).sum();
    let mean = total as f64 / trials as f64;
    let expected = t as f64 * (1.0 + p - p);
    let sigma = (t as f64 * 2.0 * p / trials as f64).sqrt();
    assert!((mean - expected).abs() < 3.0 * sigma, "mean {mean}, expected {expected} +- {}", 3.0 * sigma);

    let skewed = TemporalJitter { p_dup: 0.2, p_del: 0.05 };
    let total: usize = (0..trials).map(|_| skewed.apply(&clip, &mut rng).unwrap().frames()).sum();
    let mean = total as f64 / trials as f64;
    let var = 0.2 + 0.05 - (0.2f64 - 0.05).powi(2);
    let sigma = (t as f64 * var / trials as f64).sqrt();
    assert!((mean - t as f64 * 1.15).abs() < 3.0 * sigma, "{mean}");
}

#[test]
fn per_sample_rngs_are_reproducible() {
    use rand::Rng;
    let a: Vec<u32> = (0..4).map(|_| sample_rng(5, 17, 2).gen()).collect();
    assert!(a.windows(2).all(|w| w[0] == w[1]));
    let x: u64 = sample_rng(5, 17, 2).gen();
    let y: u64 = sample_rng(5, 17, 3).gen();
    assert_ne!(x, y);
}
