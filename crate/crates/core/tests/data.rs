use std::collections::BTreeMap;

use facevsr::data::{
    generate_synthetic, load_clip, load_manifest, write_frames, CueRegion, DataError, LandmarkTrack, Manifest,
    ManifestEntry, Split, SyntheticSpec, VideoClip,
};
use ndarray::{Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn entry(i: usize, rng: &mut ChaCha8Rng) -> ManifestEntry {
    let word = rng.gen_bool(0.5);
    ManifestEntry {
        clip_id: format!("clip{i:05}"),
        frames_path: format!("frames/{i}"),
        landmarks_path: format!("frames/{i}/lm.json"),
        label: word.then(|| format!("w{}", rng.gen_range(0..500))),
        transcript: (!word).then(|| "bin blue at f two now".to_string()),
        split: [Split::Train, Split::Val, Split::Test][rng.gen_range(0..3)],
        yaw_deg: rng.gen_bool(0.8).then(|| rng.gen_range(-90.0..90.0)),
        duration_frames: rng.gen_range(1..80),
    }
}

#[test]
fn ten_thousand_line_manifest_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let m = Manifest::new((0..10_000).map(|i| entry(i, &mut rng)).collect(), dir.path());
    let path = dir.path().join("m.jsonl");
    m.write(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let back = load_manifest(&path).unwrap();
    assert_eq!(back, m);
    back.write(&path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
}

fn write_clip(dir: &std::path::Path, frames: usize, rows: usize) -> Manifest {
    let px = Array4::from_shape_fn((frames, 6, 5, 1), |(t, y, x, _)| if (t, y, x) == (0, 0, 0) { 1.0 } else { ((t + y + x) % 5) as f64 / 8.0 });
    write_frames(&px, &dir.join("c0")).unwrap();
    let track = LandmarkTrack {
        scheme: "ibug68".into(),
        points: Array3::from_elem((rows, 68, 2), 2.0),
        confidence: vec![1.0; rows],
    };
    std::fs::write(dir.join("c0/landmarks.json"), track.to_json()).unwrap();
    let e = ManifestEntry {
        clip_id: "c0".into(),
        frames_path: "c0".into(),
        landmarks_path: "c0/landmarks.json".into(),
        label: Some("about".into()),
        transcript: None,
        split: Split::Train,
        yaw_deg: None,
        duration_frames: frames,
    };
    Manifest::new(vec![e], dir)
}

#[test]
fn clip_and_landmark_counts_agree() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_clip(dir.path(), 29, 29);
    let (clip, track) = load_clip(&m, &m.entries[0]).unwrap();
    assert_eq!(clip.frames(), 29);
    assert_eq!(track.frame_count(), 29);
    // 255 maps to exactly 1
    assert_eq!(clip.pixels.iter().cloned().fold(0.0, f64::max), 1.0);
    assert!(clip.pixels.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn missing_landmark_row_is_a_count_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_clip(dir.path(), 29, 28);
    assert!(matches!(load_clip(&m, &m.entries[0]), Err(DataError::FrameCountMismatch { frames: 29, landmarks: 28, .. })));
}

#[test]
fn corrupt_png_is_unreadable() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_clip(dir.path(), 3, 3);
    std::fs::write(dir.path().join("c0/001.png"), b"not a png").unwrap();
    assert!(matches!(load_clip(&m, &m.entries[0]), Err(DataError::UnreadableFrame { .. })));
}

fn spec8() -> SyntheticSpec {
    SyntheticSpec::words(8, 40, vec![CueRegion::Mouth], 7)
}

#[test]
fn generator_output_parses_and_loads_back_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = SyntheticSpec::words(3, 4, vec![CueRegion::Mouth, CueRegion::Cheeks], 3);
    spec.frames = 5;
    spec.canvas = (40, 48);
    let corpus = generate_synthetic(&spec).unwrap();
    let path = corpus.write(dir.path()).unwrap();
    let m = load_manifest(&path).unwrap();
    assert_eq!(m.entries, corpus.manifest.entries);
    for (i, e) in m.entries.iter().enumerate() {
        let (clip, track) = load_clip(&m, e).unwrap();
        assert_eq!(clip.pixels, corpus.clips[i].pixels);
        assert_eq!(track, corpus.landmarks[i]);
    }
    // byte-identical on regeneration
    let dir2 = tempfile::tempdir().unwrap();
    generate_synthetic(&spec).unwrap().write(dir2.path()).unwrap();
    for e in &m.entries {
        for f in std::fs::read_dir(dir.path().join(&e.frames_path)).unwrap() {
            let f = f.unwrap().path();
            let other = dir2.path().join(&e.frames_path).join(f.file_name().unwrap());
            assert_eq!(std::fs::read(&f).unwrap(), std::fs::read(other).unwrap());
        }
    }
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(dir2.path().join("manifest.jsonl")).unwrap());
}

#[test]
fn classes_are_balanced_across_splits() {
    let mut spec = spec8();
    spec.frames = 2;
    spec.canvas = (16, 16);
    let corpus = generate_synthetic(&spec).unwrap();
    assert_eq!(corpus.manifest.entries.len(), 320);
    let mut counts: BTreeMap<(Split, String), usize> = BTreeMap::new();
    for e in &corpus.manifest.entries {
        *counts.entry((e.split, e.label.clone().unwrap())).or_default() += 1;
    }
    for split in Split::ALL {
        let per: Vec<usize> = counts.iter().filter(|((s, _), _)| *s == split).map(|(_, n)| *n).collect();
        assert_eq!(per.len(), 8);
        assert!(per.iter().all(|n| *n == per[0]), "{split:?}: {per:?}");
    }
}

fn nearest_neighbour_accuracy(train: &[(VideoClip, usize)], test: &[(VideoClip, usize)]) -> f64 {
    let hits = test
        .iter()
        .filter(|(q, label)| {
            let best = train
                .iter()
                .map(|(r, l)| ((&q.pixels - &r.pixels).mapv(|d| d * d).sum(), *l))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .unwrap();
            best.1 == *label
        })
        .count();
    hits as f64 / test.len() as f64
}

#[test]
fn occluding_the_mouth_removes_all_class_information() {
    // Pose nuisance is switched off so pixel-space nearest neighbour can read
    // the mouth when it is visible; the control run checks exactly that.
    let mut spec = spec8();
    spec.frames = 8;
    spec.canvas = (40, 40);
    spec.nuisance.max_yaw_deg = 0.0;
    spec.nuisance.max_roll_deg = 0.0;
    spec.nuisance.max_shift = 0.0;
    spec.nuisance.face_scale = [0.7, 0.7];
    spec.nuisance.frame_jitter_px = 0.0;
    let corpus = generate_synthetic(&spec).unwrap();
    let pick = |split, occlude: bool| -> Vec<(VideoClip, usize)> {
        corpus
            .indices(split)
            .into_iter()
            .map(|i| (if occlude { corpus.occlude_mouth(i) } else { corpus.clips[i].clone() }, corpus.class_of(i)))
            .collect()
    };
    let visible = nearest_neighbour_accuracy(&pick(Split::Train, false), &pick(Split::Test, false));
    let occluded = nearest_neighbour_accuracy(&pick(Split::Train, true), &pick(Split::Test, true));
    let chance = 1.0 / 8.0;
    // 64 test clips: 3 sigma of a chance-level binomial is about 0.124
    let band = 3.0 * (chance * (1.0 - chance) / 64.0f64).sqrt();
    assert!(visible > chance + band, "control accuracy {visible}");
    assert!((occluded - chance).abs() <= band, "occluded accuracy {occluded}");
}
