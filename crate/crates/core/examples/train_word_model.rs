//! Stage-III word training on the mouth-cue synthetic corpus (8 words,
//! 320 clips), then test accuracy and a saved checkpoint.
//!
//!     cargo run --release --example train_word_model -- [epochs] [out_dir]

use facevsr::augment::AugmentPolicy;
use facevsr::data::{generate_synthetic, CueRegion, Split, SyntheticSpec};
use facevsr::geometry::{preprocess_clip, FaceTemplate, RoIKind, RoISpec, TemporalGaussian};
use facevsr::models::{WordModel, WordModelConfig};
use facevsr::train::{evaluate_word, train_word, EventLog, LabeledSet, RunDir, StagePlan};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let epochs = std::env::args().nth(1).map_or(Ok(30), |s| s.parse())?;
    let out = std::env::args().nth(2).unwrap_or_else(|| "word_run".into());

    let corpus = generate_synthetic(&SyntheticSpec::words(8, 40, vec![CueRegion::Mouth], 11))?;
    let roi = RoISpec::new(RoIKind::MouthCentered { side: 20.0 }, (36, 36), FaceTemplate::new((36, 36)));
    let clips = corpus
        .clips
        .iter()
        .zip(&corpus.landmarks)
        .map(|(c, l)| preprocess_clip(c, l, &roi, Some(TemporalGaussian::default())).map(|p| p.clip))
        .collect::<Result<Vec<_>, _>>()?;
    let set = |s: Split| LabeledSet::from_labels(corpus.indices(s).iter().map(|&i| clips[i].clone()).collect(), &corpus.classes);
    let (train, val, test) = (set(Split::Train)?, set(Split::Val)?, set(Split::Test)?);

    let policy = AugmentPolicy { random_crop_to: Some((32, 32)), ..Default::default() };
    let mut model = WordModel::new(WordModelConfig::compact(corpus.classes.len(), (32, 32)))?;
    let mut plan = StagePlan::stage_iii_only(epochs, false);
    plan.batch_size = 4;
    plan.patience = None;
    let dir = RunDir::new(&out);
    let mut log = EventLog::to_file(&dir.events())?;
    let history = train_word(&mut model, &train, Some(&val), &plan, &policy, 1, &mut log, Some(&dir))?;

    let best = &history.stages[0];
    let (_, acc) = evaluate_word(&mut model, &test, &policy)?;
    println!("best epoch {} of {}, test accuracy {acc:.3}", best.best_epoch, best.epochs_run);
    println!("checkpoint {}", dir.best_checkpoint(&best.best.meta.stage).display());
    Ok(())
}
