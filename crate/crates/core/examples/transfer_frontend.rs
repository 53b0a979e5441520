//! Trains a source word model, copies its frontend into a fresh model and
//! fine-tunes only the backend. The frontend weights stay bit-identical.
//!
//!     cargo run --release --example transfer_frontend -- [out_dir]

use std::path::Path;

use facevsr::augment::AugmentPolicy;
use facevsr::data::{generate_synthetic, CueRegion, Split, SyntheticSpec};
use facevsr::geometry::{preprocess_clip, FaceTemplate, RoIKind, RoISpec, TemporalGaussian};
use facevsr::models::{Checkpoint, WordModel, WordModelConfig};
use facevsr::train::{evaluate_word, fine_tune_word, train_word, transfer_frontend, EventLog, LabeledSet, StagePlan, TransferPlan};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "transfer_run".into());
    let corpus = generate_synthetic(&SyntheticSpec::words(4, 30, vec![CueRegion::Mouth], 3))?;
    let roi = RoISpec::new(RoIKind::MouthCentered { side: 20.0 }, (36, 36), FaceTemplate::new((36, 36)));
    let clips = corpus
        .clips
        .iter()
        .zip(&corpus.landmarks)
        .map(|(c, l)| preprocess_clip(c, l, &roi, Some(TemporalGaussian::default())).map(|p| p.clip))
        .collect::<Result<Vec<_>, _>>()?;
    let set = |s: Split| LabeledSet::from_labels(corpus.indices(s).iter().map(|&i| clips[i].clone()).collect(), &corpus.classes);
    let (train, test) = (set(Split::Train)?, set(Split::Test)?);
    let policy = AugmentPolicy { random_crop_to: Some((32, 32)), ..Default::default() };
    let config = WordModelConfig::compact(corpus.classes.len(), (32, 32));

    let mut source = WordModel::new(config.clone())?;
    let mut plan = StagePlan::stage_iii_only(12, false);
    plan.stages[0].lr_decay = None;
    plan.batch_size = 4;
    let history = train_word(&mut source, &train, None, &plan, &policy, 1, &mut EventLog::in_memory(), None)?;
    let stem = Path::new(&out).join("source");
    history.stages[0].best.save(&stem)?;
    println!("source test accuracy {:.3}", evaluate_word(&mut source, &test, &policy)?.1);

    let mut target = WordModel::new(WordModelConfig { seed: 9, ..config })?;
    let tp = TransferPlan { source: stem.clone(), freeze: true, fine_tune_epochs: 5 };
    let src = transfer_frontend(&mut target, &tp)?;
    fine_tune_word(&mut target, &train, None, &tp, 4, &policy, 2, &mut EventLog::in_memory())?;
    println!("fine-tuned test accuracy {:.3}", evaluate_word(&mut target, &test, &policy)?.1);

    let after = Checkpoint::capture(&mut target, "transfer", 5, Default::default());
    println!("frontend hash before {} after {}", src.meta.frontend_param_hash, after.meta.frontend_param_hash);
    assert_eq!(src.meta.frontend_param_hash, after.meta.frontend_param_hash);
    Ok(())
}
