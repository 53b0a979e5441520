//! Guided-backprop saliency and stem feature maps of a briefly trained
//! mouth-region word model.
//!
//!     cargo run --release --example saliency -- [epochs] [out_dir]

use facevsr::augment::AugmentPolicy;
use facevsr::data::{generate_synthetic, CueRegion, Split, SyntheticSpec};
use facevsr::diagnose::{feature_maps, guided_backprop_saliency, DiagnosticsDir, SaliencyTarget};
use facevsr::geometry::{preprocess_clip, FaceTemplate, RoIKind, RoISpec, TemporalGaussian};
use facevsr::models::{LayerId, WordModel, WordModelConfig};
use facevsr::train::{train_word, EventLog, LabeledSet, StagePlan};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs = std::env::args().nth(1).map_or(Ok(10), |s| s.parse())?;
    let out = std::env::args().nth(2).unwrap_or_else(|| "saliency_run".into());

    let corpus = generate_synthetic(&SyntheticSpec::words(4, 20, vec![CueRegion::Mouth], 5))?;
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
    let mut model = WordModel::new(WordModelConfig::compact(corpus.classes.len(), (32, 32)))?;
    let mut plan = StagePlan::stage_iii_only(epochs, false);
    plan.batch_size = 4;
    train_word(&mut model, &train, None, &plan, &policy, 1, &mut EventLog::in_memory(), None)?;

    let diag = DiagnosticsDir::for_run(std::path::Path::new(&out));
    let clip = policy.eval(&test.clips[0])?;
    let sal = guided_backprop_saliency(&mut model, &clip, &SaliencyTarget::Class(test.targets[0]))?;
    let peak = sal.values.iter().cloned().fold(0.0, f64::max);
    println!("saliency {:?} for class {:?}, peak {peak:.4}, untrained {}", sal.values.dim(), sal.target, sal.untrained_warning);
    println!("wrote {}", diag.write_saliency(&sal, &clip)?.display());

    let fm = feature_maps(&mut model, &clip, LayerId::Stem)?;
    println!("wrote {}", diag.write_feature_maps(&fm)?.display());
    Ok(())
}
