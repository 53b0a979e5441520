//! Trains a word model on aligned whole faces, then slides a grey-out patch
//! over the test clips and maps the accuracy drop per position.
//!
//!     cargo run --release --example occlusion_heatmap -- [epochs] [out_dir]

use facevsr::augment::AugmentPolicy;
use facevsr::data::{generate_synthetic, CueRegion, Split, SyntheticSpec};
use facevsr::diagnose::{occlusion_heatmap, DiagnosticsDir, OcclusionConfig};
use facevsr::geometry::{preprocess_clip, FaceTemplate, RoIKind, RoISpec, TemporalGaussian};
use facevsr::models::{WordModel, WordModelConfig};
use facevsr::train::{train_word, EventLog, LabeledSet, StagePlan};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs = std::env::args().nth(1).map_or(Ok(25), |s| s.parse())?;
    let out = std::env::args().nth(2).unwrap_or_else(|| "occlusion_run".into());

    let corpus = generate_synthetic(&SyntheticSpec::words(8, 40, vec![CueRegion::Mouth], 11))?;
    let roi = RoISpec::new(RoIKind::FaceAligned, (40, 40), FaceTemplate::new((40, 40)));
    let clips = corpus
        .clips
        .iter()
        .zip(&corpus.landmarks)
        .map(|(c, l)| preprocess_clip(c, l, &roi, Some(TemporalGaussian::default())).map(|p| p.clip))
        .collect::<Result<Vec<_>, _>>()?;
    let set = |s: Split| LabeledSet::from_labels(corpus.indices(s).iter().map(|&i| clips[i].clone()).collect(), &corpus.classes);
    let (train, test) = (set(Split::Train)?, set(Split::Test)?);

    let policy = AugmentPolicy { random_crop_to: Some((36, 36)), ..Default::default() };
    let mut model = WordModel::new(WordModelConfig::compact(corpus.classes.len(), (36, 36)))?;
    let mut plan = StagePlan::stage_iii_only(epochs, false);
    plan.stages[0].lr_decay = None;
    plan.batch_size = 4;
    plan.patience = None;
    train_word(&mut model, &train, None, &plan, &policy, 1, &mut EventLog::in_memory(), None)?;

    let views = test.clips.iter().map(|c| policy.eval(c)).collect::<Result<Vec<_>, _>>()?;
    let hm = occlusion_heatmap(&mut model, &views, &test.targets, &OcclusionConfig::default())?;
    println!("baseline accuracy {:.3} over {} clips", hm.baseline, hm.num_clips);
    for row in hm.grid.rows() {
        println!("  {}", row.iter().map(|v| format!("{v:6.3}")).collect::<Vec<_>>().join(" "));
    }
    let (r, c) = hm.argmax();
    println!("largest drop at cell ({r}, {c}), pixels from {:?}", hm.cell_origin(r, c));
    let path = DiagnosticsDir::for_run(std::path::Path::new(&out)).write_occlusion("test", &hm)?;
    println!("wrote {}", path.display());
    Ok(())
}
