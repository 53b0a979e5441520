//! CTC sentence model on a small three-slot grammar, decoded greedily and
//! by beam search with a character trigram LM fitted on the training text.
//!
//!     cargo run --release --example sentence_model -- [epochs]

use facevsr::data::{generate_synthetic, CueRegion, SentenceGrammar, Split, SyntheticSpec};
use facevsr::eval::{evaluate, BeamConfig, CharNGramLM, EvalConfig, Task};
use facevsr::geometry::{preprocess_clip, FaceTemplate, RoIKind, RoISpec, TemporalGaussian};
use facevsr::models::{SentenceModel, SentenceModelConfig};
use facevsr::train::{train_sentence, EventLog, SentenceRecognizer, SentenceTrainConfig, TranscribedSet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let epochs = std::env::args().nth(1).map_or(Ok(40), |s| s.parse())?;
    let mut spec = SyntheticSpec::words(4, 10, vec![CueRegion::Mouth], 5);
    spec.sentences = Some(SentenceGrammar::small());
    let corpus = generate_synthetic(&spec)?;
    let roi = RoISpec::new(RoIKind::MouthCentered { side: 20.0 }, (24, 24), FaceTemplate::new((36, 36)));
    let clips = corpus
        .clips
        .iter()
        .zip(&corpus.landmarks)
        .map(|(c, l)| preprocess_clip(c, l, &roi, Some(TemporalGaussian::default())).map(|p| p.clip))
        .collect::<Result<Vec<_>, _>>()?;
    let split = |s: Split| corpus.indices(s).iter().map(|&i| clips[i].clone()).collect::<Vec<_>>();
    let train = TranscribedSet::from_meta(split(Split::Train))?;
    let test = split(Split::Test);

    let alphabet = SentenceModelConfig::default_alphabet();
    let mut model = SentenceModel::new(SentenceModelConfig::compact(alphabet.clone(), (24, 24)))?;
    let cfg = SentenceTrainConfig { lr: 2e-3, epochs, batch_size: 2, hflip_prob: 0.0, temporal_jitter_prob: 0.0, ..Default::default() };
    train_sentence(&mut model, &train, None, &cfg, 1, &mut EventLog::in_memory(), None)?;

    let texts: Vec<&str> = train.transcripts.iter().map(String::as_str).collect();
    let lm = CharNGramLM::fit(&texts, &alphabet, 3, 0.1);
    let eval_cfg = EvalConfig::default();
    let greedy = evaluate(&mut SentenceRecognizer { model: &mut model, beam: None, lm: None }, &test, Task::Sentence, &[], &eval_cfg)?;
    let beam = BeamConfig { beam_width: 8, alpha: 0.5, beta: 1.0 };
    let with_lm = evaluate(&mut SentenceRecognizer { model: &mut model, beam: Some(beam), lm: Some(&lm) }, &test, Task::Sentence, &[], &eval_cfg)?;
    println!("test WER greedy {:.3}, beam + LM {:.3}", greedy.wer, with_lm.wer);
    Ok(())
}
