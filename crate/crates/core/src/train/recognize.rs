use super::sentence::greedy_transcript;
use super::word::argmax_rows;
use crate::augment::AugmentPolicy;
use crate::data::{clips_to_batch, VideoClip};
use crate::eval::{ctc_beam_search, BeamConfig, CharNGramLM, Recognizer};
use crate::models::{SentenceModel, WordModel};
use crate::nn::Ctx;

/// Word classifier over the evaluation view of each clip.
pub struct WordRecognizer<'a> {
    pub model: &'a mut WordModel,
    pub policy: &'a AugmentPolicy,
    pub classes: &'a [String],
}

impl Recognizer for WordRecognizer<'_> {
    fn recognize(&mut self, clip: &VideoClip) -> Result<String, String> {
        let view = self.policy.eval(clip).map_err(|e| e.to_string())?;
        let x = clips_to_batch(&[&view]).expect("single clip");
        let logits = self.model.logits(&x, Ctx::eval()).map_err(|e| e.to_string())?;
        let k = argmax_rows(&logits)[0];
        self.classes.get(k).cloned().ok_or_else(|| format!("class index {k} outside the class list"))
    }
}

/// Sentence decoder: greedy, or beam search with an optional LM.
pub struct SentenceRecognizer<'a> {
    pub model: &'a mut SentenceModel,
    pub beam: Option<BeamConfig>,
    pub lm: Option<&'a CharNGramLM>,
}

impl Recognizer for SentenceRecognizer<'_> {
    fn recognize(&mut self, clip: &VideoClip) -> Result<String, String> {
        let Some(cfg) = &self.beam else {
            return greedy_transcript(self.model, clip).map_err(|e| e.to_string());
        };
        let x = clips_to_batch(&[clip]).expect("single clip");
        let probs = self.model.forward(&x, Ctx::eval()).map_err(|e| e.to_string())?;
        let alphabet = self.model.config().alphabet.clone();
        let r = ctc_beam_search(probs.index_axis(ndarray::Axis(0), 0), cfg, self.lm, &alphabet);
        Ok(r.hypothesis)
    }
}
