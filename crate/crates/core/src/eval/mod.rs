//! Error rates, CTC decoding, the character LM and evaluation reports.

pub mod ctc;
pub mod lm;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use ctc::{ctc_beam_search, ctc_greedy, BeamConfig, DecodeResult, Hypothesis};
pub use lm::CharNGramLM;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("reference is empty")]
    EmptyReference,
    #[error("pose buckets requested but clip {0} has no yaw")]
    MissingYaw(String),
    #[error("no samples to evaluate")]
    NoSamples,
    #[error("recognizer failed on {clip}: {reason}")]
    Recognizer { clip: String, reason: String },
}

/// Substitution, deletion and insertion counts of a minimal alignment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditOps {
    pub s: usize,
    pub d: usize,
    pub i: usize,
}

impl EditOps {
    pub fn total(&self) -> usize {
        self.s + self.d + self.i
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AlignOp<T> {
    Match(T),
    Sub { reference: T, hypothesis: T },
    Del(T),
    Ins(T),
}

/// Minimal-cost alignment. Among minimal alignments, the one with the fewest
/// insertions plus deletions is chosen, so a substitution is preferred over
/// an insert/delete pair.
pub fn align<T: PartialEq + Clone>(reference: &[T], hypothesis: &[T]) -> Vec<AlignOp<T>> {
    let (n, m) = (reference.len(), hypothesis.len());
    // cost[i][j] = (edits, indels) aligning reference[..i] with hypothesis[..j]
    let mut cost = vec![vec![(0usize, 0usize); m + 1]; n + 1];
    for (i, row) in cost.iter_mut().enumerate() {
        row[0] = (i, i);
    }
    for j in 0..=m {
        cost[0][j] = (j, j);
    }
    for i in 1..=n {
        for j in 1..=m {
            let same = reference[i - 1] == hypothesis[j - 1];
            let diag = (cost[i - 1][j - 1].0 + usize::from(!same), cost[i - 1][j - 1].1);
            let del = (cost[i - 1][j].0 + 1, cost[i - 1][j].1 + 1);
            let ins = (cost[i][j - 1].0 + 1, cost[i][j - 1].1 + 1);
            cost[i][j] = diag.min(del).min(ins);
        }
    }
    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            let diag = (cost[i - 1][j - 1].0 + usize::from(!same), cost[i - 1][j - 1].1);
            if diag == cost[i][j] {
                ops.push(if same {
                    AlignOp::Match(reference[i - 1].clone())
                } else {
                    AlignOp::Sub { reference: reference[i - 1].clone(), hypothesis: hypothesis[j - 1].clone() }
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && (cost[i - 1][j].0 + 1, cost[i - 1][j].1 + 1) == cost[i][j] {
            ops.push(AlignOp::Del(reference[i - 1].clone()));
            i -= 1;
        } else {
            ops.push(AlignOp::Ins(hypothesis[j - 1].clone()));
            j -= 1;
        }
    }
    ops.reverse();
    ops
}

pub fn edit_ops<T: PartialEq + Clone>(reference: &[T], hypothesis: &[T]) -> EditOps {
    let mut e = EditOps::default();
    for op in align(reference, hypothesis) {
        match op {
            AlignOp::Match(_) => {}
            AlignOp::Sub { .. } => e.s += 1,
            AlignOp::Del(_) => e.d += 1,
            AlignOp::Ins(_) => e.i += 1,
        }
    }
    e
}

pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// `(S + D + I, N)` over whitespace-separated words, for corpus-level sums.
pub fn wer_counts(reference: &str, hypothesis: &str) -> (usize, usize) {
    let r = words(reference);
    (edit_ops(&r, &words(hypothesis)).total(), r.len())
}

/// `(S + D + I) / N` over whitespace-separated words.
pub fn wer(reference: &str, hypothesis: &str) -> Result<f64, EvalError> {
    let r = words(reference);
    if r.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    Ok(edit_ops(&r, &words(hypothesis)).total() as f64 / r.len() as f64)
}

/// Character error rate.
pub fn cer(reference: &str, hypothesis: &str) -> Result<f64, EvalError> {
    let r: Vec<char> = reference.chars().collect();
    if r.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let h: Vec<char> = hypothesis.chars().collect();
    Ok(edit_ops(&r, &h).total() as f64 / r.len() as f64)
}

/// Yaw buckets. `thresholds = [20, 40, 60]` gives the disjoint bins
/// `[0,20) [20,40) [40,60) [60,inf)` on `|yaw|` and the nested sets
/// `>= 20`, `>= 40`, `>= 60`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseBuckets {
    pub thresholds: Vec<f64>,
    /// Names of the nested sets, one per threshold.
    pub nested_names: Vec<String>,
}

impl Default for PoseBuckets {
    fn default() -> Self {
        Self { thresholds: vec![20.0, 40.0, 60.0], nested_names: vec!["easy".into(), "medium".into(), "hard".into()] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketScore {
    pub name: String,
    pub lo_deg: f64,
    /// `None` means unbounded.
    pub hi_deg: Option<f64>,
    pub count: usize,
    /// Accuracy (word task) or WER (sentence task); `None` for empty buckets.
    pub metric: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseReport {
    pub thresholds: Vec<f64>,
    /// Disjoint bins covering every clip.
    pub partition: Vec<BucketScore>,
    /// `|yaw| >= threshold` sets, plus `all`.
    pub nested: Vec<BucketScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub label: String,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub target: String,
    pub predicted: String,
    pub count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Word,
    Sentence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub num_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    pub wer: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cer: Option<f64>,
    pub per_class: Vec<ClassScore>,
    pub best: Vec<String>,
    pub worst: Vec<String>,
    /// Word task: label confusions. Sentence task: word substitutions.
    pub confusions: Vec<Confusion>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pose: Option<PoseReport>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("target,predicted,count\n");
        for c in &self.confusions {
            out.push_str(&format!("{},{},{}\n", csv_field(&c.target), csv_field(&c.predicted), c.count));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Length of the best / worst lists.
    pub top_k: usize,
    #[serde(default)]
    pub pose: Option<PoseBuckets>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { top_k: 5, pose: None }
    }
}

/// One scored test item.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub clip_id: String,
    pub target: String,
    pub predicted: String,
    pub yaw_deg: Option<f64>,
}

fn sample_errors(task: Task, o: &Outcome) -> Result<(usize, usize), EvalError> {
    match task {
        Task::Word => Ok((usize::from(o.target != o.predicted), 1)),
        Task::Sentence => {
            let r = words(&o.target);
            if r.is_empty() {
                return Err(EvalError::EmptyReference);
            }
            Ok((edit_ops(&r, &words(&o.predicted)).total(), r.len()))
        }
    }
}

fn bucket_metric(task: Task, items: &[&Outcome]) -> Result<Option<f64>, EvalError> {
    if items.is_empty() {
        return Ok(None);
    }
    let (mut err, mut n) = (0, 0);
    for o in items {
        let (e, m) = sample_errors(task, o)?;
        err += e;
        n += m;
    }
    let rate = err as f64 / n as f64;
    Ok(Some(if task == Task::Word { 1.0 - rate } else { rate }))
}

fn pose_report(task: Task, outcomes: &[Outcome], buckets: &PoseBuckets) -> Result<PoseReport, EvalError> {
    let mut yaws = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        yaws.push(o.yaw_deg.ok_or_else(|| EvalError::MissingYaw(o.clip_id.clone()))?.abs());
    }
    let mut th = buckets.thresholds.clone();
    th.sort_by(f64::total_cmp);
    let mut edges = vec![0.0];
    edges.extend(th.iter().copied());
    let mut partition = Vec::new();
    for b in 0..edges.len() {
        let lo = edges[b];
        let hi = edges.get(b + 1).copied();
        let items: Vec<&Outcome> = outcomes
            .iter()
            .zip(&yaws)
            .filter(|(_, &y)| y >= lo && hi.map_or(true, |h| y < h))
            .map(|(o, _)| o)
            .collect();
        let name = match hi {
            Some(h) => format!("[{lo},{h})"),
            None => format!("[{lo},inf)"),
        };
        partition.push(BucketScore { name, lo_deg: lo, hi_deg: hi, count: items.len(), metric: bucket_metric(task, &items)? });
    }
    let mut nested = Vec::new();
    for (i, &lo) in th.iter().enumerate() {
        let items: Vec<&Outcome> = outcomes.iter().zip(&yaws).filter(|(_, &y)| y >= lo).map(|(o, _)| o).collect();
        let name = buckets.nested_names.get(i).cloned().unwrap_or_else(|| format!(">={lo}"));
        nested.push(BucketScore { name, lo_deg: lo, hi_deg: None, count: items.len(), metric: bucket_metric(task, &items)? });
    }
    let all: Vec<&Outcome> = outcomes.iter().collect();
    nested.push(BucketScore { name: "all".into(), lo_deg: 0.0, hi_deg: None, count: all.len(), metric: bucket_metric(task, &all)? });
    Ok(PoseReport { thresholds: th, partition, nested })
}

/// Builds the report for scored outcomes. For the word task `classes` fixes
/// the per-class table (classes without test items are omitted).
pub fn report(task: Task, outcomes: &[Outcome], classes: &[String], cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::NoSamples);
    }
    let mut errors = 0;
    let mut ref_len = 0;
    let mut char_err = 0;
    let mut char_len = 0;
    let mut confusion: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut per_class: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for o in outcomes {
        let (e, n) = sample_errors(task, o)?;
        errors += e;
        ref_len += n;
        match task {
            Task::Word => {
                let slot = per_class.entry(o.target.clone()).or_default();
                slot.1 += 1;
                if o.target == o.predicted {
                    slot.0 += 1;
                } else {
                    *confusion.entry((o.target.clone(), o.predicted.clone())).or_default() += 1;
                }
            }
            Task::Sentence => {
                let r: Vec<char> = o.target.chars().collect();
                let h: Vec<char> = o.predicted.chars().collect();
                char_err += edit_ops(&r, &h).total();
                char_len += r.len();
                for op in align(&words(&o.target), &words(&o.predicted)) {
                    match op {
                        AlignOp::Match(w) => {
                            let slot = per_class.entry(w.to_string()).or_default();
                            slot.0 += 1;
                            slot.1 += 1;
                        }
                        AlignOp::Sub { reference, hypothesis } => {
                            per_class.entry(reference.to_string()).or_default().1 += 1;
                            *confusion.entry((reference.to_string(), hypothesis.to_string())).or_default() += 1;
                        }
                        AlignOp::Del(w) => per_class.entry(w.to_string()).or_default().1 += 1,
                        AlignOp::Ins(_) => {}
                    }
                }
            }
        }
    }
    let order: Vec<String> = if task == Task::Word && !classes.is_empty() {
        classes.iter().filter(|c| per_class.contains_key(*c)).cloned().collect()
    } else {
        per_class.keys().cloned().collect()
    };
    let per_class: Vec<ClassScore> = order
        .into_iter()
        .map(|label| {
            let (correct, total) = per_class[&label];
            ClassScore { accuracy: correct as f64 / total as f64, label, correct, total }
        })
        .collect();
    let mut ranked: Vec<&ClassScore> = per_class.iter().collect();
    ranked.sort_by(|a, b| b.accuracy.total_cmp(&a.accuracy).then_with(|| a.label.cmp(&b.label)));
    let best = ranked.iter().take(cfg.top_k).map(|c| c.label.clone()).collect();
    let worst = ranked.iter().rev().take(cfg.top_k).map(|c| c.label.clone()).collect();
    let mut confusions: Vec<Confusion> =
        confusion.into_iter().map(|((target, predicted), count)| Confusion { target, predicted, count }).collect();
    confusions.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| (&a.target, &a.predicted).cmp(&(&b.target, &b.predicted))));
    let wer = errors as f64 / ref_len as f64;
    let pose = cfg.pose.as_ref().map(|b| pose_report(task, outcomes, b)).transpose()?;
    Ok(EvalReport {
        task,
        num_samples: outcomes.len(),
        accuracy: (task == Task::Word).then(|| 1.0 - wer),
        wer,
        cer: (task == Task::Sentence).then(|| char_err as f64 / char_len.max(1) as f64),
        per_class,
        best,
        worst,
        confusions,
        pose,
    })
}

/// Produces a prediction string for one clip.
pub trait Recognizer {
    fn recognize(&mut self, clip: &crate::data::VideoClip) -> Result<String, String>;
}

/// Runs `recognizer` over `clips` in order and scores the results against
/// their manifest targets.
pub fn evaluate(
    recognizer: &mut dyn Recognizer,
    clips: &[crate::data::VideoClip],
    task: Task,
    classes: &[String],
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    let mut outcomes = Vec::with_capacity(clips.len());
    for (i, clip) in clips.iter().enumerate() {
        let meta = clip.meta.as_ref();
        let clip_id = meta.map_or_else(|| format!("#{i}"), |m| m.clip_id.clone());
        let predicted = recognizer.recognize(clip).map_err(|reason| EvalError::Recognizer { clip: clip_id.clone(), reason })?;
        outcomes.push(Outcome {
            target: meta.map(|m| m.target().to_string()).unwrap_or_default(),
            yaw_deg: meta.and_then(|m| m.yaw_deg),
            clip_id,
            predicted,
        });
    }
    report(task, &outcomes, classes, cfg)
}
