//! Scoring: edit operations, WER / CER, and a word-level report with
//! per-class scores, confusions and yaw buckets.
//!
//!     cargo run --release --example wer_report

use facevsr::eval::{cer, edit_ops, report, words, wer, EvalConfig, Outcome, PoseBuckets, Task};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (r, h) = ("lay white in u four now", "lay white at o four now");
    let ops = edit_ops(&words(r), &words(h));
    println!("{r:?} vs {h:?}: S={} D={} I={}  WER {:.4}  CER {:.4}", ops.s, ops.d, ops.i, wer(r, h)?, cer(r, h)?);

    let classes: Vec<String> = ["about", "after", "again"].iter().map(|s| s.to_string()).collect();
    let rows = [
        ("about", "about", 5.0),
        ("about", "after", 31.0),
        ("after", "after", 12.0),
        ("after", "after", 48.0),
        ("again", "about", 65.0),
        ("again", "again", 22.0),
    ];
    let outcomes: Vec<Outcome> = rows
        .iter()
        .enumerate()
        .map(|(i, (t, p, yaw))| Outcome { clip_id: format!("c{i}"), target: t.to_string(), predicted: p.to_string(), yaw_deg: Some(*yaw) })
        .collect();
    let cfg = EvalConfig { top_k: 2, pose: Some(PoseBuckets::default()) };
    let rep = report(Task::Word, &outcomes, &classes, &cfg)?;
    println!("{}", rep.to_json());
    print!("{}", rep.confusion_csv());
    Ok(())
}
