//! Renders a small synthetic talking-face corpus and writes it to disk.
//!
//!     cargo run --example synth_corpus -- /tmp/faces

use facevsr::data::{generate_synthetic, load_manifest, CueRegion, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synth_corpus".into());
    let mut spec = SyntheticSpec::words(4, 10, vec![CueRegion::Mouth, CueRegion::Cheeks], 7);
    spec.redundancy = true;
    let corpus = generate_synthetic(&spec)?;
    let manifest_path = corpus.write(std::path::Path::new(&out))?;

    let manifest = load_manifest(&manifest_path)?;
    println!("{} clips, classes {:?}", manifest.entries.len(), manifest.vocabulary());
    for split in facevsr::data::Split::ALL {
        println!("  {:5} {}", split.as_str(), manifest.split(split).count());
    }
    println!("wrote {}", manifest_path.display());
    Ok(())
}
