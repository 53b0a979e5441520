//! Smooths the landmark track of one synthetic clip, registers every frame
//! to a face template and cuts the four regions of interest. Frames of each
//! crop are written as PNGs.
//!
//!     cargo run --release --example align_and_crop -- /tmp/crops

use std::path::Path;

use facevsr::data::{generate_synthetic, write_frames, CueRegion, SyntheticSpec};
use facevsr::geometry::{preprocess_clip, FaceTemplate, RoIKind, RoISpec, TemporalGaussian};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "crops".into());
    let mut spec = SyntheticSpec::words(2, 1, vec![CueRegion::Mouth], 3);
    spec.canvas = (96, 96);
    let corpus = generate_synthetic(&spec)?;
    let (clip, track) = (&corpus.clips[0], &corpus.landmarks[0]);
    println!("clip {:?}, {} landmarks per frame, yaw {:?}", clip.pixels.dim(), track.num_points(), clip.meta.as_ref().unwrap().yaw_deg);

    let tpl = FaceTemplate::new((64, 64));
    let rois = [
        ("mouth", RoISpec::new(RoIKind::MouthCentered { side: 28.0 }, (32, 32), tpl)),
        ("face", RoISpec::new(RoIKind::FaceAligned, (64, 64), tpl)),
        ("upper_face", RoISpec::new(RoIKind::UpperFace, (32, 64), tpl)),
        ("cheeks", RoISpec::word_cheeks().scaled_to(64)),
    ];
    for (name, roi) in rois {
        let p = preprocess_clip(clip, track, &roi, Some(TemporalGaussian::default()))?;
        let src = p.sources[0];
        println!(
            "{name:10} out {:?}  source {:.1}x{:.1} at ({:.1}, {:.1})  aligned {}",
            p.clip.frame_size(),
            src.h,
            src.w,
            src.y0,
            src.x0,
            p.transforms[0].map_or("no".to_string(), |t| format!("scale {:.3} rot {:.1} deg", t.scale, t.rotation.to_degrees()))
        );
        write_frames(&p.clip.pixels, &Path::new(&out).join(name))?;
    }
    println!("wrote {out}/<roi>/");
    Ok(())
}
