//! Prepares the conditioning bundle for a synthetic song and writes the
//! generation request without contacting a backend.
//!
//! ```text
//! cargo run --example remix_dry_run -- /tmp/request.json
//! ```

use std::path::PathBuf;

use chordweave::audio::AudioBuffer;
use chordweave::remix::{
    prepare_conditioning, request_generation, GenerationMode, GenerationRequest, PipelineConfig,
    StemSet,
};
use chordweave::synth::{harmonic_chord, mix, triad_notes, ClickTrack};

const SR: u32 = 44100;

fn main() {
    let drums = ClickTrack {
        bpm: 120.0,
        duration_s: 8.0,
        accent_every: Some(4),
        ..Default::default()
    }
    .render(SR);
    let mut keys = harmonic_chord(&triad_notes(0, false, 60.0), 3, 0.1, 4.0, SR);
    keys.extend(harmonic_chord(
        &triad_notes(7, false, 48.0),
        3,
        0.1,
        4.0,
        SR,
    ));
    let song = AudioBuffer::mono(SR, mix(&drums, &keys)).unwrap();

    let bundle = prepare_conditioning(
        &StemSet::new(song, None),
        "lofi hip hop",
        &PipelineConfig::default(),
    )
    .unwrap();
    println!("tempo {:.2} BPM", bundle.beat_grid.bpm());
    for e in bundle.chords.events() {
        println!("{:>6.2} s  {}", e.start_s, e.chord);
    }

    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("chordweave-request.json"));
    let req = GenerationRequest::from_bundle(&bundle);
    request_generation(&req, &GenerationMode::DryRun { path: path.clone() }).unwrap();
    println!(
        "wrote {} ({} chroma frames)",
        path.display(),
        req.chroma.len()
    );
}
