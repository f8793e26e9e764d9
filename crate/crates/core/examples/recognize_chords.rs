//! Synthesizes a I-vi-IV-V progression and recognizes it from audio.

use chordweave::audio::AudioBuffer;
use chordweave::chroma_analysis::{
    compute_chromagram, recognize_chords, ChromagramConfig, RecognitionConfig,
};
use chordweave::synth::{harmonic_chord, triad_notes};

const SR: u32 = 44100;

fn main() {
    // (root pitch class, minor)
    let progression = [(0, false), (9, true), (5, false), (7, false)];
    let mut samples = Vec::new();
    for (root, minor) in progression {
        samples.extend(harmonic_chord(
            &triad_notes(root, minor, 48.0),
            3,
            0.15,
            2.0,
            SR,
        ));
    }
    let audio = AudioBuffer::mono(SR, samples).unwrap();

    let gram = compute_chromagram(&audio, &ChromagramConfig::default()).unwrap();
    let cfg = RecognitionConfig::default();
    let seq = recognize_chords(gram.chroma(), &cfg.bank(), &cfg).unwrap();
    for e in seq.events() {
        println!("{:>6.2}-{:>6.2} s  {}", e.start_s, e.end_s(), e.chord);
    }
}
