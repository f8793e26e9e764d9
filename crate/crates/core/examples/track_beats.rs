//! Tempo, beats and downbeats of an accented click track.
//!
//! Pass a WAV path to analyze a file instead.

use chordweave::audio::read_wav;
use chordweave::beat::{analyze_beats, BeatConfig};
use chordweave::synth::ClickTrack;

fn main() {
    let audio = match std::env::args().nth(1) {
        Some(path) => read_wav(&path).unwrap_or_else(|e| {
            eprintln!("{e}");
            std::process::exit(2);
        }),
        None => ClickTrack {
            bpm: 104.0,
            duration_s: 12.0,
            offset_s: 0.3,
            accent_every: Some(4),
            ..Default::default()
        }
        .to_buffer(44100),
    };

    let grid = analyze_beats(&audio, &BeatConfig::default()).unwrap();
    println!("tempo {:.2} BPM", grid.bpm());
    let first: Vec<String> = grid
        .beats_s()
        .iter()
        .take(8)
        .map(|t| format!("{t:.3}"))
        .collect();
    println!("beats {} ...", first.join(" "));
    let downbeats: Vec<String> = grid
        .downbeats_s()
        .iter()
        .map(|t| format!("{t:.3}"))
        .collect();
    println!("downbeats {}", downbeats.join(" "));
}
