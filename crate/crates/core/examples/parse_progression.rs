//! Parses a chord progression and prints its timed events.
//!
//! ```text
//! cargo run --example parse_progression -- "C:maj A:min F:maj G:7" 96
//! ```

use chordweave::chord_syntax::{parse_progression, TimeSignature};

fn main() {
    let mut args = std::env::args().skip(1);
    let text = args
        .next()
        .unwrap_or_else(|| "G:maj7 D:min7,G:7 C:maj7 F:7 B:min7,Bb:7 A:min7,D:7".to_string());
    let bpm: f64 = args
        .next()
        .map_or(120.0, |b| b.parse().expect("bpm must be a number"));

    let seq = match parse_progression(&text, bpm, TimeSignature::default()) {
        Ok(seq) => seq,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    };
    for e in seq.events() {
        println!("{:>7.3} s  {:>6.3} s  {}", e.start_s, e.duration_s, e.chord);
    }
    println!("total {:.3} s at {} BPM", seq.total_duration_s(), seq.bpm());
    print!("{}", seq.to_json().unwrap());
}
