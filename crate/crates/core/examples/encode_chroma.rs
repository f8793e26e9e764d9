//! Renders a progression into a multi-hot chroma matrix and prints it as CSV.

use chordweave::chord_syntax::{parse_progression, TimeSignature};
use chordweave::chroma::{chord_to_chroma, render_matrix, DEFAULT_FRAME_RATE_HZ};

fn main() {
    let seq = parse_progression("Eb:maj G:maj C:min", 120.0, TimeSignature::default()).unwrap();
    for e in seq.events() {
        println!(
            "{:<8} active bins {:?}",
            e.chord.to_string(),
            chord_to_chroma(&e.chord).active()
        );
    }

    let m = render_matrix(&seq, DEFAULT_FRAME_RATE_HZ, None).unwrap();
    println!(
        "{} frames at {} Hz ({} s)",
        m.len(),
        m.frame_rate_hz(),
        m.duration_s()
    );
    // One frame per half second is enough to see the changes.
    let csv = m.to_csv();
    let mut lines = csv.lines();
    println!("{}", lines.next().unwrap());
    for line in lines.step_by(25) {
        println!("{line}");
    }
}
