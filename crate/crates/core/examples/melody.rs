//! Extracts the one-hot melody representation from a sequence of sine notes.

use chordweave::audio::AudioBuffer;
use chordweave::chord_syntax::PitchClass;
use chordweave::chroma_analysis::{compute_chromagram, melody_one_hot, ChromagramConfig};
use chordweave::synth::{midi_to_hz, sine};

const SR: u32 = 44100;

fn main() {
    let notes = [60.0, 62.0, 64.0, 65.0, 67.0];
    let mut samples = Vec::new();
    for n in notes {
        samples.extend(sine(midi_to_hz(n), 0.4, 0.5, SR).into_channels().remove(0));
    }
    samples.extend(vec![0.0; SR as usize / 2]);
    let audio = AudioBuffer::mono(SR, samples).unwrap();

    let gram = compute_chromagram(&audio, &ChromagramConfig::default()).unwrap();
    let melody = melody_one_hot(&gram, 0.01);
    let names: Vec<&str> = melody
        .frames()
        .iter()
        .map(|f| match f.active().first() {
            Some(&pc) => PitchClass::new(pc as u8).unwrap().name(),
            None => "-",
        })
        .collect();
    println!(
        "{} frames at {:.2} Hz",
        melody.len(),
        melody.frame_rate_hz()
    );
    println!("{}", names.join(" "));
}
