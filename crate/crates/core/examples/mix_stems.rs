//! Warps a "generated" click track at a different tempo onto the input's
//! downbeats and mixes it with a vocal stem.

use chordweave::beat::analyze_beats;
use chordweave::beat::BeatConfig;
use chordweave::remix::{analyze_generated, finalize_remix, MixConfig, PipelineConfig, StemSet};
use chordweave::synth::{sine, ClickTrack};

const SR: u32 = 44100;

fn main() {
    let clicks = |bpm, duration_s| ClickTrack {
        bpm,
        duration_s,
        accent_every: Some(4),
        ..Default::default()
    };
    let input = clicks(110.0, 11.0).to_buffer(SR);
    let vocals = sine(392.0, 0.8, 11.0, SR);
    let generated = clicks(120.0, 10.0).to_buffer(SR);

    let input_grid = analyze_beats(&input, &BeatConfig::default()).unwrap();
    let generated_grid = analyze_generated(&generated, 120.0, &PipelineConfig::default()).unwrap();
    println!(
        "input {:.2} BPM, generated {:.2} BPM",
        input_grid.bpm(),
        generated_grid.bpm()
    );

    let stems = StemSet::new(input, Some(vocals));
    let out = finalize_remix(
        &generated,
        &stems,
        &generated_grid,
        &input_grid,
        &MixConfig::default(),
    )
    .unwrap();
    println!(
        "mix {:.3} s, peak {:.4} (ceiling {:.4})",
        out.duration_s(),
        out.peak(),
        10f64.powf(-1.0 / 20.0)
    );
}
