//! WSOLA stretching and downbeat-anchored alignment.

use chordweave::audio::{stft, AudioBuffer};
use chordweave::synth::{mix, sine, ClickTrack};
use chordweave::time_warp::{align_to_anchors, wsola_stretch, AnchorMap, WsolaConfig};

const SR: u32 = 44100;

fn peak_bin(buf: &AudioBuffer) -> usize {
    let spec = stft(buf, 4096, 2048).unwrap();
    let mid = &spec.magnitudes()[spec.num_frames() / 2];
    (0..mid.len()).fold(0, |b, i| if mid[i] > mid[b] { i } else { b })
}

fn main() {
    let cfg = WsolaConfig::default();
    let tone = sine(440.0, 0.5, 2.0, SR);
    for ratio in [0.5, 1.0, 1.5, 2.0] {
        let out = wsola_stretch(&tone, ratio, &cfg).unwrap();
        println!(
            "ratio {ratio}: {:.3} s, peak bin {} (input {})",
            out.duration_s(),
            peak_bin(&out),
            peak_bin(&tone)
        );
    }

    // Clicks every 2 s moved onto a 2.2 s grid.
    let clicks = ClickTrack {
        bpm: 30.0,
        duration_s: 8.0,
        ..Default::default()
    };
    let x = AudioBuffer::mono(
        SR,
        mix(&clicks.render(SR), sine(220.0, 0.05, 8.0, SR).channel(0)),
    )
    .unwrap();
    let anchors = AnchorMap::new(vec![
        (0.0, 0.0),
        (2.0, 2.2),
        (4.0, 4.4),
        (6.0, 6.6),
        (8.0, 8.8),
    ])
    .unwrap();
    let y = align_to_anchors(&x, &anchors, &cfg).unwrap();
    println!("aligned {:.3} s -> {:.3} s", x.duration_s(), y.duration_s());
    let ch = y.channel(0);
    for target in [2.2, 4.4, 6.6] {
        let lo = ((target - 0.05) * SR as f64) as usize;
        let hi = ((target + 0.05) * SR as f64) as usize;
        let at = (lo..hi).fold(lo, |b, i| if ch[i].abs() > ch[b].abs() { i } else { b });
        println!(
            "click expected at {target:.3} s, found at {:.3} s",
            at as f64 / SR as f64
        );
    }
}
