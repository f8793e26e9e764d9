//! Deterministic test signals: sines, harmonic chords and click tracks.

use std::f64::consts::PI;

use crate::audio::AudioBuffer;

pub fn midi_to_hz(note: f64) -> f64 {
    440.0 * 2f64.powf((note - 69.0) / 12.0)
}

fn samples_for(duration_s: f64, sample_rate_hz: u32) -> usize {
    (duration_s * sample_rate_hz as f64).round() as usize
}

/// Mono sine starting at phase zero.
pub fn sine(freq_hz: f64, amplitude: f64, duration_s: f64, sample_rate_hz: u32) -> AudioBuffer {
    let n = samples_for(duration_s, sample_rate_hz);
    let w = 2.0 * PI * freq_hz / sample_rate_hz as f64;
    let samples = (0..n)
        .map(|i| (amplitude * (w * i as f64).sin()) as f32)
        .collect();
    AudioBuffer::mono(sample_rate_hz, samples).expect("sample rate is positive")
}

/// Sum of harmonic tones, one per MIDI note. Harmonic `h` (1-based) has
/// relative amplitude `0.5^(h-1)`; every note has fundamental amplitude
/// `amplitude`.
pub fn harmonic_chord(
    notes: &[f64],
    harmonics: usize,
    amplitude: f64,
    duration_s: f64,
    sample_rate_hz: u32,
) -> Vec<f32> {
    let n = samples_for(duration_s, sample_rate_hz);
    let sr = sample_rate_hz as f64;
    let partials: Vec<(f64, f64)> = notes
        .iter()
        .flat_map(|&note| {
            let f0 = midi_to_hz(note);
            (1..=harmonics).map(move |h| {
                (
                    2.0 * PI * f0 * h as f64 / sr,
                    amplitude * 0.5f64.powi(h as i32 - 1),
                )
            })
        })
        .filter(|(w, _)| *w < PI)
        .collect();
    (0..n)
        .map(|i| {
            partials
                .iter()
                .map(|(w, a)| a * (w * i as f64).sin())
                .sum::<f64>() as f32
        })
        .collect()
}

/// MIDI notes of a root-position triad in the octave starting at `base`.
pub fn triad_notes(root_pc: u8, minor: bool, base: f64) -> [f64; 3] {
    let r = base + root_pc as f64;
    [r, r + if minor { 3.0 } else { 4.0 }, r + 7.0]
}

/// Click track description.
#[derive(Debug, Clone, Copy)]
pub struct ClickTrack {
    pub bpm: f64,
    pub duration_s: f64,
    pub offset_s: f64,
    pub amplitude: f64,
    /// Every `accent_every`-th click (starting with the first) is multiplied
    /// by `accent_gain`.
    pub accent_every: Option<usize>,
    pub accent_gain: f64,
}

impl Default for ClickTrack {
    fn default() -> Self {
        ClickTrack {
            bpm: 120.0,
            duration_s: 10.0,
            offset_s: 0.0,
            amplitude: 0.4,
            accent_every: None,
            accent_gain: 2.0,
        }
    }
}

/// Length of a single click in samples.
pub const CLICK_LEN: usize = 32;

impl ClickTrack {
    pub fn click_times(&self) -> Vec<f64> {
        let period = 60.0 / self.bpm;
        (0..)
            .map(|k| self.offset_s + k as f64 * period)
            .take_while(|&t| t < self.duration_s)
            .collect()
    }

    /// Click times of the accented clicks.
    pub fn accent_times(&self) -> Vec<f64> {
        let every = self.accent_every.unwrap_or(1);
        self.click_times().into_iter().step_by(every).collect()
    }

    /// Renders the clicks as short decaying bursts.
    pub fn render(&self, sample_rate_hz: u32) -> Vec<f32> {
        let n = samples_for(self.duration_s, sample_rate_hz);
        let mut out = vec![0.0f32; n];
        for (k, t) in self.click_times().into_iter().enumerate() {
            let gain = match self.accent_every {
                Some(every) if k % every == 0 => self.accent_gain,
                _ => 1.0,
            };
            let start = (t * sample_rate_hz as f64).round() as usize;
            for j in 0..CLICK_LEN {
                if let Some(s) = out.get_mut(start + j) {
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    *s += (self.amplitude * gain * sign * (-(j as f64) / 6.0).exp()) as f32;
                }
            }
        }
        out
    }

    pub fn to_buffer(&self, sample_rate_hz: u32) -> AudioBuffer {
        AudioBuffer::mono(sample_rate_hz, self.render(sample_rate_hz))
            .expect("sample rate is positive")
    }
}

/// Element-wise sum; the result has the length of the longer input.
pub fn mix(a: &[f32], b: &[f32]) -> Vec<f32> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| a.get(i).copied().unwrap_or(0.0) + b.get(i).copied().unwrap_or(0.0))
        .collect()
}
