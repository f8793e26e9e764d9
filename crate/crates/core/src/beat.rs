//! Tempo, beat and downbeat estimation on a fixed-tempo grid.
//!
//! Onset strength is spectral flux. Tempo is the autocorrelation peak of the
//! mean-removed envelope, refined by a line fit through the tracked onsets;
//! beats are the phase of a rigid grid that collects the most onset energy,
//! and downbeats the grid offset whose bar lines do.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{self, AudioBuffer, AudioError};
use crate::format::{self, FormatError};

pub const BEAT_GRID_FORMAT: &str = "beat-grid/v1";

/// Minimum envelope length for tempo estimation.
pub const MIN_TEMPO_WINDOW_S: f64 = 4.0;

/// Preferred tempo band for resolving octave ambiguity.
const PREFERRED_BPM: (f64, f64) = (90.0, 180.0);
/// Octave candidates within this fraction of the autocorrelation peak compete.
const OCTAVE_TOLERANCE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum BeatError {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("need at least {needed_s:.2} s of audio, got {got_s:.2} s")]
    TooShort { needed_s: f64, got_s: f64 },
    #[error("invalid tempo range {min_bpm}..{max_bpm}")]
    InvalidRange { min_bpm: f64, max_bpm: f64 },
    #[error("no periodicity found in the onset envelope")]
    NoTempo,
    #[error("tempo must be positive and finite, got {0}")]
    InvalidTempo(f64),
    #[error("beats per bar must be at least 1")]
    InvalidMeter,
    #[error("invalid beat grid: {0}")]
    InvalidGrid(String),
}

/// Spectral-flux onset strength. Frame `j` describes the analysis window
/// centered at `time_offset_s + j / frame_rate_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct OnsetEnvelope {
    frame_rate_hz: f64,
    time_offset_s: f64,
    duration_s: f64,
    values: Vec<f64>,
}

impl OnsetEnvelope {
    /// Builds an envelope from raw values, e.g. for testing grid fitting.
    pub fn new(
        frame_rate_hz: f64,
        time_offset_s: f64,
        duration_s: f64,
        values: Vec<f64>,
    ) -> Result<Self, BeatError> {
        if !(frame_rate_hz.is_finite() && frame_rate_hz > 0.0)
            || values.iter().any(|v| !(*v >= 0.0))
        {
            return Err(BeatError::InvalidGrid(
                "envelope needs a positive rate and non-negative values".into(),
            ));
        }
        Ok(OnsetEnvelope {
            frame_rate_hz,
            time_offset_s,
            duration_s,
            values,
        })
    }

    pub fn frame_rate_hz(&self) -> f64 {
        self.frame_rate_hz
    }

    pub fn time_offset_s(&self) -> f64 {
        self.time_offset_s
    }

    /// Length of the analyzed audio.
    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frame_time_s(&self, j: usize) -> f64 {
        self.time_offset_s + j as f64 / self.frame_rate_hz
    }

    fn nearest_frame(&self, t: f64) -> usize {
        let j = ((t - self.time_offset_s) * self.frame_rate_hz).round();
        (j.max(0.0) as usize).min(self.values.len().saturating_sub(1))
    }

    fn at(&self, t: f64) -> f64 {
        self.values
            .get(self.nearest_frame(t))
            .copied()
            .unwrap_or(0.0)
    }
}

/// Per frame, the summed half-wave-rectified magnitude increase over the
/// previous frame. The signal is preceded by half a window of silence, so
/// frame `j` is centered at `j * hop` and the first frame is measured
/// against silence.
pub fn onset_envelope(
    buffer: &AudioBuffer,
    window_size: usize,
    hop: usize,
) -> Result<OnsetEnvelope, BeatError> {
    let mono = audio::to_mono(buffer);
    let pad = vec![0.0f32; window_size / 2];
    let padded: Vec<f32> = pad.iter().chain(mono.channel(0)).copied().collect();
    let spec = audio::stft_samples(&padded, buffer.sample_rate_hz(), window_size, hop)?;
    let mags = spec.magnitudes();
    let mut values = Vec::with_capacity(mags.len());
    if let Some(first) = mags.first() {
        values.push(first.iter().sum());
    }
    for w in mags.windows(2) {
        values.push(
            w[1].iter()
                .zip(&w[0])
                .map(|(now, before)| (now - before).max(0.0))
                .sum(),
        );
    }
    Ok(OnsetEnvelope {
        frame_rate_hz: spec.frame_rate_hz(),
        time_offset_s: 0.0,
        duration_s: buffer.duration_s(),
        values,
    })
}

/// Gaussian smoothing so that onsets whose spacing alternates between
/// neighboring integer lags still line up.
fn smooth(values: &[f64], sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp())
        .collect();
    let n = values.len() as isize;
    (0..n)
        .map(|i| {
            kernel
                .iter()
                .zip(-radius..)
                .filter_map(|(w, k)| {
                    usize::try_from(i + k)
                        .ok()
                        .and_then(|j| values.get(j))
                        .map(|v| w * v)
                })
                .sum()
        })
        .collect()
}

fn check_tempo_range(min_bpm: f64, max_bpm: f64) -> Result<(), BeatError> {
    if !(min_bpm > 0.0 && min_bpm < max_bpm && max_bpm.is_finite()) {
        return Err(BeatError::InvalidRange { min_bpm, max_bpm });
    }
    Ok(())
}

/// Global tempo from the autocorrelation of the envelope, smoothed with a
/// two-frame Gaussian.
///
/// The peak lag is searched over `[60 fr / max_bpm, 60 fr / min_bpm]`. When
/// the lag's double or half scores within 5% of the peak, the candidate whose
/// tempo lies in [90, 180) BPM wins. A parabola through the chosen lag and
/// its neighbors gives sub-frame precision.
pub fn estimate_bpm(env: &OnsetEnvelope, min_bpm: f64, max_bpm: f64) -> Result<f64, BeatError> {
    check_tempo_range(min_bpm, max_bpm)?;
    let fr = env.frame_rate_hz;
    let n = env.values.len();
    let have_s = n as f64 / fr;
    if have_s < MIN_TEMPO_WINDOW_S {
        return Err(BeatError::TooShort {
            needed_s: MIN_TEMPO_WINDOW_S,
            got_s: have_s,
        });
    }

    let smoothed = smooth(&env.values, 2.0);
    let mean = smoothed.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = smoothed.iter().map(|v| v - mean).collect();
    let acf = |lag: usize| -> f64 {
        if lag >= n {
            return 0.0;
        }
        let s: f64 = centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum();
        s / n as f64
    };

    let energy = acf(0);
    if !(energy > 1e-20) {
        return Err(BeatError::NoTempo);
    }

    let lo = ((60.0 * fr / max_bpm).ceil() as usize).max(1);
    let hi = ((60.0 * fr / min_bpm).floor() as usize).min(n - 2);
    if lo > hi {
        return Err(BeatError::InvalidRange { min_bpm, max_bpm });
    }
    let scores: Vec<(usize, f64)> = (lo..=hi).map(|l| (l, acf(l))).collect();
    let &(peak_lag, peak) = scores.iter().fold(
        &scores[0],
        |best, cur| if cur.1 > best.1 { cur } else { best },
    );
    if !(peak > 1e-6 * energy) {
        return Err(BeatError::NoTempo);
    }

    let bpm_of = |lag: f64| 60.0 * fr / lag;
    let preferred = |lag: usize| {
        let b = bpm_of(lag as f64);
        b >= PREFERRED_BPM.0 && b < PREFERRED_BPM.1
    };
    let mut lag = peak_lag;
    if !preferred(peak_lag) {
        // Best-scoring lag near the double and half of the peak lag.
        let near = |center: usize| {
            scores.iter().filter(|(l, _)| l.abs_diff(center) <= 1).fold(
                None::<(usize, f64)>,
                |best, &(l, s)| match best {
                    Some((_, bs)) if bs >= s => best,
                    _ => Some((l, s)),
                },
            )
        };
        let candidates = [
            near(peak_lag * 2),
            near((peak_lag as f64 / 2.0).round() as usize),
        ];
        if let Some((l, _)) = candidates
            .into_iter()
            .flatten()
            .filter(|&(l, s)| s >= (1.0 - OCTAVE_TOLERANCE) * peak && preferred(l))
            .fold(None::<(usize, f64)>, |best, c| match best {
                Some((_, bs)) if bs >= c.1 => best,
                _ => Some(c),
            })
        {
            lag = l;
        }
    }

    let (a, b, c) = (acf(lag - 1), acf(lag), acf(lag + 1));
    let denom = a - 2.0 * b + c;
    let shift = if denom < 0.0 {
        (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    Ok(bpm_of(lag as f64 + shift))
}

/// Beat and downbeat times on a rigid grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BeatGridDoc", into = "BeatGridDoc")]
pub struct BeatGrid {
    bpm: f64,
    beats_per_bar: u32,
    beats_s: Vec<f64>,
    downbeats_s: Vec<f64>,
}

impl BeatGrid {
    /// Validates spacing (within 10% of the beat period), ordering, and that
    /// downbeats are beats spaced `beats_per_bar` apart.
    pub fn new(
        bpm: f64,
        beats_per_bar: u32,
        beats_s: Vec<f64>,
        downbeats_s: Vec<f64>,
    ) -> Result<Self, BeatError> {
        if !(bpm.is_finite() && bpm > 0.0) {
            return Err(BeatError::InvalidTempo(bpm));
        }
        if beats_per_bar == 0 {
            return Err(BeatError::InvalidMeter);
        }
        let period = 60.0 / bpm;
        if beats_s.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(BeatError::InvalidGrid(
                "beat times must be finite and non-negative".into(),
            ));
        }
        for w in beats_s.windows(2) {
            let gap = w[1] - w[0];
            if !(gap > 0.0) {
                return Err(BeatError::InvalidGrid(format!(
                    "beats not ascending at {}",
                    w[1]
                )));
            }
            if (gap - period).abs() > 0.1 * period {
                return Err(BeatError::InvalidGrid(format!(
                    "beat spacing {gap:.4} s is not within 10% of {period:.4} s"
                )));
            }
        }
        let mut previous: Option<usize> = None;
        for &d in &downbeats_s {
            let idx = beats_s
                .iter()
                .position(|&b| (b - d).abs() <= 1e-9)
                .ok_or_else(|| BeatError::InvalidGrid(format!("downbeat {d} is not a beat")))?;
            if let Some(p) = previous {
                if idx != p + beats_per_bar as usize {
                    return Err(BeatError::InvalidGrid(format!(
                        "downbeat {d} is {} beats after the previous one",
                        idx as i64 - p as i64
                    )));
                }
            }
            previous = Some(idx);
        }
        Ok(BeatGrid {
            bpm,
            beats_per_bar,
            beats_s,
            downbeats_s,
        })
    }

    /// A grid of `count` beats from `first_beat_s`, with the first downbeat
    /// on beat `downbeat_offset`.
    pub fn regular(
        bpm: f64,
        beats_per_bar: u32,
        first_beat_s: f64,
        count: usize,
        downbeat_offset: usize,
    ) -> Result<Self, BeatError> {
        let period = 60.0 / bpm;
        let beats: Vec<f64> = (0..count)
            .map(|k| first_beat_s + k as f64 * period)
            .collect();
        let downbeats = beats
            .iter()
            .skip(downbeat_offset)
            .step_by(beats_per_bar.max(1) as usize)
            .copied()
            .collect();
        BeatGrid::new(bpm, beats_per_bar, beats, downbeats)
    }

    pub fn bpm(&self) -> f64 {
        self.bpm
    }

    pub fn beats_per_bar(&self) -> u32 {
        self.beats_per_bar
    }

    pub fn beats_s(&self) -> &[f64] {
        &self.beats_s
    }

    pub fn downbeats_s(&self) -> &[f64] {
        &self.downbeats_s
    }

    /// The same grid moved by `delta_s`; beats that would land before zero
    /// are dropped.
    pub fn shifted(&self, delta_s: f64) -> Result<Self, BeatError> {
        let keep = |t: &f64| t + delta_s >= 0.0;
        let beats: Vec<f64> = self
            .beats_s
            .iter()
            .filter(|t| keep(t))
            .map(|t| t + delta_s)
            .collect();
        let downbeats: Vec<f64> = self
            .downbeats_s
            .iter()
            .filter(|t| keep(t))
            .map(|t| t + delta_s)
            .collect();
        BeatGrid::new(self.bpm, self.beats_per_bar, beats, downbeats)
    }

    pub fn to_json(&self) -> Result<String, FormatError> {
        format::to_json_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        format::from_json_str(text, BEAT_GRID_FORMAT)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), FormatError> {
        format::write_json(self, path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, FormatError> {
        format::read_json(path, BEAT_GRID_FORMAT)
    }
}

#[derive(Serialize, Deserialize)]
struct BeatGridDoc {
    format: String,
    bpm: f64,
    beats_per_bar: u32,
    beats_s: Vec<f64>,
    downbeats_s: Vec<f64>,
}

impl TryFrom<BeatGridDoc> for BeatGrid {
    type Error = BeatError;

    fn try_from(doc: BeatGridDoc) -> Result<Self, Self::Error> {
        BeatGrid::new(doc.bpm, doc.beats_per_bar, doc.beats_s, doc.downbeats_s)
    }
}

impl From<BeatGrid> for BeatGridDoc {
    fn from(g: BeatGrid) -> Self {
        BeatGridDoc {
            format: BEAT_GRID_FORMAT.to_string(),
            bpm: g.bpm,
            beats_per_bar: g.beats_per_bar,
            beats_s: g.beats_s,
            downbeats_s: g.downbeats_s,
        }
    }
}

/// Fits a rigid grid at `bpm` to the envelope.
///
/// The beat phase maximizes the envelope summed at the grid points (nearest
/// frame); the downbeat is the bar offset whose beats collect the most
/// onset energy. Ties go to the earliest phase and the lowest offset.
pub fn track_beats(
    env: &OnsetEnvelope,
    bpm: f64,
    beats_per_bar: u32,
) -> Result<BeatGrid, BeatError> {
    if !(bpm.is_finite() && bpm > 0.0) {
        return Err(BeatError::InvalidTempo(bpm));
    }
    if beats_per_bar == 0 {
        return Err(BeatError::InvalidMeter);
    }
    let period = 60.0 / bpm;
    let bar = period * beats_per_bar as f64;
    if env.duration_s < bar || env.values.is_empty() {
        return Err(BeatError::TooShort {
            needed_s: bar,
            got_s: env.duration_s,
        });
    }

    let grid = |phase: f64| {
        (0..)
            .map(move |k| phase + k as f64 * period)
            .take_while(|&t| t < env.duration_s)
    };
    let frames_per_period = (period * env.frame_rate_hz).ceil() as usize;
    let mut best = (f64::INFINITY, f64::NEG_INFINITY);
    for j in 0..frames_per_period.max(1) {
        let phase = env.frame_time_s(j).rem_euclid(period);
        let score: f64 = grid(phase).map(|t| env.at(t)).sum();
        if score > best.1 || (score == best.1 && phase < best.0) {
            best = (phase, score);
        }
    }
    let beats: Vec<f64> = grid(best.0).collect();

    let bpb = beats_per_bar as usize;
    let offset = (0..bpb.min(beats.len()))
        .map(|o| {
            (
                o,
                beats
                    .iter()
                    .skip(o)
                    .step_by(bpb)
                    .map(|&t| env.at(t))
                    .sum::<f64>(),
            )
        })
        .fold((0, f64::NEG_INFINITY), |best, (o, s)| {
            if s > best.1 {
                (o, s)
            } else {
                best
            }
        })
        .0;
    let downbeats = beats.iter().skip(offset).step_by(bpb).copied().collect();
    BeatGrid::new(bpm, beats_per_bar, beats, downbeats)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeatConfig {
    pub window_size: usize,
    pub hop: usize,
    pub min_bpm: f64,
    pub max_bpm: f64,
    pub beats_per_bar: u32,
}

impl Default for BeatConfig {
    fn default() -> Self {
        BeatConfig {
            window_size: 1024,
            hop: 512,
            min_bpm: 60.0,
            max_bpm: 200.0,
            beats_per_bar: 4,
        }
    }
}

/// Refines a grid's tempo from the onsets it tracks.
///
/// Each beat is matched to the strongest envelope frame within a quarter
/// period; beats whose peak is under a fifth of the envelope maximum are
/// ignored. A weighted least-squares line through (beat index, peak time)
/// gives the period. The grid tempo is returned unchanged when fewer than
/// three beats match or the fit moves the tempo by more than 3%.
pub fn refine_tempo(env: &OnsetEnvelope, grid: &BeatGrid) -> f64 {
    let period = 60.0 / grid.bpm();
    let floor = 0.2 * env.values.iter().copied().fold(0.0, f64::max);
    let reach = (0.25 * period * env.frame_rate_hz).floor() as isize;
    let points: Vec<(f64, f64, f64)> = grid
        .beats_s()
        .iter()
        .enumerate()
        .filter_map(|(k, &t)| {
            let center = env.nearest_frame(t) as isize;
            let (j, v) = (center - reach..=center + reach)
                .filter_map(|j| {
                    usize::try_from(j)
                        .ok()
                        .and_then(|j| env.values.get(j).map(|&v| (j, v)))
                })
                .fold((0, f64::NEG_INFINITY), |best, cur| {
                    if cur.1 > best.1 {
                        cur
                    } else {
                        best
                    }
                });
            (v > floor && v > 0.0).then(|| (k as f64, env.frame_time_s(j), v))
        })
        .collect();
    if points.len() < 3 {
        return grid.bpm();
    }
    let w: f64 = points.iter().map(|p| p.2).sum();
    let mk = points.iter().map(|p| p.2 * p.0).sum::<f64>() / w;
    let mt = points.iter().map(|p| p.2 * p.1).sum::<f64>() / w;
    let sxx: f64 = points.iter().map(|p| p.2 * (p.0 - mk).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| p.2 * (p.0 - mk) * (p.1 - mt)).sum();
    if !(sxx > 0.0) {
        return grid.bpm();
    }
    let fitted = sxy / sxx;
    if (fitted / period - 1.0).abs() > 0.03 {
        return grid.bpm();
    }
    60.0 / fitted
}

/// Envelope, tempo and grid in one call. The autocorrelation tempo is
/// refined with [`refine_tempo`] before the final grid is placed.
pub fn analyze_beats(buffer: &AudioBuffer, config: &BeatConfig) -> Result<BeatGrid, BeatError> {
    let env = onset_envelope(buffer, config.window_size, config.hop)?;
    let bpm = estimate_bpm(&env, config.min_bpm, config.max_bpm)?;
    let rough = track_beats(&env, bpm, config.beats_per_bar)?;
    track_beats(&env, refine_tempo(&env, &rough), config.beats_per_bar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{self, ClickTrack};

    const SR: u32 = 44100;

    fn clicks(bpm: f64, offset_s: f64, accent: Option<usize>) -> ClickTrack {
        ClickTrack {
            bpm,
            duration_s: 10.0,
            offset_s,
            accent_every: accent,
            ..Default::default()
        }
    }

    #[test]
    fn click_makes_single_peak() {
        for at in [0.5, 0.7731, 1.0002] {
            let mut x = vec![0.0f32; 2 * SR as usize];
            let p = (at * SR as f64) as usize;
            x[p] = 0.9;
            let env = onset_envelope(&AudioBuffer::mono(SR, x).unwrap(), 1024, 512).unwrap();
            let v = env.values();
            let peak = (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b });
            assert!(
                peak * 512 <= p && p < peak * 512 + 1024,
                "peak frame {peak} does not contain {p}"
            );
            for (j, &val) in v.iter().enumerate() {
                if j.abs_diff(peak) > 1 {
                    assert!(val < 1e-9 * v[peak]);
                }
            }
            assert!((env.frame_time_s(peak) - at).abs() <= 512.0 / SR as f64);
        }
    }

    #[test]
    fn steady_sine_has_flat_flux() {
        let mut x = vec![0.0f32; SR as usize / 2];
        x.extend(synth::sine(330.0, 0.5, 2.0, SR).into_channels().remove(0));
        let env = onset_envelope(&AudioBuffer::mono(SR, x).unwrap(), 1024, 512).unwrap();
        let v = env.values();
        let attack = (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b });
        assert!((env.frame_time_s(attack) - 0.5).abs() < 1024.0 / SR as f64);
        // Once the window is fully inside the tone, flux is a tiny fraction of the attack.
        for &val in &v[attack + 3..] {
            assert!(val < 0.01 * v[attack], "{val} vs {}", v[attack]);
        }
    }

    #[test]
    fn silence_envelope_and_no_tempo() {
        let buf = AudioBuffer::mono(SR, vec![0.0; 6 * SR as usize]).unwrap();
        let env = onset_envelope(&buf, 1024, 512).unwrap();
        assert!(env.values().iter().all(|&v| v == 0.0));
        assert!(matches!(
            estimate_bpm(&env, 60.0, 200.0),
            Err(BeatError::NoTempo)
        ));
    }

    #[test]
    fn tempo_of_click_tracks() {
        for bpm in [
            90.0, 100.0, 120.0, 140.0, 65.0, 75.0, 83.0, 110.0, 133.0, 155.0, 170.0, 178.0,
        ] {
            let env = onset_envelope(&clicks(bpm, 0.0, None).to_buffer(SR), 1024, 512).unwrap();
            let est = estimate_bpm(&env, 60.0, 200.0).unwrap();
            assert!((est - bpm).abs() <= 1.0, "{bpm}: {est}");
        }
    }

    #[test]
    fn tempo_errors() {
        let env = onset_envelope(&clicks(120.0, 0.0, None).to_buffer(SR), 1024, 512).unwrap();
        assert!(matches!(
            estimate_bpm(&env, 200.0, 60.0),
            Err(BeatError::InvalidRange { .. })
        ));
        let short = ClickTrack {
            duration_s: 3.0,
            ..Default::default()
        };
        let env = onset_envelope(&short.to_buffer(SR), 1024, 512).unwrap();
        assert!(matches!(
            estimate_bpm(&env, 60.0, 200.0),
            Err(BeatError::TooShort { .. })
        ));
    }

    #[test]
    fn accented_downbeats() {
        let ct = clicks(120.0, 0.0, Some(4));
        let env = onset_envelope(&ct.to_buffer(SR), 1024, 512).unwrap();
        let grid = track_beats(&env, 120.0, 4).unwrap();
        let accents = ct.accent_times();
        // The grid may run one beat past the last click.
        assert!(grid.downbeats_s().len() >= accents.len());
        for (d, a) in grid.downbeats_s().iter().zip(&accents) {
            assert!((d - a).abs() <= 512.0 / SR as f64, "{d} vs {a}");
        }
    }

    #[test]
    fn accent_on_third_click() {
        let ct = clicks(100.0, 0.0, Some(4));
        let mut x = ct.render(SR);
        // Delay the pattern so the first accent falls on the third click.
        let shift = (2.0 * 0.6 * SR as f64).round() as usize;
        x.splice(
            0..0,
            ClickTrack {
                duration_s: 1.2,
                bpm: 100.0,
                ..Default::default()
            }
            .render(SR),
        );
        x.truncate(10 * SR as usize);
        let env = onset_envelope(&AudioBuffer::mono(SR, x).unwrap(), 1024, 512).unwrap();
        let grid = track_beats(&env, 100.0, 4).unwrap();
        assert!((grid.downbeats_s()[0] - shift as f64 / SR as f64).abs() <= 512.0 / SR as f64);
    }

    #[test]
    fn uniform_envelope_takes_lowest_offset() {
        // Impulses every 50 frames at 100 frames/s: 120 BPM with no accents.
        let mut values = vec![0.0; 1000];
        for j in (0..1000).step_by(50) {
            values[j] = 1.0;
        }
        let env = OnsetEnvelope::new(100.0, 0.0, 10.0, values).unwrap();
        let grid = track_beats(&env, 120.0, 4).unwrap();
        assert_eq!(grid.beats_s()[0], 0.0);
        assert_eq!(grid.downbeats_s()[0], 0.0);
        for w in grid.downbeats_s().windows(2) {
            assert!((w[1] - w[0] - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn phase_follows_offset() {
        let env = onset_envelope(&clicks(120.0, 0.25, None).to_buffer(SR), 1024, 512).unwrap();
        let grid = track_beats(&env, 120.0, 4).unwrap();
        assert!(
            (grid.beats_s()[0] - 0.25).abs() <= 512.0 / SR as f64,
            "{}",
            grid.beats_s()[0]
        );
    }

    #[test]
    fn clip_shorter_than_bar() {
        let env = OnsetEnvelope::new(100.0, 0.0, 1.5, vec![0.0; 150]).unwrap();
        assert!(matches!(
            track_beats(&env, 120.0, 4),
            Err(BeatError::TooShort { .. })
        ));
        assert!(matches!(
            track_beats(&env, 0.0, 4),
            Err(BeatError::InvalidTempo(_))
        ));
    }

    #[test]
    fn time_shift_and_gain() {
        let ct = clicks(120.0, 0.1, Some(4));
        let base = analyze_beats(&ct.to_buffer(SR), &BeatConfig::default()).unwrap();
        let delay = 0.3;
        let mut x = vec![0.0f32; (delay * SR as f64) as usize];
        x.extend(ct.render(SR));
        let delayed =
            analyze_beats(&AudioBuffer::mono(SR, x).unwrap(), &BeatConfig::default()).unwrap();
        assert!((delayed.bpm() - base.bpm()).abs() <= 1.0);
        let hop_s = 512.0 / SR as f64;
        for (a, b) in base.downbeats_s().iter().zip(delayed.downbeats_s()) {
            assert!((b - a - delay).abs() <= hop_s + 1e-9, "{a} -> {b}");
        }
        for gain in [2.0, 0.01, 1.7] {
            let scaled = ct.to_buffer(SR).map_samples(|s| s * gain);
            let g = analyze_beats(&scaled, &BeatConfig::default()).unwrap();
            assert!((g.bpm() - base.bpm()).abs() < 1e-6);
            assert_eq!(g.beats_s().len(), base.beats_s().len());
            assert_eq!(g.downbeats_s().len(), base.downbeats_s().len());
            for (a, b) in g.beats_s().iter().zip(base.beats_s()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn grid_validation() {
        assert!(BeatGrid::new(120.0, 4, vec![0.0, 0.5, 1.2], vec![]).is_err());
        assert!(BeatGrid::new(120.0, 4, vec![0.0, 0.5, 0.4], vec![]).is_err());
        assert!(BeatGrid::new(120.0, 2, vec![0.0, 0.5, 1.0], vec![0.25]).is_err());
        assert!(BeatGrid::new(120.0, 2, vec![0.0, 0.5, 1.0, 1.5], vec![0.0, 0.5]).is_err());
        assert!(BeatGrid::new(120.0, 2, vec![0.0, 0.5, 1.0, 1.5], vec![0.5, 1.5]).is_ok());
        let g = BeatGrid::regular(120.0, 4, 0.1, 16, 1).unwrap();
        assert_eq!(g.downbeats_s().len(), 4);
        assert!((g.downbeats_s()[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn grid_json() {
        let g = BeatGrid::regular(97.3, 3, 0.123, 20, 2).unwrap();
        let text = g.to_json().unwrap();
        assert!(text.contains("\"format\": \"beat-grid/v1\""));
        assert_eq!(BeatGrid::from_json(&text).unwrap(), g);
        let bad = text.replace("beat-grid/v1", "beat-grid/v0");
        assert!(matches!(
            BeatGrid::from_json(&bad),
            Err(FormatError::Version { .. })
        ));
    }
}
