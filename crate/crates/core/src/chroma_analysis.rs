//! Chromagrams from audio, one-hot melody extraction, and template-matching
//! chord recognition.
//!
//! The chromagram folds every STFT bin between `fmin_hz` and `fmax_hz` onto
//! the pitch class of its nearest equal-tempered semitone (A4 = 440 Hz).
//! Recognition scores each frame against unit-norm binary chord templates
//! by cosine similarity, smooths the labels with a sliding majority vote,
//! and merges the result into contiguous timed events.

use thiserror::Error;

use crate::audio::{self, AudioBuffer, AudioError};
use crate::chord_syntax::{
    Chord, ChordEvent, ChordQuality, ChordSequence, PitchClass, SequenceError, TimeSignature,
};
use crate::chroma::{chord_to_chroma, ChromaError, ChromaMatrix, ChromaVector};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Chroma(#[from] ChromaError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("chromagram has no frames")]
    EmptyChromagram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    None,
    #[default]
    Max,
    L2,
}

impl std::str::FromStr for Normalization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Normalization::None),
            "max" => Ok(Normalization::Max),
            "l2" => Ok(Normalization::L2),
            other => Err(format!(
                "unknown normalization {other:?} (expected none, max or l2)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChromagramConfig {
    pub window_size: usize,
    pub hop: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub normalization: Normalization,
}

impl Default for ChromagramConfig {
    fn default() -> Self {
        ChromagramConfig {
            window_size: 4096,
            hop: 2048,
            fmin_hz: 65.4,
            fmax_hz: 2093.0,
            normalization: Normalization::Max,
        }
    }
}

impl ChromagramConfig {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if !(self.fmin_hz > 0.0 && self.fmin_hz < self.fmax_hz) {
            return Err(AnalysisError::InvalidConfig(format!(
                "need 0 < fmin ({}) < fmax ({})",
                self.fmin_hz, self.fmax_hz
            )));
        }
        if self.hop == 0 || self.hop > self.window_size {
            return Err(AnalysisError::InvalidConfig(format!(
                "need 0 < hop ({}) <= window ({})",
                self.hop, self.window_size
            )));
        }
        Ok(())
    }
}

/// Frames below this level (in sine-amplitude units) are treated as silent.
const SILENT_LEVEL: f64 = 1e-9;

/// A chroma matrix plus the pre-normalization level of every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Chromagram {
    chroma: ChromaMatrix,
    energy: Vec<f64>,
}

impl Chromagram {
    /// Pairs a matrix with per-frame levels; levels must match the frame count.
    pub fn new(chroma: ChromaMatrix, energy: Vec<f64>) -> Result<Self, AnalysisError> {
        if energy.len() != chroma.len() {
            return Err(AnalysisError::InvalidConfig(format!(
                "{} energies for {} frames",
                energy.len(),
                chroma.len()
            )));
        }
        Ok(Chromagram { chroma, energy })
    }

    /// Uses each frame's bin sum as its level.
    pub fn from_matrix(chroma: ChromaMatrix) -> Self {
        let energy = chroma.frames().iter().map(ChromaVector::sum).collect();
        Chromagram { chroma, energy }
    }

    pub fn chroma(&self) -> &ChromaMatrix {
        &self.chroma
    }

    pub fn into_chroma(self) -> ChromaMatrix {
        self.chroma
    }

    /// Sum of folded magnitudes per frame, scaled so a full-scale sine in
    /// range contributes about 1.
    pub fn energy(&self) -> &[f64] {
        &self.energy
    }
}

fn pitch_class_of(freq_hz: f64) -> usize {
    let midi = 69.0 + 12.0 * (freq_hz / 440.0).log2();
    (midi.round() as i64).rem_euclid(12) as usize
}

/// Computes a chromagram at `sample_rate / hop` frames per second.
/// Multichannel input is averaged to mono first.
pub fn compute_chromagram(
    buffer: &AudioBuffer,
    config: &ChromagramConfig,
) -> Result<Chromagram, AnalysisError> {
    config.validate()?;
    let mono = audio::to_mono(buffer);
    let spec = audio::stft(&mono, config.window_size, config.hop)?;

    let bin_hz = spec.bin_hz();
    let bin_map: Vec<(usize, usize)> = (1..spec.num_bins())
        .filter_map(|b| {
            let f = b as f64 * bin_hz;
            (f >= config.fmin_hz && f <= config.fmax_hz).then(|| (b, pitch_class_of(f)))
        })
        .collect();
    // A Hann-windowed sine of amplitude A spreads about A * N / 2 of
    // magnitude over its main lobe.
    let scale = 2.0 / config.window_size as f64;

    let mut energy = Vec::with_capacity(spec.num_frames());
    let frames = spec
        .magnitudes()
        .iter()
        .map(|mags| {
            let mut bins = [0.0f64; 12];
            for &(b, pc) in &bin_map {
                bins[pc] += mags[b] * scale;
            }
            let total: f64 = bins.iter().sum();
            energy.push(total);
            let v = ChromaVector::new(bins);
            let divisor = match config.normalization {
                Normalization::None => 1.0,
                Normalization::Max => v.max(),
                Normalization::L2 => v.norm(),
            };
            if total <= SILENT_LEVEL {
                ChromaVector::ZERO
            } else {
                ChromaVector::new(v.bins().map(|b| b / divisor))
            }
        })
        .collect();

    Ok(Chromagram {
        chroma: ChromaMatrix::new(spec.frame_rate_hz(), frames)?,
        energy,
    })
}

/// One-hot melody frames: the strongest pitch class per frame (lowest index
/// on ties). Frames whose level is below `silence_floor`, and all-zero
/// frames, stay zero.
pub fn melody_one_hot(chromagram: &Chromagram, silence_floor: f64) -> ChromaMatrix {
    let frames = chromagram
        .chroma
        .frames()
        .iter()
        .zip(&chromagram.energy)
        .map(|(v, &e)| {
            if v.is_zero() || e < silence_floor {
                ChromaVector::ZERO
            } else {
                ChromaVector::one_hot(
                    PitchClass::new(v.argmax() as u8).expect("argmax is below 12"),
                )
            }
        })
        .collect();
    ChromaMatrix::new(chromagram.chroma.frame_rate_hz(), frames)
        .expect("frame rate already validated")
}

/// Unit-norm chord templates, ordered by root and then vocabulary order,
/// with the uniform no-chord template last.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateBank {
    entries: Vec<(Chord, ChromaVector)>,
}

impl TemplateBank {
    pub fn new(qualities: &[ChordQuality]) -> Self {
        let mut ordered: Vec<ChordQuality> = ChordQuality::ALL
            .into_iter()
            .filter(|q| qualities.contains(q))
            .collect();
        ordered.dedup();
        let mut entries = Vec::with_capacity(12 * ordered.len() + 1);
        for root in PitchClass::all() {
            for &q in &ordered {
                let chord = Chord::new(root, q);
                let v = chord_to_chroma(&chord);
                entries.push((chord, v.scaled(1.0 / v.norm())));
            }
        }
        entries.push((Chord::NoChord, ChromaVector::new([1.0 / 12f64.sqrt(); 12])));
        TemplateBank { entries }
    }

    pub fn entries(&self) -> &[(Chord, ChromaVector)] {
        &self.entries
    }

    fn no_chord_index(&self) -> usize {
        self.entries.len() - 1
    }

    /// Best template index and its cosine similarity; `None` for silent frames.
    fn best_match(&self, frame: &ChromaVector) -> Option<(usize, f64)> {
        let norm = frame.norm();
        if norm <= 1e-12 {
            return None;
        }
        let mut best = (0, f64::NEG_INFINITY);
        for (i, (_, t)) in self.entries.iter().enumerate() {
            let dot: f64 = (0..12).map(|p| frame[p] * t[p]).sum();
            let cos = dot / norm;
            if cos > best.1 {
                best = (i, cos);
            }
        }
        Some(best)
    }
}

impl Default for TemplateBank {
    fn default() -> Self {
        TemplateBank::new(&RecognitionConfig::default().qualities)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecognitionConfig {
    pub qualities: Vec<ChordQuality>,
    /// Odd number of frames in the label smoothing window.
    pub smoothing_window: usize,
    pub min_confidence: f64,
    pub min_segment_s: f64,
    /// Tempo and meter stamped onto the output sequence.
    pub bpm: f64,
    pub time_signature: TimeSignature,
}

impl Default for RecognitionConfig {
    fn default() -> Self {
        RecognitionConfig {
            qualities: vec![ChordQuality::Maj, ChordQuality::Min],
            smoothing_window: 5,
            min_confidence: 0.5,
            min_segment_s: 0.3,
            bpm: 120.0,
            time_signature: TimeSignature::default(),
        }
    }
}

impl RecognitionConfig {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.smoothing_window == 0 || self.smoothing_window.is_multiple_of(2) {
            return Err(AnalysisError::InvalidConfig(format!(
                "smoothing window must be odd and positive, got {}",
                self.smoothing_window
            )));
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(AnalysisError::InvalidConfig(format!(
                "confidence threshold must be in [0, 1], got {}",
                self.min_confidence
            )));
        }
        if !(self.min_segment_s >= 0.0) {
            return Err(AnalysisError::InvalidConfig(
                "minimum segment duration must be >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn bank(&self) -> TemplateBank {
        TemplateBank::new(&self.qualities)
    }
}

/// Sliding majority vote over odd windows, truncated at the edges. Ties
/// keep the center label when it is among the winners, otherwise the lowest
/// label index.
fn majority_filter(labels: &[usize], window: usize, classes: usize) -> Vec<usize> {
    let half = window / 2;
    let mut counts = vec![0usize; classes];
    (0..labels.len())
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half + 1).min(labels.len());
            counts.iter_mut().for_each(|c| *c = 0);
            for &l in &labels[lo..hi] {
                counts[l] += 1;
            }
            let top = *counts.iter().max().expect("at least one class");
            if counts[labels[k]] == top {
                labels[k]
            } else {
                counts.iter().position(|&c| c == top).expect("max exists")
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    label: usize,
    start: usize,
    len: usize,
}

fn runs(labels: &[usize]) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for (i, &label) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(s) if s.label == label => s.len += 1,
            _ => out.push(Segment {
                label,
                start: i,
                len: 1,
            }),
        }
    }
    out
}

fn coalesce(segments: Vec<Segment>) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::with_capacity(segments.len());
    for s in segments {
        match out.last_mut() {
            Some(prev) if prev.label == s.label => prev.len += s.len,
            _ => out.push(s),
        }
    }
    out
}

/// Repeatedly folds the shortest too-short segment into its longer
/// neighbor (the earlier one on ties).
fn merge_short(mut segments: Vec<Segment>, min_frames: f64) -> Vec<Segment> {
    while segments.len() > 1 {
        let Some((i, _)) = segments
            .iter()
            .enumerate()
            .filter(|(_, s)| (s.len as f64) < min_frames)
            .min_by_key(|(_, s)| s.len)
        else {
            break;
        };
        let target = match (i.checked_sub(1), segments.get(i + 1)) {
            (Some(p), Some(next)) if next.len > segments[p].len => i + 1,
            (Some(p), _) => p,
            (None, _) => i + 1,
        };
        segments[i].label = segments[target].label;
        segments = coalesce(segments);
    }
    segments
}

/// Labels every frame with its best-matching template and merges the
/// smoothed labels into contiguous chord events covering the chromagram.
pub fn recognize_chords(
    chroma: &ChromaMatrix,
    bank: &TemplateBank,
    config: &RecognitionConfig,
) -> Result<ChordSequence, AnalysisError> {
    config.validate()?;
    if chroma.is_empty() {
        return Err(AnalysisError::EmptyChromagram);
    }
    let none = bank.no_chord_index();
    let labels: Vec<usize> = chroma
        .frames()
        .iter()
        .map(|f| match bank.best_match(f) {
            Some((i, cos)) if cos >= config.min_confidence => i,
            _ => none,
        })
        .collect();

    let smoothed = majority_filter(&labels, config.smoothing_window, bank.entries.len());
    let rate = chroma.frame_rate_hz();
    let segments = merge_short(runs(&smoothed), config.min_segment_s * rate);

    let events = segments
        .iter()
        .map(|s| {
            let start_s = s.start as f64 / rate;
            ChordEvent {
                chord: bank.entries[s.label].0,
                start_s,
                duration_s: (s.start + s.len) as f64 / rate - start_s,
            }
        })
        .collect();
    Ok(ChordSequence::new(
        events,
        config.bpm,
        config.time_signature,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{self, harmonic_chord, triad_notes};

    const SR: u32 = 44100;

    fn triad_buffer(root: u8, minor: bool, seconds: f64) -> AudioBuffer {
        AudioBuffer::mono(
            SR,
            harmonic_chord(&triad_notes(root, minor, 60.0), 3, 0.2, seconds, SR),
        )
        .unwrap()
    }

    fn top3(v: &ChromaVector) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..12).collect();
        idx.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).unwrap());
        let mut t = idx[..3].to_vec();
        t.sort();
        t
    }

    #[test]
    fn pure_triad_top_bins() {
        let buf =
            AudioBuffer::mono(SR, harmonic_chord(&[60.0, 64.0, 67.0], 1, 0.3, 1.0, SR)).unwrap();
        let cg = compute_chromagram(&buf, &ChromagramConfig::default()).unwrap();
        assert!(!cg.chroma().is_empty());
        for f in cg.chroma().frames() {
            assert_eq!(top3(f), vec![0, 4, 7]);
        }
    }

    #[test]
    fn a4_dominates() {
        let buf = synth::sine(440.0, 0.5, 1.0, SR);
        let cg = compute_chromagram(&buf, &ChromagramConfig::default()).unwrap();
        assert!((cg.chroma().frame_rate_hz() - SR as f64 / 2048.0).abs() < 1e-12);
        for f in cg.chroma().frames() {
            assert_eq!(f.argmax(), 9);
            assert!((0..12).filter(|&p| p != 9).all(|p| f[p] < f[9]));
            assert_eq!(f[9], 1.0);
        }
        let melody = melody_one_hot(&cg, 0.01);
        assert!(melody
            .frames()
            .iter()
            .all(|f| f.active() == vec![9] && f[9] == 1.0));
        // Sine amplitude 0.5 reads back as a level of roughly 0.5.
        assert!(
            cg.energy().iter().all(|&e| e > 0.4 && e < 0.7),
            "{:?}",
            &cg.energy()[..3]
        );
    }

    #[test]
    fn silence_is_zero() {
        let buf = AudioBuffer::mono(SR, vec![0.0; SR as usize]).unwrap();
        for normalization in [Normalization::None, Normalization::Max, Normalization::L2] {
            let cfg = ChromagramConfig {
                normalization,
                ..Default::default()
            };
            let cg = compute_chromagram(&buf, &cfg).unwrap();
            assert!(cg.chroma().frames().iter().all(ChromaVector::is_zero));
            assert!(melody_one_hot(&cg, 0.0)
                .frames()
                .iter()
                .all(ChromaVector::is_zero));
        }
    }

    #[test]
    fn l2_normalization_is_unit() {
        let cfg = ChromagramConfig {
            normalization: Normalization::L2,
            ..Default::default()
        };
        let cg = compute_chromagram(&triad_buffer(2, false, 0.5), &cfg).unwrap();
        for f in cg.chroma().frames() {
            assert!((f.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn short_buffer_and_bad_config() {
        let buf = AudioBuffer::mono(SR, vec![0.0; 100]).unwrap();
        assert!(matches!(
            compute_chromagram(&buf, &ChromagramConfig::default()),
            Err(AnalysisError::Audio(AudioError::TooShort { .. }))
        ));
        let bad = ChromagramConfig {
            fmin_hz: 3000.0,
            ..Default::default()
        };
        assert!(matches!(
            compute_chromagram(&buf, &bad),
            Err(AnalysisError::InvalidConfig(_))
        ));
    }

    #[test]
    fn melody_tie_break_and_floor() {
        let mut bins = [0.0; 12];
        bins[0] = 0.7;
        bins[7] = 0.7;
        let m = ChromaMatrix::new(
            10.0,
            vec![
                ChromaVector::new(bins),
                ChromaVector::ZERO,
                ChromaVector::new(bins),
            ],
        )
        .unwrap();
        let cg = Chromagram::new(m, vec![1.0, 0.0, 0.001]).unwrap();
        let out = melody_one_hot(&cg, 0.01);
        assert_eq!(out.frames()[0].active(), vec![0]);
        assert!(out.frames()[1].is_zero());
        assert!(out.frames()[2].is_zero());
    }

    #[test]
    fn template_bank_shape() {
        let bank = TemplateBank::default();
        assert_eq!(bank.entries().len(), 25);
        assert_eq!(bank.entries()[0].0.to_string(), "C:maj");
        assert_eq!(bank.entries()[1].0.to_string(), "C:min");
        assert_eq!(bank.entries()[2].0.to_string(), "Db:maj");
        assert_eq!(bank.entries()[24].0, Chord::NoChord);
        for (_, t) in bank.entries() {
            assert!((t.norm() - 1.0).abs() < 1e-12);
        }
        let full = TemplateBank::new(&ChordQuality::ALL);
        assert_eq!(full.entries().len(), 12 * 16 + 1);
    }

    #[test]
    fn majority_filter_removes_flicker() {
        let labels = [0, 0, 0, 1, 0, 0, 2, 2, 2, 2];
        assert_eq!(
            majority_filter(&labels, 3, 3),
            vec![0, 0, 0, 0, 0, 0, 2, 2, 2, 2]
        );
        assert_eq!(majority_filter(&labels, 1, 3), labels.to_vec());
    }

    #[test]
    fn short_segments_join_longer_neighbor() {
        let segs = runs(&[0, 0, 0, 0, 1, 2, 2]);
        let merged = merge_short(segs, 2.0);
        let labels: Vec<(usize, usize)> = merged.iter().map(|s| (s.label, s.len)).collect();
        assert_eq!(labels, vec![(0, 5), (2, 2)]);
    }

    #[test]
    fn two_chord_clip() {
        let mut x = triad_buffer(0, false, 2.0).into_channels().remove(0);
        x.extend(triad_buffer(7, false, 2.0).into_channels().remove(0));
        let buf = AudioBuffer::mono(SR, x).unwrap();
        let cg = compute_chromagram(&buf, &ChromagramConfig::default()).unwrap();
        let seq = recognize_chords(
            cg.chroma(),
            &TemplateBank::default(),
            &RecognitionConfig::default(),
        )
        .unwrap();
        let names: Vec<String> = seq.events().iter().map(|e| e.chord.to_string()).collect();
        assert_eq!(names, vec!["C:maj", "G:maj"]);
        let hop_s = 2048.0 / SR as f64;
        assert!(
            (seq.events()[1].start_s - 2.0).abs() <= 2.0 * hop_s,
            "{}",
            seq.events()[1].start_s
        );
        assert_eq!(seq.events()[0].start_s, 0.0);
        assert!((seq.total_duration_s() - cg.chroma().duration_s()).abs() < 1e-12);
    }

    #[test]
    fn c_minor_recognized_with_multi_hot_bits() {
        let cg =
            compute_chromagram(&triad_buffer(0, true, 2.0), &ChromagramConfig::default()).unwrap();
        let seq = recognize_chords(
            cg.chroma(),
            &TemplateBank::default(),
            &RecognitionConfig::default(),
        )
        .unwrap();
        assert_eq!(seq.events().len(), 1);
        let chord = seq.events()[0].chord;
        assert_eq!(chord.to_string(), "C:min");
        assert_eq!(chord_to_chroma(&chord).active(), vec![0, 3, 7]);
    }

    #[test]
    fn silence_is_one_no_chord_event() {
        let buf = AudioBuffer::mono(SR, vec![0.0; 2 * SR as usize]).unwrap();
        let cg = compute_chromagram(&buf, &ChromagramConfig::default()).unwrap();
        let seq = recognize_chords(
            cg.chroma(),
            &TemplateBank::default(),
            &RecognitionConfig::default(),
        )
        .unwrap();
        assert_eq!(seq.events().len(), 1);
        assert_eq!(seq.events()[0].chord, Chord::NoChord);
        assert!((seq.total_duration_s() - cg.chroma().duration_s()).abs() < 1e-12);
    }

    #[test]
    fn recognition_rejects_empty_and_bad_window() {
        let empty = ChromaMatrix::new(10.0, vec![]).unwrap();
        assert!(matches!(
            recognize_chords(
                &empty,
                &TemplateBank::default(),
                &RecognitionConfig::default()
            ),
            Err(AnalysisError::EmptyChromagram)
        ));
        let m = ChromaMatrix::new(10.0, vec![ChromaVector::ZERO]).unwrap();
        let cfg = RecognitionConfig {
            smoothing_window: 4,
            ..Default::default()
        };
        assert!(matches!(
            recognize_chords(&m, &TemplateBank::default(), &cfg),
            Err(AnalysisError::InvalidConfig(_))
        ));
    }

    #[test]
    fn scale_invariant_recognition() {
        let mut x = triad_buffer(5, true, 1.5).into_channels().remove(0);
        x.extend(triad_buffer(10, false, 1.5).into_channels().remove(0));
        let cfg = ChromagramConfig {
            normalization: Normalization::None,
            ..Default::default()
        };
        let cg = compute_chromagram(&AudioBuffer::mono(SR, x).unwrap(), &cfg).unwrap();
        let bank = TemplateBank::default();
        let rc = RecognitionConfig::default();
        let base = recognize_chords(cg.chroma(), &bank, &rc).unwrap();
        for factor in [1e-3, 0.5, 7.0, 1e4] {
            let scaled = cg.chroma().map_frames(|f| f.scaled(factor));
            assert_eq!(recognize_chords(&scaled, &bank, &rc).unwrap(), base);
        }
    }

    #[test]
    fn transposing_audio_transposes_roots() {
        let bank = TemplateBank::default();
        let rc = RecognitionConfig::default();
        for (root, minor) in [(0u8, false), (4, true), (9, false), (11, true)] {
            let base = AudioBuffer::mono(
                SR,
                harmonic_chord(&triad_notes(root, minor, 60.0), 3, 0.2, 1.0, SR),
            )
            .unwrap();
            let up = AudioBuffer::mono(
                SR,
                harmonic_chord(&triad_notes(root, minor, 61.0), 3, 0.2, 1.0, SR),
            )
            .unwrap();
            let label = |b: &AudioBuffer| {
                let cg = compute_chromagram(b, &ChromagramConfig::default()).unwrap();
                recognize_chords(cg.chroma(), &bank, &rc).unwrap().events()[0].chord
            };
            assert_eq!(label(&up), label(&base).transposed(1));
        }
    }

    #[test]
    fn recognition_is_deterministic() {
        let buf = triad_buffer(3, false, 1.0);
        let run = || {
            let cg = compute_chromagram(&buf, &ChromagramConfig::default()).unwrap();
            recognize_chords(
                cg.chroma(),
                &TemplateBank::default(),
                &RecognitionConfig::default(),
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }
}
