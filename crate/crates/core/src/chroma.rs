//! Chroma vectors and frame-rate chroma matrices.
//!
//! Chords become multi-hot 12-bin vectors (one bin per sounding pitch class,
//! amplitude 1); a melody becomes a one-hot vector per frame. A
//! [`ChromaMatrix`] is the sequence of those vectors at a fixed frame rate,
//! which is what a chord-conditioned generator consumes.

use std::fmt::Write as _;
use std::fs;
use std::ops::Index;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chord_syntax::{Chord, ChordSequence, PitchClass};
use crate::format::{self, FormatError};

pub const CHROMA_MATRIX_FORMAT: &str = "chroma-matrix/v1";

pub const DEFAULT_FRAME_RATE_HZ: f64 = 50.0;

/// CSV column names, C first.
pub const CSV_HEADER: &str = "c,cs,d,eb,e,f,fs,g,ab,a,bb,b";

#[derive(Debug, Error)]
pub enum ChromaError {
    #[error("frame rate must be positive and finite, got {0}")]
    InvalidFrameRate(f64),
    #[error("duration must be positive and finite, got {0}")]
    InvalidDuration(f64),
    #[error("cannot render an empty chord sequence")]
    EmptySequence,
    #[error("row {row} has {len} values, expected 12")]
    RowLength { row: usize, len: usize },
    #[error("header declares {declared} frames but data holds {actual}")]
    FrameCount { declared: usize, actual: usize },
    #[error("row {row} holds a negative or non-finite value")]
    BadValue { row: usize },
}

/// Twelve pitch-class activations, index 0 = C.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChromaVector([f64; 12]);

impl ChromaVector {
    pub const ZERO: ChromaVector = ChromaVector([0.0; 12]);

    pub fn new(bins: [f64; 12]) -> Self {
        ChromaVector(bins)
    }

    pub fn one_hot(pc: PitchClass) -> Self {
        let mut bins = [0.0; 12];
        bins[pc.index()] = 1.0;
        ChromaVector(bins)
    }

    pub fn bins(&self) -> &[f64; 12] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&b| b == 0.0)
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|b| b * b).sum::<f64>().sqrt()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    /// Index of the largest bin; ties go to the lowest pitch class.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..12 {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// Indices of the nonzero bins.
    pub fn active(&self) -> Vec<usize> {
        (0..12).filter(|&i| self.0[i] != 0.0).collect()
    }

    /// Rotates bins upward by `semitones` (bin `p` moves to `p + semitones`).
    pub fn rotated(&self, semitones: i32) -> Self {
        let mut bins = [0.0; 12];
        for (i, &b) in self.0.iter().enumerate() {
            bins[(i as i32 + semitones).rem_euclid(12) as usize] = b;
        }
        ChromaVector(bins)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        ChromaVector(self.0.map(|b| b * factor))
    }
}

impl Index<usize> for ChromaVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Multi-hot encoding: 1 on every sounding pitch class, 0 elsewhere.
pub fn chord_to_chroma(chord: &Chord) -> ChromaVector {
    ChromaVector(
        chord
            .pitch_class_mask()
            .map(|on| if on { 1.0 } else { 0.0 }),
    )
}

/// Chroma frames at a fixed rate; frame `k` covers
/// `[k / frame_rate_hz, (k + 1) / frame_rate_hz)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChromaMatrixDoc", into = "ChromaMatrixDoc")]
pub struct ChromaMatrix {
    frame_rate_hz: f64,
    frames: Vec<ChromaVector>,
}

impl ChromaMatrix {
    pub fn new(frame_rate_hz: f64, frames: Vec<ChromaVector>) -> Result<Self, ChromaError> {
        if !(frame_rate_hz.is_finite() && frame_rate_hz > 0.0) {
            return Err(ChromaError::InvalidFrameRate(frame_rate_hz));
        }
        Ok(ChromaMatrix {
            frame_rate_hz,
            frames,
        })
    }

    pub fn frame_rate_hz(&self) -> f64 {
        self.frame_rate_hz
    }

    pub fn frames(&self) -> &[ChromaVector] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.frames.len() as f64 / self.frame_rate_hz
    }

    pub fn frame_start_s(&self, k: usize) -> f64 {
        k as f64 / self.frame_rate_hz
    }

    pub fn map_frames(&self, f: impl FnMut(&ChromaVector) -> ChromaVector) -> Self {
        ChromaMatrix {
            frame_rate_hz: self.frame_rate_hz,
            frames: self.frames.iter().map(f).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String, FormatError> {
        format::to_json_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        format::from_json_str(text, CHROMA_MATRIX_FORMAT)
    }

    /// One frame per line under [`CSV_HEADER`].
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.frames.len() * 64);
        out.push_str(CSV_HEADER);
        out.push('\n');
        for frame in &self.frames {
            for (i, b) in frame.bins().iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{b}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn write_matrix(m: &ChromaMatrix, path: impl AsRef<Path>) -> Result<(), FormatError> {
    format::write_json(m, path)
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<ChromaMatrix, FormatError> {
    format::read_json(path, CHROMA_MATRIX_FORMAT)
}

pub fn write_csv(m: &ChromaMatrix, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    fs::write(path, m.to_csv()).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Serialize, Deserialize)]
struct ChromaMatrixDoc {
    format: String,
    frame_rate_hz: f64,
    frames: usize,
    data: Vec<Vec<f64>>,
}

impl TryFrom<ChromaMatrixDoc> for ChromaMatrix {
    type Error = ChromaError;

    fn try_from(doc: ChromaMatrixDoc) -> Result<Self, Self::Error> {
        if doc.frames != doc.data.len() {
            return Err(ChromaError::FrameCount {
                declared: doc.frames,
                actual: doc.data.len(),
            });
        }
        let frames = doc
            .data
            .into_iter()
            .enumerate()
            .map(|(row, values)| {
                let bins: [f64; 12] =
                    values
                        .as_slice()
                        .try_into()
                        .map_err(|_| ChromaError::RowLength {
                            row,
                            len: values.len(),
                        })?;
                if bins.iter().any(|b| !b.is_finite() || *b < 0.0) {
                    return Err(ChromaError::BadValue { row });
                }
                Ok(ChromaVector(bins))
            })
            .collect::<Result<Vec<_>, _>>()?;
        ChromaMatrix::new(doc.frame_rate_hz, frames)
    }
}

impl From<ChromaMatrix> for ChromaMatrixDoc {
    fn from(m: ChromaMatrix) -> Self {
        ChromaMatrixDoc {
            format: CHROMA_MATRIX_FORMAT.to_string(),
            frame_rate_hz: m.frame_rate_hz,
            frames: m.frames.len(),
            data: m.frames.iter().map(|f| f.0.to_vec()).collect(),
        }
    }
}

/// Renders a chord sequence into frames at `frame_rate_hz`.
///
/// Each frame takes the chord sounding at its center time. The frame count
/// is `round(duration * frame_rate)`, where the duration defaults to the
/// sequence length; frames past the last event are zero.
pub fn render_matrix(
    seq: &ChordSequence,
    frame_rate_hz: f64,
    duration_s: Option<f64>,
) -> Result<ChromaMatrix, ChromaError> {
    if !(frame_rate_hz.is_finite() && frame_rate_hz > 0.0) {
        return Err(ChromaError::InvalidFrameRate(frame_rate_hz));
    }
    if seq.is_empty() {
        return Err(ChromaError::EmptySequence);
    }
    let duration = match duration_s {
        Some(d) if !(d.is_finite() && d > 0.0) => return Err(ChromaError::InvalidDuration(d)),
        Some(d) => d,
        None => seq.total_duration_s(),
    };
    let count = (duration * frame_rate_hz).round() as usize;
    let frames = (0..count)
        .map(|k| {
            let center = (k as f64 + 0.5) / frame_rate_hz;
            seq.chord_at(center)
                .map_or(ChromaVector::ZERO, |e| chord_to_chroma(&e.chord))
        })
        .collect();
    ChromaMatrix::new(frame_rate_hz, frames)
}
