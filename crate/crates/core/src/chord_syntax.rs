//! Textual chord progressions.
//!
//! Chords are written `ROOT[:TYPE][/BASS]` (for example `Bb:7`, `C:maj/E`,
//! or `N` for no chord). A progression is a whitespace separated list of
//! bars; each bar holds one chord, or several chords separated by commas
//! that share the bar equally:
//!
//! ```
//! use chordweave::chord_syntax::{parse_progression, TimeSignature};
//!
//! let seq = parse_progression("C:maj G:maj,F:maj", 120.0, TimeSignature::default()).unwrap();
//! assert_eq!(seq.events().len(), 3);
//! assert_eq!(seq.total_duration_s(), 4.0);
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::format::{self, FormatError};

pub const CHORD_SEQ_FORMAT: &str = "chord-seq/v1";

/// Pitch class, `C = 0` through `B = 11`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PitchClass(u8);

const FLAT_NAMES: [&str; 12] = [
    "C", "Db", "D", "Eb", "E", "F", "Gb", "G", "Ab", "A", "Bb", "B",
];

impl PitchClass {
    pub const C: PitchClass = PitchClass(0);

    pub fn new(value: u8) -> Option<Self> {
        (value < 12).then_some(PitchClass(value))
    }

    /// Wraps any semitone count into a pitch class.
    pub fn from_semitones(semitones: i32) -> Self {
        PitchClass(semitones.rem_euclid(12) as u8)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn transpose(self, semitones: i32) -> Self {
        Self::from_semitones(self.0 as i32 + semitones)
    }

    /// Spelling with flats for the black keys.
    pub fn name(self) -> &'static str {
        FLAT_NAMES[self.index()]
    }

    pub fn all() -> impl Iterator<Item = PitchClass> {
        (0..12).map(PitchClass)
    }
}

impl fmt::Display for PitchClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The closed chord-type vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChordQuality {
    Maj,
    Min,
    Dim,
    Aug,
    Dom7,
    Maj7,
    Min7,
    Dim7,
    HalfDim7,
    Maj6,
    Min6,
    Sus2,
    Sus4,
    Dom9,
    Maj9,
    Min9,
}

impl ChordQuality {
    /// Vocabulary order; also the tie-break order used by the recognizer.
    pub const ALL: [ChordQuality; 16] = [
        ChordQuality::Maj,
        ChordQuality::Min,
        ChordQuality::Dim,
        ChordQuality::Aug,
        ChordQuality::Dom7,
        ChordQuality::Maj7,
        ChordQuality::Min7,
        ChordQuality::Dim7,
        ChordQuality::HalfDim7,
        ChordQuality::Maj6,
        ChordQuality::Min6,
        ChordQuality::Sus2,
        ChordQuality::Sus4,
        ChordQuality::Dom9,
        ChordQuality::Maj9,
        ChordQuality::Min9,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChordQuality::Maj => "maj",
            ChordQuality::Min => "min",
            ChordQuality::Dim => "dim",
            ChordQuality::Aug => "aug",
            ChordQuality::Dom7 => "7",
            ChordQuality::Maj7 => "maj7",
            ChordQuality::Min7 => "min7",
            ChordQuality::Dim7 => "dim7",
            ChordQuality::HalfDim7 => "hdim7",
            ChordQuality::Maj6 => "maj6",
            ChordQuality::Min6 => "min6",
            ChordQuality::Sus2 => "sus2",
            ChordQuality::Sus4 => "sus4",
            ChordQuality::Dom9 => "9",
            ChordQuality::Maj9 => "maj9",
            ChordQuality::Min9 => "min9",
        }
    }

    /// Semitone offsets from the root, root first.
    pub fn intervals(self) -> &'static [u8] {
        match self {
            ChordQuality::Maj => &[0, 4, 7],
            ChordQuality::Min => &[0, 3, 7],
            ChordQuality::Dim => &[0, 3, 6],
            ChordQuality::Aug => &[0, 4, 8],
            ChordQuality::Dom7 => &[0, 4, 7, 10],
            ChordQuality::Maj7 => &[0, 4, 7, 11],
            ChordQuality::Min7 => &[0, 3, 7, 10],
            ChordQuality::Dim7 => &[0, 3, 6, 9],
            ChordQuality::HalfDim7 => &[0, 3, 6, 10],
            ChordQuality::Maj6 => &[0, 4, 7, 9],
            ChordQuality::Min6 => &[0, 3, 7, 9],
            ChordQuality::Sus2 => &[0, 2, 7],
            ChordQuality::Sus4 => &[0, 5, 7],
            ChordQuality::Dom9 => &[0, 4, 7, 10, 2],
            ChordQuality::Maj9 => &[0, 4, 7, 11, 2],
            ChordQuality::Min9 => &[0, 3, 7, 10, 2],
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|q| q.name() == name)
    }
}

impl fmt::Display for ChordQuality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Chord {
    Pitched {
        root: PitchClass,
        quality: ChordQuality,
        bass: Option<PitchClass>,
    },
    NoChord,
}

impl Chord {
    pub fn new(root: PitchClass, quality: ChordQuality) -> Self {
        Chord::Pitched {
            root,
            quality,
            bass: None,
        }
    }

    pub fn with_bass(self, bass: PitchClass) -> Self {
        match self {
            Chord::Pitched { root, quality, .. } => Chord::Pitched {
                root,
                quality,
                bass: Some(bass),
            },
            Chord::NoChord => Chord::NoChord,
        }
    }

    /// Membership mask indexed by pitch class.
    pub fn pitch_class_mask(&self) -> [bool; 12] {
        let mut mask = [false; 12];
        if let Chord::Pitched {
            root,
            quality,
            bass,
        } = self
        {
            for &i in quality.intervals() {
                mask[root.transpose(i as i32).index()] = true;
            }
            if let Some(b) = bass {
                mask[b.index()] = true;
            }
        }
        mask
    }

    /// Sorted, duplicate-free pitch classes sounding in the chord.
    pub fn pitch_classes(&self) -> Vec<PitchClass> {
        self.pitch_class_mask()
            .iter()
            .enumerate()
            .filter(|(_, on)| **on)
            .map(|(i, _)| PitchClass(i as u8))
            .collect()
    }

    pub fn transposed(&self, semitones: i32) -> Self {
        match *self {
            Chord::Pitched {
                root,
                quality,
                bass,
            } => Chord::Pitched {
                root: root.transpose(semitones),
                quality,
                bass: bass.map(|b| b.transpose(semitones)),
            },
            Chord::NoChord => Chord::NoChord,
        }
    }

    pub fn is_no_chord(&self) -> bool {
        matches!(self, Chord::NoChord)
    }
}

/// Canonical text for a chord, e.g. `Eb:maj`, `Bb:7`, `C:maj/E`, `N`.
pub fn format_chord(chord: &Chord) -> String {
    chord.to_string()
}

impl fmt::Display for Chord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Chord::NoChord => f.write_str("N"),
            Chord::Pitched {
                root,
                quality,
                bass,
            } => {
                write!(f, "{root}:{quality}")?;
                if let Some(b) = bass {
                    write!(f, "/{b}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for Chord {
    type Err = SyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_chord_symbol(s)
    }
}

impl Serialize for Chord {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Chord {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_chord_symbol(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenErrorKind {
    #[error("empty chord symbol")]
    Empty,
    #[error("unknown root {0:?}")]
    UnknownRoot(char),
    #[error("unexpected character {0:?}")]
    UnexpectedChar(char),
    #[error("empty chord type after ':'")]
    EmptyQuality,
    #[error("unknown chord type {0:?}")]
    UnknownQuality(String),
    #[error("degree lists are not supported")]
    DegreeList,
    #[error("invalid bass note {0:?}")]
    InvalidBass(String),
}

/// Progression and chord-symbol errors. Positions are character offsets
/// into the text handed to the parser.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SyntaxError {
    #[error("{kind} in {token:?} at position {position}")]
    Token {
        token: String,
        position: usize,
        kind: TokenErrorKind,
    },
    #[error("empty chord slot in bar at position {position}")]
    EmptyBar { position: usize },
    #[error("tempo must be a positive number of beats per minute, got {0}")]
    InvalidTempo(f64),
    #[error("empty progression")]
    EmptyProgression,
    #[error("invalid time signature {0}/{1}")]
    InvalidTimeSignature(u32, u32),
}

impl SyntaxError {
    fn shifted(self, offset: usize) -> Self {
        match self {
            SyntaxError::Token {
                token,
                position,
                kind,
            } => SyntaxError::Token {
                token,
                position: position + offset,
                kind,
            },
            SyntaxError::EmptyBar { position } => SyntaxError::EmptyBar {
                position: position + offset,
            },
            other => other,
        }
    }
}

/// Parses a pitch-class spelling (`C`, `Eb`, `F#`, `Cb`, ...) at the start of
/// `chars`; returns the pitch class and the number of characters consumed.
fn scan_pitch(chars: &[char]) -> Option<(PitchClass, usize)> {
    let base = match chars.first()? {
        'C' => 0,
        'D' => 2,
        'E' => 4,
        'F' => 5,
        'G' => 7,
        'A' => 9,
        'B' => 11,
        _ => return None,
    };
    let mut semis = base;
    let mut used = 1;
    for &c in &chars[1..] {
        match c {
            'b' => semis -= 1,
            '#' => semis += 1,
            _ => break,
        }
        used += 1;
    }
    Some((PitchClass::from_semitones(semis), used))
}

/// Parses one chord symbol: `ROOT[:TYPE][/BASS]` or `N`.
pub fn parse_chord_symbol(token: &str) -> Result<Chord, SyntaxError> {
    let chars: Vec<char> = token.chars().collect();
    let fail = |position: usize, kind: TokenErrorKind| SyntaxError::Token {
        token: token.to_string(),
        position,
        kind,
    };

    if chars.is_empty() {
        return Err(fail(0, TokenErrorKind::Empty));
    }
    if token == "N" {
        return Ok(Chord::NoChord);
    }

    let (root, mut pos) =
        scan_pitch(&chars).ok_or_else(|| fail(0, TokenErrorKind::UnknownRoot(chars[0])))?;

    let mut quality = ChordQuality::Maj;
    if chars.get(pos) == Some(&':') {
        let start = pos + 1;
        let end = chars[start..]
            .iter()
            .position(|&c| c == '/')
            .map_or(chars.len(), |i| start + i);
        let name: String = chars[start..end].iter().collect();
        if name.is_empty() {
            return Err(fail(start, TokenErrorKind::EmptyQuality));
        }
        if name.starts_with('(') {
            return Err(fail(start, TokenErrorKind::DegreeList));
        }
        quality = ChordQuality::from_name(&name)
            .ok_or_else(|| fail(start, TokenErrorKind::UnknownQuality(name)))?;
        pos = end;
    }

    let mut bass = None;
    match chars.get(pos) {
        None => {}
        Some('/') => {
            let start = pos + 1;
            let rest: String = chars[start..].iter().collect();
            match scan_pitch(&chars[start..]) {
                Some((pc, used)) if start + used == chars.len() => bass = Some(pc),
                _ => return Err(fail(start, TokenErrorKind::InvalidBass(rest))),
            }
        }
        Some(&c) => return Err(fail(pos, TokenErrorKind::UnexpectedChar(c))),
    }

    Ok(Chord::Pitched {
        root,
        quality,
        bass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u32; 2]", into = "[u32; 2]")]
pub struct TimeSignature {
    beats_per_bar: u32,
    beat_unit: u32,
}

impl TimeSignature {
    pub fn new(beats_per_bar: u32, beat_unit: u32) -> Result<Self, SyntaxError> {
        if beats_per_bar == 0 || !beat_unit.is_power_of_two() {
            return Err(SyntaxError::InvalidTimeSignature(beats_per_bar, beat_unit));
        }
        Ok(TimeSignature {
            beats_per_bar,
            beat_unit,
        })
    }

    pub fn beats_per_bar(self) -> u32 {
        self.beats_per_bar
    }

    pub fn beat_unit(self) -> u32 {
        self.beat_unit
    }

    pub fn bar_duration_s(self, bpm: f64) -> f64 {
        self.beats_per_bar as f64 * 60.0 / bpm
    }
}

impl Default for TimeSignature {
    fn default() -> Self {
        TimeSignature {
            beats_per_bar: 4,
            beat_unit: 4,
        }
    }
}

impl TryFrom<[u32; 2]> for TimeSignature {
    type Error = SyntaxError;

    fn try_from([b, u]: [u32; 2]) -> Result<Self, Self::Error> {
        TimeSignature::new(b, u)
    }
}

impl From<TimeSignature> for [u32; 2] {
    fn from(ts: TimeSignature) -> Self {
        [ts.beats_per_bar, ts.beat_unit]
    }
}

impl FromStr for TimeSignature {
    type Err = SyntaxError;

    /// Accepts `4/4`, `3/4`, `6/8`, ...
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (b, u) = s
            .split_once('/')
            .ok_or(SyntaxError::InvalidTimeSignature(0, 0))?;
        let b = b
            .trim()
            .parse()
            .map_err(|_| SyntaxError::InvalidTimeSignature(0, 0))?;
        let u = u
            .trim()
            .parse()
            .map_err(|_| SyntaxError::InvalidTimeSignature(b, 0))?;
        TimeSignature::new(b, u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChordEvent {
    pub chord: Chord,
    pub start_s: f64,
    pub duration_s: f64,
}

impl ChordEvent {
    pub fn end_s(&self) -> f64 {
        self.start_s + self.duration_s
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start_s && t < self.end_s()
    }
}

/// Tolerance for contiguity checks on sequences read from disk.
const CONTIGUITY_TOL_S: f64 = 1e-6;

/// Contiguous, time-ordered chord events with their tempo and meter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChordSeqDoc", into = "ChordSeqDoc")]
pub struct ChordSequence {
    events: Vec<ChordEvent>,
    bpm: f64,
    time_signature: TimeSignature,
}

#[derive(Debug, Error)]
pub enum SequenceError {
    #[error("tempo must be positive and finite, got {0}")]
    InvalidTempo(f64),
    #[error("event {index} has invalid timing (start {start_s}, duration {duration_s})")]
    InvalidEvent {
        index: usize,
        start_s: f64,
        duration_s: f64,
    },
    #[error("event {index} starts at {start_s} but the previous event ends at {previous_end_s}")]
    Gap {
        index: usize,
        start_s: f64,
        previous_end_s: f64,
    },
}

impl ChordSequence {
    pub fn new(
        events: Vec<ChordEvent>,
        bpm: f64,
        time_signature: TimeSignature,
    ) -> Result<Self, SequenceError> {
        if !(bpm.is_finite() && bpm > 0.0) {
            return Err(SequenceError::InvalidTempo(bpm));
        }
        for (index, e) in events.iter().enumerate() {
            if !(e.start_s.is_finite()
                && e.start_s >= 0.0
                && e.duration_s.is_finite()
                && e.duration_s > 0.0)
            {
                return Err(SequenceError::InvalidEvent {
                    index,
                    start_s: e.start_s,
                    duration_s: e.duration_s,
                });
            }
            if index > 0 {
                let previous_end_s = events[index - 1].end_s();
                if (e.start_s - previous_end_s).abs() > CONTIGUITY_TOL_S {
                    return Err(SequenceError::Gap {
                        index,
                        start_s: e.start_s,
                        previous_end_s,
                    });
                }
            }
        }
        Ok(ChordSequence {
            events,
            bpm,
            time_signature,
        })
    }

    pub fn events(&self) -> &[ChordEvent] {
        &self.events
    }

    pub fn bpm(&self) -> f64 {
        self.bpm
    }

    pub fn time_signature(&self) -> TimeSignature {
        self.time_signature
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// End time of the last event (zero when empty).
    pub fn total_duration_s(&self) -> f64 {
        self.events.last().map_or(0.0, ChordEvent::end_s)
    }

    /// Event sounding at time `t`, if any.
    pub fn chord_at(&self, t: f64) -> Option<&ChordEvent> {
        let idx = self.events.partition_point(|e| e.start_s <= t);
        idx.checked_sub(1)
            .map(|i| &self.events[i])
            .filter(|e| e.contains(t))
    }

    pub fn with_tempo(mut self, bpm: f64) -> Result<Self, SequenceError> {
        if !(bpm.is_finite() && bpm > 0.0) {
            return Err(SequenceError::InvalidTempo(bpm));
        }
        self.bpm = bpm;
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String, FormatError> {
        format::to_json_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        format::from_json_str(text, CHORD_SEQ_FORMAT)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), FormatError> {
        format::write_json(self, path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, FormatError> {
        format::read_json(path, CHORD_SEQ_FORMAT)
    }
}

#[derive(Serialize, Deserialize)]
struct ChordSeqDoc {
    format: String,
    bpm: f64,
    time_signature: TimeSignature,
    events: Vec<ChordEvent>,
}

impl TryFrom<ChordSeqDoc> for ChordSequence {
    type Error = SequenceError;

    fn try_from(doc: ChordSeqDoc) -> Result<Self, Self::Error> {
        ChordSequence::new(doc.events, doc.bpm, doc.time_signature)
    }
}

impl From<ChordSequence> for ChordSeqDoc {
    fn from(seq: ChordSequence) -> Self {
        ChordSeqDoc {
            format: CHORD_SEQ_FORMAT.to_string(),
            bpm: seq.bpm,
            time_signature: seq.time_signature,
            events: seq.events,
        }
    }
}

/// Splits `text` on `sep` (whitespace when `None`), keeping character
/// offsets. Empty pieces are kept when splitting on a character.
fn split_with_offsets(text: &str, sep: Option<char>) -> Vec<(usize, String)> {
    let mut pieces = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let mut in_piece = false;
    for (i, c) in text.chars().enumerate() {
        let is_sep = match sep {
            Some(s) => c == s,
            None => c.is_whitespace(),
        };
        if is_sep {
            if in_piece || sep.is_some() {
                pieces.push((start, std::mem::take(&mut current)));
            }
            in_piece = false;
            start = i + 1;
        } else {
            if !in_piece {
                start = i;
                in_piece = true;
            }
            current.push(c);
        }
    }
    if in_piece || sep.is_some() {
        pieces.push((start, current));
    }
    pieces
}

/// Parses a bar-structured progression into absolutely timed events.
///
/// Every whitespace separated bar lasts `beats_per_bar * 60 / bpm` seconds;
/// comma separated chords within a bar split it evenly.
pub fn parse_progression(
    text: &str,
    bpm: f64,
    ts: TimeSignature,
) -> Result<ChordSequence, SyntaxError> {
    if !(bpm.is_finite() && bpm > 0.0) {
        return Err(SyntaxError::InvalidTempo(bpm));
    }
    let bars = split_with_offsets(text, None);
    if bars.is_empty() {
        return Err(SyntaxError::EmptyProgression);
    }

    let bar_s = ts.bar_duration_s(bpm);
    let mut events = Vec::new();
    for (bar_index, (bar_offset, bar)) in bars.iter().enumerate() {
        let slots = split_with_offsets(bar, Some(','));
        let n = slots.len() as f64;
        let boundary = |j: usize| (bar_index as f64 + j as f64 / n) * bar_s;
        for (j, (slot_offset, token)) in slots.iter().enumerate() {
            if token.is_empty() {
                return Err(SyntaxError::EmptyBar {
                    position: bar_offset + slot_offset,
                });
            }
            let chord =
                parse_chord_symbol(token).map_err(|e| e.shifted(bar_offset + slot_offset))?;
            let start_s = boundary(j);
            let end_s = if j + 1 == slots.len() {
                (bar_index + 1) as f64 * bar_s
            } else {
                boundary(j + 1)
            };
            events.push(ChordEvent {
                chord,
                start_s,
                duration_s: end_s - start_s,
            });
        }
    }

    Ok(ChordSequence {
        events,
        bpm,
        time_signature: ts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const JAZZ_PROGRESSION: &str = "G:maj7 D:min7,G:7 C:maj7 F:7 B:min7,Bb:7 A:min7,D:7";

    fn pc(v: u8) -> PitchClass {
        PitchClass::new(v).unwrap()
    }

    #[test]
    fn parses_flat_root() {
        assert_eq!(
            parse_chord_symbol("Eb:maj").unwrap(),
            Chord::new(pc(3), ChordQuality::Maj)
        );
        assert_eq!(
            parse_chord_symbol("Bb:7").unwrap(),
            Chord::new(pc(10), ChordQuality::Dom7)
        );
    }

    #[test]
    fn no_chord_and_bare_root() {
        assert_eq!(parse_chord_symbol("N").unwrap(), Chord::NoChord);
        assert_eq!(
            parse_chord_symbol("F#").unwrap(),
            Chord::new(pc(6), ChordQuality::Maj)
        );
    }

    #[test]
    fn enharmonic_spellings_agree() {
        for (a, b) in [("Eb", "D#"), ("Db", "C#"), ("Cb", "B"), ("E#", "F")] {
            assert_eq!(
                parse_chord_symbol(a).unwrap(),
                parse_chord_symbol(b).unwrap(),
                "{a} vs {b}"
            );
        }
    }

    #[test]
    fn slash_bass_adds_pitch_class() {
        let c = parse_chord_symbol("C:min/Bb").unwrap();
        assert_eq!(c, Chord::new(pc(0), ChordQuality::Min).with_bass(pc(10)));
        let pcs: Vec<u8> = c.pitch_classes().iter().map(|p| p.value()).collect();
        assert_eq!(pcs, vec![0, 3, 7, 10]);
        assert_eq!(format_chord(&c), "C:min/Bb");
    }

    #[test]
    fn rejects_bad_tokens() {
        let kind = |s: &str| match parse_chord_symbol(s).unwrap_err() {
            SyntaxError::Token { kind, position, .. } => (kind, position),
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(kind("H:maj"), (TokenErrorKind::UnknownRoot('H'), 0));
        assert_eq!(kind("c:maj"), (TokenErrorKind::UnknownRoot('c'), 0));
        assert_eq!(kind("C:"), (TokenErrorKind::EmptyQuality, 2));
        assert_eq!(
            kind("C:major"),
            (TokenErrorKind::UnknownQuality("major".into()), 2)
        );
        assert_eq!(
            kind("C:MAJ"),
            (TokenErrorKind::UnknownQuality("MAJ".into()), 2)
        );
        assert_eq!(kind("C:(1,3,5)"), (TokenErrorKind::DegreeList, 2));
        assert_eq!(
            kind("C:maj/3"),
            (TokenErrorKind::InvalidBass("3".into()), 6)
        );
        assert_eq!(kind("C:maj/"), (TokenErrorKind::InvalidBass("".into()), 6));
        assert_eq!(kind("Cm"), (TokenErrorKind::UnexpectedChar('m'), 1));
        assert_eq!(kind(""), (TokenErrorKind::Empty, 0));
    }

    #[test]
    fn format_examples() {
        assert_eq!(
            format_chord(&Chord::new(pc(3), ChordQuality::Maj)),
            "Eb:maj"
        );
        assert_eq!(format_chord(&Chord::NoChord), "N");
        assert_eq!(
            format_chord(&Chord::new(pc(10), ChordQuality::Dom7)),
            "Bb:7"
        );
    }

    #[test]
    fn jazz_progression_timing() {
        let seq = parse_progression(JAZZ_PROGRESSION, 120.0, TimeSignature::default()).unwrap();
        let ev = seq.events();
        assert_eq!(ev.len(), 9);
        assert!((seq.total_duration_s() - 12.0).abs() < 1e-9);
        assert_eq!(ev[1].chord.to_string(), "D:min7");
        assert!((ev[1].start_s - 2.0).abs() < 1e-12 && (ev[1].end_s() - 3.0).abs() < 1e-12);
        assert_eq!(ev[2].chord.to_string(), "G:7");
        assert!((ev[2].start_s - 3.0).abs() < 1e-12 && (ev[2].end_s() - 4.0).abs() < 1e-12);
        assert_eq!(ev[7].chord.to_string(), "A:min7");
        assert!((ev[7].start_s - 10.0).abs() < 1e-12);
    }

    #[test]
    fn single_bar_and_split_bar() {
        let one = parse_progression("C:maj", 60.0, TimeSignature::default()).unwrap();
        assert_eq!(one.events().len(), 1);
        assert_eq!(
            (one.events()[0].start_s, one.events()[0].duration_s),
            (0.0, 4.0)
        );

        let two = parse_progression("C:maj,G:maj", 120.0, TimeSignature::default()).unwrap();
        let d: Vec<f64> = two.events().iter().map(|e| e.duration_s).collect();
        assert_eq!(d, vec![1.0, 1.0]);
    }

    #[test]
    fn waltz_meter() {
        let ts: TimeSignature = "3/4".parse().unwrap();
        let seq = parse_progression("C G", 60.0, ts).unwrap();
        assert_eq!(seq.total_duration_s(), 6.0);
    }

    #[test]
    fn progression_errors() {
        let ts = TimeSignature::default();
        assert_eq!(
            parse_progression("C:maj", 0.0, ts).unwrap_err(),
            SyntaxError::InvalidTempo(0.0)
        );
        assert!(matches!(
            parse_progression("C", -3.0, ts),
            Err(SyntaxError::InvalidTempo(_))
        ));
        assert_eq!(
            parse_progression("   ", 120.0, ts).unwrap_err(),
            SyntaxError::EmptyProgression
        );
        assert_eq!(
            parse_progression("C:maj a,,b", 120.0, ts).unwrap_err(),
            SyntaxError::Token {
                token: "a".into(),
                position: 6,
                kind: TokenErrorKind::UnknownRoot('a')
            }
        );
        assert_eq!(
            parse_progression("C:maj C,,G", 120.0, ts).unwrap_err(),
            SyntaxError::EmptyBar { position: 8 }
        );
        match parse_progression("C:maj  G:mjr", 120.0, ts).unwrap_err() {
            SyntaxError::Token { position, kind, .. } => {
                assert_eq!(position, 9);
                assert_eq!(kind, TokenErrorKind::UnknownQuality("mjr".into()));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sequence_json_round_trip() {
        let seq = parse_progression(JAZZ_PROGRESSION, 97.0, TimeSignature::default()).unwrap();
        let text = seq.to_json().unwrap();
        assert!(text.contains("\"format\": \"chord-seq/v1\""));
        assert!(text.contains("\"time_signature\": [\n    4,\n    4\n  ]"));
        assert_eq!(ChordSequence::from_json(&text).unwrap(), seq);
    }

    #[test]
    fn sequence_json_rejects_wrong_tag_and_gaps() {
        let bad_tag = r#"{"format":"chord-seq/v2","bpm":120.0,"time_signature":[4,4],"events":[]}"#;
        assert!(matches!(
            ChordSequence::from_json(bad_tag),
            Err(FormatError::Version { .. })
        ));
        let gap = r#"{"format":"chord-seq/v1","bpm":120.0,"time_signature":[4,4],"events":[
            {"chord":"C:maj","start_s":0.0,"duration_s":1.0},
            {"chord":"G:maj","start_s":1.5,"duration_s":1.0}]}"#;
        assert!(ChordSequence::from_json(gap).is_err());
        let bad_chord = r#"{"format":"chord-seq/v1","bpm":120.0,"time_signature":[4,4],"events":[
            {"chord":"H:maj","start_s":0.0,"duration_s":1.0}]}"#;
        assert!(ChordSequence::from_json(bad_chord).is_err());
    }

    #[test]
    fn chord_at_lookup() {
        let seq = parse_progression("C:maj G:maj", 120.0, TimeSignature::default()).unwrap();
        assert_eq!(seq.chord_at(0.0).unwrap().chord.to_string(), "C:maj");
        assert_eq!(seq.chord_at(2.0).unwrap().chord.to_string(), "G:maj");
        assert!(seq.chord_at(4.0).is_none());
    }

    fn arb_chord() -> impl Strategy<Value = Chord> {
        (0u8..12, 0usize..16, proptest::option::of(0u8..12)).prop_map(|(r, q, b)| {
            let c = Chord::new(pc(r), ChordQuality::ALL[q]);
            match b {
                Some(b) => c.with_bass(pc(b)),
                None => c,
            }
        })
    }

    proptest! {
        #[test]
        fn format_parse_preserves_pitch_classes(c in arb_chord()) {
            let back = parse_chord_symbol(&format_chord(&c)).unwrap();
            prop_assert_eq!(back.pitch_classes(), c.pitch_classes());
            prop_assert_eq!(back, c);
        }

        #[test]
        fn parser_never_panics(text in "[A-Hb#N:,/0-9a-z() ]{0,40}", bpm in -10.0f64..300.0) {
            let _ = parse_progression(&text, bpm, TimeSignature::default());
        }

        #[test]
        fn timing_is_exact_and_contiguous(
            bars in proptest::collection::vec(1usize..5, 1..12),
            bpm in 30.0f64..240.0,
            bpb in 1u32..8,
        ) {
            let text: Vec<String> = bars.iter().map(|&n| vec!["C:maj"; n].join(",")).collect();
            let ts = TimeSignature::new(bpb, 4).unwrap();
            let seq = parse_progression(&text.join(" "), bpm, ts).unwrap();
            let expected = bars.len() as f64 * bpb as f64 * 60.0 / bpm;
            let sum: f64 = seq.events().iter().map(|e| e.duration_s).sum();
            prop_assert!((sum - expected).abs() < 1e-9);
            prop_assert_eq!(seq.events()[0].start_s, 0.0);
            for w in seq.events().windows(2) {
                prop_assert!((w[0].end_s() - w[1].start_s).abs() < 1e-9);
            }
        }
    }
}
