//! Chord-progression conditioning features and remix preparation.
//!
//! Textual chord progressions and audio recordings become multi-hot chroma
//! matrices for chord-conditioned music generation. The remix modules
//! analyze an input song (tempo, downbeats, chords), request a new
//! background from a generation backend, warp it onto the input's downbeats
//! and mix it under the original vocals.
//!
//! See `examples/` for one runnable program per capability.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio;
pub mod beat;
pub mod chord_syntax;
pub mod chroma;
pub mod chroma_analysis;
pub mod cli;
pub mod format;
pub mod remix;
pub mod synth;
pub mod time_warp;
