//! End-to-end remix preparation: analyze the input, build the conditioning
//! bundle, call a generation backend, warp its output onto the input's
//! downbeats and mix it under the preserved vocals.
//!
//! Pipeline steps are numbered as follows:
//!
//! 1. beat analysis
//! 2. stem ingestion (pre-separated stems are resampled to the pipeline rate)
//! 3. chord extraction
//! 4. time warping
//! 5. mixing

use std::fmt;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{self, AudioBuffer, AudioError};
use crate::beat::{self, BeatConfig, BeatError, BeatGrid};
use crate::chord_syntax::{ChordEvent, ChordSequence, SequenceError};
use crate::chroma::{self, ChromaError, ChromaMatrix, DEFAULT_FRAME_RATE_HZ};
use crate::chroma_analysis::{self, AnalysisError, ChromagramConfig, RecognitionConfig};
use crate::format::{self, FormatError};
use crate::time_warp::{self, AnchorMap, TimeWarpError, WsolaConfig, MAX_RATIO, MIN_RATIO};

pub const GENREQ_FORMAT: &str = "genreq/v1";

/// Accepted deviation of the generated duration from the requested one.
pub const DURATION_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    BeatAnalysis,
    StemIngestion,
    ChordExtraction,
    TimeWarping,
    Mixing,
}

impl Step {
    pub fn number(self) -> u8 {
        match self {
            Step::BeatAnalysis => 1,
            Step::StemIngestion => 2,
            Step::ChordExtraction => 3,
            Step::TimeWarping => 4,
            Step::Mixing => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Step::BeatAnalysis => "beat analysis",
            Step::StemIngestion => "stem ingestion",
            Step::ChordExtraction => "chord extraction",
            Step::TimeWarping => "time warping",
            Step::Mixing => "mixing",
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {} ({})", self.number(), self.name())
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Beat(#[from] BeatError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Chroma(#[from] ChromaError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Warp(#[from] TimeWarpError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
#[error("{step} failed: {source}")]
pub struct PipelineError {
    pub step: Step,
    #[source]
    pub source: StageError,
}

trait AtStep<T> {
    fn at(self, step: Step) -> Result<T, PipelineError>;
}

impl<T, E: Into<StageError>> AtStep<T> for Result<T, E> {
    fn at(self, step: Step) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError {
            step,
            source: e.into(),
        })
    }
}

fn fail<T>(step: Step, message: impl Into<String>) -> Result<T, PipelineError> {
    Err(PipelineError {
        step,
        source: StageError::Invalid(message.into()),
    })
}

/// Pre-separated stems. Without separation, `instrumental` holds the full mix.
#[derive(Debug, Clone, PartialEq)]
pub struct StemSet {
    pub vocals: Option<AudioBuffer>,
    pub instrumental: AudioBuffer,
}

impl StemSet {
    pub fn new(instrumental: AudioBuffer, vocals: Option<AudioBuffer>) -> Self {
        StemSet {
            vocals,
            instrumental,
        }
    }

    /// Both stems resampled to `sample_rate_hz`.
    pub fn ingest(&self, sample_rate_hz: u32) -> Result<StemSet, PipelineError> {
        let instrumental =
            audio::resample_linear(&self.instrumental, sample_rate_hz).at(Step::StemIngestion)?;
        let vocals = self
            .vocals
            .as_ref()
            .map(|v| audio::resample_linear(v, sample_rate_hz))
            .transpose()
            .at(Step::StemIngestion)?;
        Ok(StemSet {
            vocals,
            instrumental,
        })
    }

    /// Instrumental plus vocals, mono, zero-padded to the longer stem.
    pub fn full_mix(&self) -> Result<AudioBuffer, AudioError> {
        let inst = audio::to_mono(&self.instrumental);
        let Some(vocals) = &self.vocals else {
            return Ok(inst);
        };
        let vocals = audio::to_mono(&audio::resample_linear(vocals, inst.sample_rate_hz())?);
        AudioBuffer::mono(
            inst.sample_rate_hz(),
            sum_padded(inst.channel(0), vocals.channel(0)),
        )
    }
}

fn sum_padded(a: &[f32], b: &[f32]) -> Vec<f32> {
    (0..a.len().max(b.len()))
        .map(|i| a.get(i).copied().unwrap_or(0.0) + b.get(i).copied().unwrap_or(0.0))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChordSource {
    #[default]
    Instrumental,
    FullMix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixConfig {
    pub wsola: WsolaConfig,
    pub background_gain: f64,
    pub vocal_gain: f64,
    pub ceiling_dbfs: f64,
}

impl Default for MixConfig {
    fn default() -> Self {
        MixConfig {
            wsola: WsolaConfig::default(),
            background_gain: 1.0,
            vocal_gain: 1.0,
            ceiling_dbfs: -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub sample_rate_hz: u32,
    pub chromagram: ChromagramConfig,
    pub recognition: RecognitionConfig,
    pub beat: BeatConfig,
    pub frame_rate_hz: f64,
    pub chord_source: ChordSource,
    pub mix: MixConfig,
    /// Search range around the requested tempo when analyzing generated audio.
    pub generated_bpm_tolerance: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            sample_rate_hz: 44100,
            chromagram: ChromagramConfig::default(),
            recognition: RecognitionConfig::default(),
            beat: BeatConfig::default(),
            frame_rate_hz: DEFAULT_FRAME_RATE_HZ,
            chord_source: ChordSource::Instrumental,
            mix: MixConfig::default(),
            generated_bpm_tolerance: 0.1,
        }
    }
}

/// Everything a chord-conditioned generator needs about the input.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningBundle {
    pub beat_grid: BeatGrid,
    pub chords: ChordSequence,
    pub chroma: ChromaMatrix,
    pub prompt: String,
    pub duration_s: f64,
}

/// Runs beat analysis and chord extraction (concurrently) on the ingested
/// stems and renders the recognized chords at the configured frame rate
/// over the full input duration. The last chord is held to the end of the
/// input when the chromagram stops short of it.
pub fn prepare_conditioning(
    stems: &StemSet,
    prompt: &str,
    config: &PipelineConfig,
) -> Result<ConditioningBundle, PipelineError> {
    let stems = stems.ingest(config.sample_rate_hz)?;
    if stems.instrumental.is_empty() {
        return fail(Step::StemIngestion, "instrumental stem is empty");
    }
    let duration_s = stems.instrumental.duration_s();
    let chord_input = match config.chord_source {
        ChordSource::Instrumental => stems.instrumental.clone(),
        ChordSource::FullMix => stems.full_mix().at(Step::StemIngestion)?,
    };

    let (grid, chords) = thread::scope(|s| {
        let beats = s.spawn(|| {
            beat::analyze_beats(&stems.instrumental, &config.beat).at(Step::BeatAnalysis)
        });
        let chords = extract_chords(&chord_input, config);
        (beats.join().expect("beat analysis panicked"), chords)
    });
    let grid = grid?;
    let chords = hold_to(chords?, duration_s)
        .and_then(|c| c.with_tempo(grid.bpm()))
        .at(Step::ChordExtraction)?;
    let chroma = chroma::render_matrix(&chords, config.frame_rate_hz, Some(duration_s))
        .at(Step::ChordExtraction)?;
    Ok(ConditioningBundle {
        beat_grid: grid,
        chords,
        chroma,
        prompt: prompt.to_string(),
        duration_s,
    })
}

fn extract_chords(
    buffer: &AudioBuffer,
    config: &PipelineConfig,
) -> Result<ChordSequence, PipelineError> {
    let gram = chroma_analysis::compute_chromagram(buffer, &config.chromagram)
        .at(Step::ChordExtraction)?;
    chroma_analysis::recognize_chords(
        gram.chroma(),
        &config.recognition.bank(),
        &config.recognition,
    )
    .at(Step::ChordExtraction)
}

fn hold_to(seq: ChordSequence, end_s: f64) -> Result<ChordSequence, SequenceError> {
    if seq.total_duration_s() >= end_s {
        return Ok(seq);
    }
    let mut events: Vec<ChordEvent> = seq.events().to_vec();
    if let Some(last) = events.last_mut() {
        last.duration_s = end_s - last.start_s;
    }
    ChordSequence::new(events, seq.bpm(), seq.time_signature())
}

/// The document sent to a generation backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GenerationRequestDoc", into = "GenerationRequestDoc")]
pub struct GenerationRequest {
    pub prompt: String,
    pub bpm: f64,
    pub duration_s: f64,
    pub chroma: ChromaMatrix,
}

#[derive(Serialize, Deserialize)]
struct GenerationRequestDoc {
    format: String,
    prompt: String,
    bpm: f64,
    duration_s: f64,
    chroma: ChromaMatrix,
}

impl TryFrom<GenerationRequestDoc> for GenerationRequest {
    type Error = String;

    fn try_from(doc: GenerationRequestDoc) -> Result<Self, Self::Error> {
        GenerationRequest::new(doc.prompt, doc.bpm, doc.duration_s, doc.chroma)
    }
}

impl From<GenerationRequest> for GenerationRequestDoc {
    fn from(r: GenerationRequest) -> Self {
        GenerationRequestDoc {
            format: GENREQ_FORMAT.to_string(),
            prompt: r.prompt,
            bpm: r.bpm,
            duration_s: r.duration_s,
            chroma: r.chroma,
        }
    }
}

impl GenerationRequest {
    pub fn new(
        prompt: String,
        bpm: f64,
        duration_s: f64,
        chroma: ChromaMatrix,
    ) -> Result<Self, String> {
        if !(bpm.is_finite() && bpm > 0.0) {
            return Err(format!("bpm must be positive, got {bpm}"));
        }
        if !(duration_s.is_finite() && duration_s > 0.0) {
            return Err(format!("duration must be positive, got {duration_s}"));
        }
        if chroma.is_empty() {
            return Err("chroma matrix is empty".into());
        }
        Ok(GenerationRequest {
            prompt,
            bpm,
            duration_s,
            chroma,
        })
    }

    pub fn from_bundle(bundle: &ConditioningBundle) -> Self {
        GenerationRequest {
            prompt: bundle.prompt.clone(),
            bpm: bundle.beat_grid.bpm(),
            duration_s: bundle.duration_s,
            chroma: bundle.chroma.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String, FormatError> {
        format::to_json_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        format::from_json_str(text, GENREQ_FORMAT)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), FormatError> {
        format::write_json(self, path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, FormatError> {
        format::read_json(path, GENREQ_FORMAT)
    }
}

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("request to {endpoint} failed: {message}")]
    Transport { endpoint: String, message: String },
    #[error("backend answered with HTTP status {0}")]
    Status(u16),
    #[error("backend response is not audio (content type {content_type:?})")]
    NotAudio { content_type: Option<String> },
    #[error("backend audio could not be decoded: {0}")]
    Decode(AudioError),
    #[error("generated {got_s:.2} s of audio, requested {expected_s:.2} s")]
    DurationMismatch { expected_s: f64, got_s: f64 },
    #[error(transparent)]
    Format(#[from] FormatError),
}

impl GenerationError {
    /// Whether the failure happened on the remote side of the call.
    pub fn is_remote(&self) -> bool {
        !matches!(self, GenerationError::Format(_))
    }
}

#[derive(Debug, Clone)]
pub enum GenerationMode {
    Live { endpoint: String, timeout: Duration },
    DryRun { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub enum GenerationOutcome {
    Audio(AudioBuffer),
    RequestWritten(PathBuf),
}

/// Sends the request (live) or writes it to disk (dry run).
pub fn request_generation(
    req: &GenerationRequest,
    mode: &GenerationMode,
) -> Result<GenerationOutcome, GenerationError> {
    match mode {
        GenerationMode::DryRun { path } => {
            req.write(path)?;
            Ok(GenerationOutcome::RequestWritten(path.clone()))
        }
        GenerationMode::Live { endpoint, timeout } => {
            generate(req, endpoint, *timeout).map(GenerationOutcome::Audio)
        }
    }
}

/// POSTs the request as JSON and validates the WAV answer.
pub fn generate(
    req: &GenerationRequest,
    endpoint: &str,
    timeout: Duration,
) -> Result<AudioBuffer, GenerationError> {
    let body = req.to_json()?;
    let transport = |e: ureq::Error| GenerationError::Transport {
        endpoint: endpoint.to_string(),
        message: e.to_string(),
    };
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let mut response = agent
        .post(endpoint)
        .header("Content-Type", "application/json")
        .send(body)
        .map_err(transport)?;
    let status = response.status().as_u16();
    if !(200..300).contains(&status) {
        return Err(GenerationError::Status(status));
    }
    let content_type = response
        .headers()
        .get("content-type")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    let bytes = response
        .body_mut()
        .with_config()
        .limit(1 << 30)
        .read_to_vec()
        .map_err(transport)?;
    let audio = decode_response(&bytes, content_type)?;
    check_duration(req.duration_s, audio.duration_s())?;
    Ok(audio)
}

fn decode_response(
    bytes: &[u8],
    content_type: Option<String>,
) -> Result<AudioBuffer, GenerationError> {
    let declared_ok = content_type.as_deref().is_none_or(|ct| {
        let ct = ct.to_ascii_lowercase();
        ct.starts_with("audio/") || ct.starts_with("application/octet-stream")
    });
    let looks_like_wav = bytes.len() >= 12 && &bytes[..4] == b"RIFF" && &bytes[8..12] == b"WAVE";
    if !(declared_ok && looks_like_wav) {
        return Err(GenerationError::NotAudio { content_type });
    }
    audio::decode_wav(bytes).map_err(GenerationError::Decode)
}

fn check_duration(expected_s: f64, got_s: f64) -> Result<(), GenerationError> {
    if (got_s - expected_s).abs() > DURATION_TOLERANCE * expected_s {
        return Err(GenerationError::DurationMismatch { expected_s, got_s });
    }
    Ok(())
}

/// Beat grid of generated audio, with the tempo search narrowed to
/// `requested_bpm * (1 ± tolerance)`.
pub fn analyze_generated(
    generated: &AudioBuffer,
    requested_bpm: f64,
    config: &PipelineConfig,
) -> Result<BeatGrid, PipelineError> {
    let beat = BeatConfig {
        min_bpm: requested_bpm * (1.0 - config.generated_bpm_tolerance),
        max_bpm: requested_bpm * (1.0 + config.generated_bpm_tolerance),
        ..config.beat.clone()
    };
    beat::analyze_beats(generated, &beat).at(Step::BeatAnalysis)
}

/// Warps `generated` onto the input's downbeats and mixes it with the vocals.
///
/// The generated audio is first shifted so both first downbeats coincide.
/// Downbeats are then paired as anchors; the tail after the last common
/// downbeat is mapped end to end when its ratio is in range and dropped
/// otherwise. The warped background is resampled to the instrumental's
/// rate, gains are applied, vocals are added, and the sum is
/// peak-normalized to the ceiling.
pub fn finalize_remix(
    generated: &AudioBuffer,
    stems: &StemSet,
    generated_grid: &BeatGrid,
    input_grid: &BeatGrid,
    config: &MixConfig,
) -> Result<AudioBuffer, PipelineError> {
    if generated.is_empty() {
        return fail(Step::TimeWarping, "generated audio is empty");
    }
    let (Some(&gen_first), Some(&input_first)) = (
        generated_grid.downbeats_s().first(),
        input_grid.downbeats_s().first(),
    ) else {
        return Err(PipelineError {
            step: Step::TimeWarping,
            source: TimeWarpError::NoDownbeats(if generated_grid.downbeats_s().is_empty() {
                "generated"
            } else {
                "input"
            })
            .into(),
        });
    };

    let sr = generated.sample_rate_hz();
    let delta_s = input_first - gen_first;
    let shift = (delta_s.abs() * sr as f64).round() as usize;
    let shifted_audio = if delta_s >= 0.0 {
        AudioBuffer::new(
            sr,
            generated
                .channels()
                .iter()
                .map(|c| {
                    std::iter::repeat_n(0.0, shift)
                        .chain(c.iter().copied())
                        .collect()
                })
                .collect(),
        )
    } else {
        AudioBuffer::new(
            sr,
            generated
                .channels()
                .iter()
                .map(|c| c[shift.min(c.len())..].to_vec())
                .collect(),
        )
    }
    .at(Step::TimeWarping)?;
    let shifted_grid = generated_grid.shifted(delta_s).at(Step::TimeWarping)?;

    let anchors = time_warp::build_anchor_map(&shifted_grid, input_grid).at(Step::TimeWarping)?;
    let anchors = with_tail(
        anchors,
        shifted_audio.duration_s(),
        stems.instrumental.duration_s(),
    )
    .at(Step::TimeWarping)?;
    let warped = time_warp::align_to_anchors(&shifted_audio, &anchors, &config.wsola)
        .at(Step::TimeWarping)?;
    let background =
        audio::resample_linear(&warped, stems.instrumental.sample_rate_hz()).at(Step::Mixing)?;

    let vocals = stems
        .vocals
        .as_ref()
        .map(|v| audio::resample_linear(v, stems.instrumental.sample_rate_hz()))
        .transpose()
        .at(Step::Mixing)?;
    let mixed = mix_stems(
        &background,
        config.background_gain,
        vocals.as_ref(),
        config.vocal_gain,
    )?;
    Ok(peak_normalize(&mixed, config.ceiling_dbfs))
}

fn with_tail(
    anchors: AnchorMap,
    source_end: f64,
    target_end: f64,
) -> Result<AnchorMap, TimeWarpError> {
    let &(s, t) = anchors.pairs().last().expect("anchor map has pairs");
    let (ds, dt) = (source_end - s, target_end - t);
    if !(ds > 0.0 && dt > 0.0) || !(MIN_RATIO..=MAX_RATIO).contains(&(dt / ds)) {
        return Ok(anchors);
    }
    let mut pairs = anchors.pairs().to_vec();
    pairs.push((source_end, target_end));
    AnchorMap::new(pairs)
}

fn mix_stems(
    background: &AudioBuffer,
    background_gain: f64,
    vocals: Option<&AudioBuffer>,
    vocal_gain: f64,
) -> Result<AudioBuffer, PipelineError> {
    let scale = |buf: &AudioBuffer, g: f64| buf.map_samples(|s| (s as f64 * g) as f32);
    let background = scale(background, background_gain);
    let Some(vocals) = vocals else {
        return Ok(background);
    };
    let vocals = scale(vocals, vocal_gain);
    let channels = background.num_channels().max(vocals.num_channels());
    let spread = |buf: &AudioBuffer| -> Result<Vec<Vec<f32>>, PipelineError> {
        match buf.num_channels() {
            n if n == channels => Ok(buf.channels().to_vec()),
            1 => Ok(vec![buf.channel(0).to_vec(); channels]),
            n => fail(
                Step::Mixing,
                format!("cannot mix {n}-channel and {channels}-channel stems"),
            ),
        }
    };
    let (b, v) = (spread(&background)?, spread(&vocals)?);
    let summed = b.iter().zip(&v).map(|(b, v)| sum_padded(b, v)).collect();
    AudioBuffer::new(background.sample_rate_hz(), summed).at(Step::Mixing)
}

/// Largest f32 not above `10^(ceiling_dbfs / 20)`.
pub fn ceiling_linear(ceiling_dbfs: f64) -> f32 {
    let lin = 10f64.powf(ceiling_dbfs / 20.0);
    let c = lin as f32;
    if c as f64 > lin {
        f32::from_bits(c.to_bits() - 1)
    } else {
        c
    }
}

/// Scales all channels so the peak sits at the ceiling, if it exceeds it.
pub fn peak_normalize(buffer: &AudioBuffer, ceiling_dbfs: f64) -> AudioBuffer {
    let ceiling = ceiling_linear(ceiling_dbfs.min(0.0));
    let peak = buffer.peak();
    if peak <= ceiling {
        return buffer.clone();
    }
    let gain = ceiling as f64 / peak as f64;
    buffer.map_samples(|s| ((s as f64 * gain) as f32).clamp(-ceiling, ceiling))
}
