//! Command-line front end. Every subcommand reads and writes the documented
//! file formats and delegates the work to the library modules.
//!
//! Exit codes: 0 success, 1 input or parse error, 2 I/O error, 3 remote
//! generation error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Deserialize;

use crate::audio::{self, AudioBuffer, AudioError, BitDepth};
use crate::beat::{self, BeatConfig, BeatError, BeatGrid};
use crate::chord_syntax::{self, ChordQuality, ChordSequence, TimeSignature};
use crate::chroma::{self, ChromaMatrix};
use crate::chroma_analysis::{
    self, AnalysisError, ChromagramConfig, Normalization, RecognitionConfig,
};
use crate::format::FormatError;
use crate::remix::{
    self, ChordSource, GenerationError, GenerationMode, GenerationOutcome, GenerationRequest,
    MixConfig, PipelineConfig, PipelineError, StageError, StemSet,
};
use crate::time_warp::{self, TimeWarpError, WsolaConfig};

pub const ENDPOINT_ENV: &str = "CHORDWEAVE_ENDPOINT";
pub const DEFAULT_TIMEOUT_S: u64 = 300;
pub const DEFAULT_SILENCE_FLOOR: f64 = 0.01;

#[derive(Debug, Parser)]
#[command(
    name = "chordweave",
    version,
    about = "Chord conditioning features and remix preparation"
)]
struct Cli {
    /// TOML file with default option values; flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Analysis sample rate; inputs are resampled to it.
    #[arg(long, global = true, value_name = "HZ")]
    sample_rate: Option<u32>,
    /// Chroma frame rate for rendered conditioning matrices.
    #[arg(long, global = true, value_name = "HZ")]
    frame_rate: Option<f64>,
    /// Increase log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a textual chord progression into a chord-seq/v1 document.
    Parse(ParseArgs),
    /// Render a chord sequence into a chroma-matrix/v1 document.
    Encode(EncodeArgs),
    /// Recognize chords in a WAV file.
    AnalyzeChords(AnalyzeChordsArgs),
    /// Estimate tempo, beats and downbeats of a WAV file.
    Beats(BeatsArgs),
    /// Time-stretch a WAV file by a ratio or onto another beat grid.
    Align(AlignArgs),
    /// Warp generated audio onto the input grid and mix it with vocals.
    Mix(MixArgs),
    /// Full pipeline: analyze, request generation, warp and mix.
    Remix(RemixArgs),
    /// Extract one-hot melody chroma from a WAV file.
    Melody(MelodyArgs),
}

#[derive(Debug, Args)]
struct OutArg {
    /// Output file; JSON outputs go to stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ParseArgs {
    progression: String,
    #[arg(long)]
    bpm: Option<f64>,
    #[arg(long, value_name = "N/D")]
    time_signature: Option<String>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[arg(long, value_name = "PATH")]
    chords: PathBuf,
    /// Pad or truncate to this duration instead of the sequence length.
    #[arg(long)]
    duration_s: Option<f64>,
    /// Write CSV instead of JSON.
    #[arg(long)]
    csv: bool,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args, Default)]
struct ChromagramArgs {
    #[arg(long)]
    window_size: Option<usize>,
    #[arg(long)]
    hop: Option<usize>,
    #[arg(long, value_name = "none|max|l2")]
    normalization: Option<String>,
}

#[derive(Debug, Args)]
struct AnalyzeChordsArgs {
    input: PathBuf,
    /// Tempo stamped onto the output sequence.
    #[arg(long)]
    bpm: Option<f64>,
    /// Comma-separated chord qualities of the template bank.
    #[arg(long, value_name = "LIST")]
    qualities: Option<String>,
    #[arg(long)]
    min_confidence: Option<f64>,
    #[arg(long)]
    smoothing_window: Option<usize>,
    #[arg(long)]
    min_segment_s: Option<f64>,
    /// Also write the chromagram (chroma-matrix/v1) here.
    #[arg(long, value_name = "PATH")]
    chroma_out: Option<PathBuf>,
    #[command(flatten)]
    chromagram: ChromagramArgs,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args, Default)]
struct BeatArgs {
    #[arg(long)]
    min_bpm: Option<f64>,
    #[arg(long)]
    max_bpm: Option<f64>,
    #[arg(long)]
    beats_per_bar: Option<u32>,
}

#[derive(Debug, Args)]
struct BeatsArgs {
    input: PathBuf,
    #[command(flatten)]
    beat: BeatArgs,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args, Default)]
struct WsolaArgs {
    #[arg(long)]
    frame_len: Option<usize>,
    #[arg(long)]
    synthesis_hop: Option<usize>,
    #[arg(long)]
    search_tolerance: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
enum DepthArg {
    #[default]
    Pcm16,
    Float32,
}

impl From<DepthArg> for BitDepth {
    fn from(d: DepthArg) -> Self {
        match d {
            DepthArg::Pcm16 => BitDepth::Pcm16,
            DepthArg::Float32 => BitDepth::Float32,
        }
    }
}

#[derive(Debug, Args)]
struct AlignArgs {
    input: PathBuf,
    /// Uniform stretch ratio (output length / input length).
    #[arg(long, conflicts_with_all = ["from", "to"])]
    ratio: Option<f64>,
    /// Beat grid of the input.
    #[arg(long, value_name = "PATH", requires = "to")]
    from: Option<PathBuf>,
    /// Beat grid whose downbeats the output should follow.
    #[arg(long, value_name = "PATH", requires = "from")]
    to: Option<PathBuf>,
    #[command(flatten)]
    wsola: WsolaArgs,
    #[arg(long, value_enum)]
    bit_depth: Option<DepthArg>,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Debug, Args, Default)]
struct GainArgs {
    #[arg(long)]
    background_gain: Option<f64>,
    #[arg(long)]
    vocal_gain: Option<f64>,
    #[arg(long)]
    ceiling_dbfs: Option<f64>,
}

#[derive(Debug, Args)]
struct MixArgs {
    /// Generated background track.
    #[arg(long, value_name = "PATH")]
    generated: PathBuf,
    /// Instrumental stem (or full mix) of the input.
    #[arg(long, value_name = "PATH")]
    instrumental: PathBuf,
    #[arg(long, value_name = "PATH")]
    vocals: Option<PathBuf>,
    /// Beat grid of the generated track; estimated when omitted.
    #[arg(long, value_name = "PATH")]
    generated_grid: Option<PathBuf>,
    /// Beat grid of the input; estimated when omitted.
    #[arg(long, value_name = "PATH")]
    input_grid: Option<PathBuf>,
    #[command(flatten)]
    gains: GainArgs,
    #[command(flatten)]
    wsola: WsolaArgs,
    #[command(flatten)]
    beat: BeatArgs,
    #[arg(long, value_enum)]
    bit_depth: Option<DepthArg>,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum ChordSourceArg {
    Instrumental,
    FullMix,
}

#[derive(Debug, Args)]
struct RemixArgs {
    /// Instrumental stem, or the full mix when no separation is available.
    input: PathBuf,
    #[arg(long, value_name = "PATH")]
    vocals: Option<PathBuf>,
    #[arg(long)]
    prompt: String,
    /// Write the generation request to --out instead of sending it.
    #[arg(long)]
    dry_run: bool,
    #[arg(long, env = ENDPOINT_ENV, value_name = "URL")]
    endpoint: Option<String>,
    #[arg(long, value_name = "SECONDS")]
    timeout_s: Option<u64>,
    #[arg(long, value_enum)]
    chord_source: Option<ChordSourceArg>,
    /// In live mode, also keep the request document here.
    #[arg(long, value_name = "PATH")]
    request_out: Option<PathBuf>,
    #[command(flatten)]
    beat: BeatArgs,
    #[command(flatten)]
    gains: GainArgs,
    #[command(flatten)]
    wsola: WsolaArgs,
    #[arg(long, value_enum)]
    bit_depth: Option<DepthArg>,
    /// Request document (dry run) or final mix WAV.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MelodyArgs {
    input: PathBuf,
    /// Frames quieter than this level stay empty.
    #[arg(long)]
    silence_floor: Option<f64>,
    #[arg(long)]
    csv: bool,
    #[command(flatten)]
    chromagram: ChromagramArgs,
    #[command(flatten)]
    out: OutArg,
}

/// Option values from `--config`. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CliConfig {
    sample_rate: Option<u32>,
    frame_rate: Option<f64>,
    bpm: Option<f64>,
    time_signature: Option<String>,
    window_size: Option<usize>,
    hop: Option<usize>,
    normalization: Option<String>,
    qualities: Option<String>,
    min_confidence: Option<f64>,
    smoothing_window: Option<usize>,
    min_segment_s: Option<f64>,
    min_bpm: Option<f64>,
    max_bpm: Option<f64>,
    beats_per_bar: Option<u32>,
    frame_len: Option<usize>,
    synthesis_hop: Option<usize>,
    search_tolerance: Option<usize>,
    background_gain: Option<f64>,
    vocal_gain: Option<f64>,
    ceiling_dbfs: Option<f64>,
    endpoint: Option<String>,
    timeout_s: Option<u64>,
    chord_source: Option<ChordSourceArg>,
    silence_floor: Option<f64>,
    bit_depth: Option<DepthArg>,
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Io(String),
    Remote(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Io(_) => 2,
            CliError::Remote(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Io(m) | CliError::Remote(m) => m,
        }
    }
}

fn input_err(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

impl From<AudioError> for CliError {
    fn from(e: AudioError) -> Self {
        match e {
            AudioError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<BeatError> for CliError {
    fn from(e: BeatError) -> Self {
        match e {
            BeatError::Audio(a) => a.into(),
            other => input_err(other),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Audio(a) => a.into(),
            other => input_err(other),
        }
    }
}

impl From<TimeWarpError> for CliError {
    fn from(e: TimeWarpError) -> Self {
        match e {
            TimeWarpError::Audio(a) => a.into(),
            other => input_err(other),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match &e.source {
            StageError::Audio(AudioError::Io { .. }) => CliError::Io(e.to_string()),
            _ => input_err(e),
        }
    }
}

impl From<GenerationError> for CliError {
    fn from(e: GenerationError) -> Self {
        match e {
            GenerationError::Format(f) => f.into(),
            other => CliError::Remote(other.to_string()),
        }
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();

    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

struct Settings {
    file: CliConfig,
    sample_rate: Option<u32>,
    frame_rate: Option<f64>,
}

impl Settings {
    fn pipeline_rate(&self) -> u32 {
        self.sample_rate
            .or(self.file.sample_rate)
            .unwrap_or(PipelineConfig::default().sample_rate_hz)
    }

    fn frame_rate(&self) -> f64 {
        self.frame_rate
            .or(self.file.frame_rate)
            .unwrap_or(chroma::DEFAULT_FRAME_RATE_HZ)
    }

    fn chromagram(&self, a: &ChromagramArgs) -> Result<ChromagramConfig, CliError> {
        let d = ChromagramConfig::default();
        let normalization = match a
            .normalization
            .as_ref()
            .or(self.file.normalization.as_ref())
        {
            Some(n) => n.parse::<Normalization>().map_err(CliError::Input)?,
            None => d.normalization,
        };
        let cfg = ChromagramConfig {
            window_size: a
                .window_size
                .or(self.file.window_size)
                .unwrap_or(d.window_size),
            hop: a.hop.or(self.file.hop).unwrap_or(d.hop),
            normalization,
            ..d
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn beat(&self, a: &BeatArgs) -> BeatConfig {
        let d = BeatConfig::default();
        BeatConfig {
            min_bpm: a.min_bpm.or(self.file.min_bpm).unwrap_or(d.min_bpm),
            max_bpm: a.max_bpm.or(self.file.max_bpm).unwrap_or(d.max_bpm),
            beats_per_bar: a
                .beats_per_bar
                .or(self.file.beats_per_bar)
                .unwrap_or(d.beats_per_bar),
            ..d
        }
    }

    fn wsola(&self, a: &WsolaArgs) -> Result<WsolaConfig, CliError> {
        let d = WsolaConfig::default();
        let frame_len = a.frame_len.or(self.file.frame_len).unwrap_or(d.frame_len);
        let cfg = WsolaConfig {
            frame_len,
            synthesis_hop: a
                .synthesis_hop
                .or(self.file.synthesis_hop)
                .unwrap_or(frame_len / 2),
            search_tolerance: a
                .search_tolerance
                .or(self.file.search_tolerance)
                .unwrap_or(d.search_tolerance),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn mix(&self, g: &GainArgs, w: &WsolaArgs) -> Result<MixConfig, CliError> {
        let d = MixConfig::default();
        let cfg = MixConfig {
            wsola: self.wsola(w)?,
            background_gain: g
                .background_gain
                .or(self.file.background_gain)
                .unwrap_or(d.background_gain),
            vocal_gain: g
                .vocal_gain
                .or(self.file.vocal_gain)
                .unwrap_or(d.vocal_gain),
            ceiling_dbfs: g
                .ceiling_dbfs
                .or(self.file.ceiling_dbfs)
                .unwrap_or(d.ceiling_dbfs),
        };
        if !(cfg.ceiling_dbfs <= 0.0) {
            return Err(CliError::Input(format!(
                "ceiling must be <= 0 dBFS, got {}",
                cfg.ceiling_dbfs
            )));
        }
        Ok(cfg)
    }

    fn bit_depth(&self, a: Option<DepthArg>) -> BitDepth {
        a.or(self.file.bit_depth).unwrap_or_default().into()
    }
}

fn load_config(path: Option<&Path>) -> Result<CliConfig, CliError> {
    let Some(path) = path else {
        return Ok(CliConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| CliError::Input(format!("invalid config {}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let settings = Settings {
        file: load_config(cli.config.as_deref())?,
        sample_rate: cli.sample_rate,
        frame_rate: cli.frame_rate,
    };
    match cli.command {
        Command::Parse(a) => parse(&settings, a),
        Command::Encode(a) => encode(&settings, a),
        Command::AnalyzeChords(a) => analyze_chords(&settings, a),
        Command::Beats(a) => beats(&settings, a),
        Command::Align(a) => align(&settings, a),
        Command::Mix(a) => mix(&settings, a),
        Command::Remix(a) => remix_cmd(&settings, a),
        Command::Melody(a) => melody(&settings, a),
    }
}

fn emit(text: &str, out: &OutArg) -> Result<(), CliError> {
    match &out.out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_input(path: &Path, rate: u32) -> Result<AudioBuffer, CliError> {
    let buf = audio::read_wav(path)?;
    Ok(audio::resample_linear(&buf, rate)?)
}

fn parse(s: &Settings, a: ParseArgs) -> Result<(), CliError> {
    let bpm = a
        .bpm
        .or(s.file.bpm)
        .unwrap_or(RecognitionConfig::default().bpm);
    let ts = match a.time_signature.as_ref().or(s.file.time_signature.as_ref()) {
        Some(t) => t.parse::<TimeSignature>().map_err(input_err)?,
        None => TimeSignature::default(),
    };
    let seq = chord_syntax::parse_progression(&a.progression, bpm, ts).map_err(input_err)?;
    info!(
        "{} events, {:.3} s",
        seq.events().len(),
        seq.total_duration_s()
    );
    emit(&seq.to_json()?, &a.out)
}

fn matrix_text(m: &ChromaMatrix, csv: bool) -> Result<String, CliError> {
    Ok(if csv { m.to_csv() } else { m.to_json()? })
}

fn encode(s: &Settings, a: EncodeArgs) -> Result<(), CliError> {
    let seq = ChordSequence::read(&a.chords)?;
    let m = chroma::render_matrix(&seq, s.frame_rate(), a.duration_s).map_err(input_err)?;
    info!("{} frames at {} Hz", m.len(), m.frame_rate_hz());
    emit(&matrix_text(&m, a.csv)?, &a.out)
}

fn analyze_chords(s: &Settings, a: AnalyzeChordsArgs) -> Result<(), CliError> {
    let d = RecognitionConfig::default();
    let qualities = match a.qualities.as_ref().or(s.file.qualities.as_ref()) {
        Some(list) => list
            .split(',')
            .map(|q| {
                ChordQuality::from_name(q.trim())
                    .ok_or_else(|| CliError::Input(format!("unknown chord quality {q:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?,
        None => d.qualities.clone(),
    };
    let cfg = RecognitionConfig {
        qualities,
        smoothing_window: a
            .smoothing_window
            .or(s.file.smoothing_window)
            .unwrap_or(d.smoothing_window),
        min_confidence: a
            .min_confidence
            .or(s.file.min_confidence)
            .unwrap_or(d.min_confidence),
        min_segment_s: a
            .min_segment_s
            .or(s.file.min_segment_s)
            .unwrap_or(d.min_segment_s),
        bpm: a.bpm.or(s.file.bpm).unwrap_or(d.bpm),
        time_signature: d.time_signature,
    };
    cfg.validate()?;
    let buf = read_input(&a.input, s.pipeline_rate())?;
    let gram = chroma_analysis::compute_chromagram(&buf, &s.chromagram(&a.chromagram)?)?;
    if let Some(path) = &a.chroma_out {
        chroma::write_matrix(gram.chroma(), path)?;
    }
    let seq = chroma_analysis::recognize_chords(gram.chroma(), &cfg.bank(), &cfg)?;
    info!("{} chord segments", seq.events().len());
    emit(&seq.to_json()?, &a.out)
}

fn beats(s: &Settings, a: BeatsArgs) -> Result<(), CliError> {
    let buf = read_input(&a.input, s.pipeline_rate())?;
    let grid = beat::analyze_beats(&buf, &s.beat(&a.beat))?;
    info!(
        "{:.2} BPM, {} beats, {} downbeats",
        grid.bpm(),
        grid.beats_s().len(),
        grid.downbeats_s().len()
    );
    emit(&grid.to_json()?, &a.out)
}

fn align(s: &Settings, a: AlignArgs) -> Result<(), CliError> {
    let cfg = s.wsola(&a.wsola)?;
    let buf = audio::read_wav(&a.input)?;
    let out = match (a.ratio, &a.from, &a.to) {
        (Some(r), _, _) => time_warp::wsola_stretch(&buf, r, &cfg)?,
        (None, Some(from), Some(to)) => {
            let anchors =
                time_warp::build_anchor_map(&BeatGrid::read(from)?, &BeatGrid::read(to)?)?;
            time_warp::align_to_anchors(&buf, &anchors, &cfg)?
        }
        _ => {
            return Err(CliError::Input(
                "align needs --ratio or both --from and --to".into(),
            ))
        }
    };
    info!("{:.3} s -> {:.3} s", buf.duration_s(), out.duration_s());
    Ok(audio::write_wav(&out, &a.out, s.bit_depth(a.bit_depth))?)
}

fn mix(s: &Settings, a: MixArgs) -> Result<(), CliError> {
    let rate = s.pipeline_rate();
    let instrumental = read_input(&a.instrumental, rate)?;
    let vocals = a
        .vocals
        .as_deref()
        .map(|p| read_input(p, rate))
        .transpose()?;
    let generated = audio::read_wav(&a.generated)?;
    let beat_cfg = s.beat(&a.beat);
    let input_grid = match &a.input_grid {
        Some(p) => BeatGrid::read(p)?,
        None => beat::analyze_beats(&instrumental, &beat_cfg)?,
    };
    let generated_grid = match &a.generated_grid {
        Some(p) => BeatGrid::read(p)?,
        None => {
            let cfg = PipelineConfig {
                beat: beat_cfg,
                ..PipelineConfig::default()
            };
            remix::analyze_generated(&generated, input_grid.bpm(), &cfg)?
        }
    };
    let stems = StemSet::new(instrumental, vocals);
    let out = remix::finalize_remix(
        &generated,
        &stems,
        &generated_grid,
        &input_grid,
        &s.mix(&a.gains, &a.wsola)?,
    )?;
    Ok(audio::write_wav(&out, &a.out, s.bit_depth(a.bit_depth))?)
}

fn remix_cmd(s: &Settings, a: RemixArgs) -> Result<(), CliError> {
    let mut cfg = PipelineConfig {
        sample_rate_hz: s.pipeline_rate(),
        frame_rate_hz: s.frame_rate(),
        beat: s.beat(&a.beat),
        mix: s.mix(&a.gains, &a.wsola)?,
        ..PipelineConfig::default()
    };
    if let Some(src) = a.chord_source.or(s.file.chord_source) {
        cfg.chord_source = match src {
            ChordSourceArg::Instrumental => ChordSource::Instrumental,
            ChordSourceArg::FullMix => ChordSource::FullMix,
        };
    }
    let instrumental = audio::read_wav(&a.input)?;
    let vocals = a.vocals.as_deref().map(audio::read_wav).transpose()?;
    let stems = StemSet::new(instrumental, vocals);
    let bundle = remix::prepare_conditioning(&stems, &a.prompt, &cfg)?;
    info!(
        "{:.2} BPM, {} chord segments, {} chroma frames",
        bundle.beat_grid.bpm(),
        bundle.chords.events().len(),
        bundle.chroma.len()
    );
    let request = GenerationRequest::from_bundle(&bundle);

    if a.dry_run {
        remix::request_generation(
            &request,
            &GenerationMode::DryRun {
                path: a.out.clone(),
            },
        )?;
        return Ok(());
    }
    let endpoint = a
        .endpoint
        .or_else(|| s.file.endpoint.clone())
        .ok_or_else(|| {
            CliError::Input(format!(
                "no endpoint: pass --endpoint or set {ENDPOINT_ENV}, or use --dry-run"
            ))
        })?;
    if let Some(path) = &a.request_out {
        request.write(path)?;
    }
    let timeout = Duration::from_secs(
        a.timeout_s
            .or(s.file.timeout_s)
            .unwrap_or(DEFAULT_TIMEOUT_S),
    );
    let generated =
        match remix::request_generation(&request, &GenerationMode::Live { endpoint, timeout })? {
            GenerationOutcome::Audio(buf) => buf,
            GenerationOutcome::RequestWritten(_) => unreachable!("live mode returns audio"),
        };
    let generated_grid = remix::analyze_generated(&generated, request.bpm, &cfg)?;
    let ingested = stems.ingest(cfg.sample_rate_hz)?;
    let out = remix::finalize_remix(
        &generated,
        &ingested,
        &generated_grid,
        &bundle.beat_grid,
        &cfg.mix,
    )?;
    Ok(audio::write_wav(&out, &a.out, s.bit_depth(a.bit_depth))?)
}

fn melody(s: &Settings, a: MelodyArgs) -> Result<(), CliError> {
    let buf = read_input(&a.input, s.pipeline_rate())?;
    let gram = chroma_analysis::compute_chromagram(&buf, &s.chromagram(&a.chromagram)?)?;
    let floor = a
        .silence_floor
        .or(s.file.silence_floor)
        .unwrap_or(DEFAULT_SILENCE_FLOOR);
    let m = chroma_analysis::melody_one_hot(&gram, floor);
    emit(&matrix_text(&m, a.csv)?, &a.out)
}
