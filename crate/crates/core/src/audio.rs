//! Audio buffers, WAV I/O, resampling and short-time Fourier analysis.

use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("sample rate must be positive")]
    InvalidSampleRate,
    #[error("audio must have at least one channel")]
    NoChannels,
    #[error("channel {channel} has {len} samples, expected {expected}")]
    ChannelLength {
        channel: usize,
        len: usize,
        expected: usize,
    },
    #[error("unsupported WAV encoding: {0}")]
    Unsupported(String),
    #[error("truncated WAV file")]
    Truncated,
    #[error("malformed WAV file: {0}")]
    Malformed(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("window size must be a power of two, got {0}")]
    InvalidWindow(usize),
    #[error("hop must be in 1..={window}, got {hop}")]
    InvalidHop { hop: usize, window: usize },
    #[error("expected mono audio, got {0} channels")]
    NotMono(usize),
}

/// Planar float audio. Samples are nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    sample_rate_hz: u32,
    channels: Vec<Vec<f32>>,
}

impl AudioBuffer {
    pub fn new(sample_rate_hz: u32, channels: Vec<Vec<f32>>) -> Result<Self, AudioError> {
        if sample_rate_hz == 0 {
            return Err(AudioError::InvalidSampleRate);
        }
        let expected = channels.first().ok_or(AudioError::NoChannels)?.len();
        if let Some((channel, c)) = channels
            .iter()
            .enumerate()
            .find(|(_, c)| c.len() != expected)
        {
            return Err(AudioError::ChannelLength {
                channel,
                len: c.len(),
                expected,
            });
        }
        Ok(AudioBuffer {
            sample_rate_hz,
            channels,
        })
    }

    pub fn mono(sample_rate_hz: u32, samples: Vec<f32>) -> Result<Self, AudioError> {
        Self::new(sample_rate_hz, vec![samples])
    }

    pub fn silence(sample_rate_hz: u32, channels: usize, len: usize) -> Result<Self, AudioError> {
        Self::new(sample_rate_hz, vec![vec![0.0; len]; channels.max(1)])
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[Vec<f32>] {
        &self.channels
    }

    pub fn channel(&self, i: usize) -> &[f32] {
        &self.channels[i]
    }

    pub fn into_channels(self) -> Vec<Vec<f32>> {
        self.channels
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn peak(&self) -> f32 {
        self.channels
            .iter()
            .flatten()
            .fold(0.0f32, |m, s| m.max(s.abs()))
    }

    pub fn map_samples(&self, mut f: impl FnMut(f32) -> f32) -> Self {
        AudioBuffer {
            sample_rate_hz: self.sample_rate_hz,
            channels: self
                .channels
                .iter()
                .map(|c| c.iter().map(|&s| f(s)).collect())
                .collect(),
        }
    }

    /// Zero-pads or truncates every channel to `len` samples.
    pub fn with_len(mut self, len: usize) -> Self {
        for c in &mut self.channels {
            c.resize(len, 0.0);
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Pcm16,
    Float32,
}

fn map_hound(path: &Path, err: hound::Error) -> AudioError {
    match err {
        // hound reports a short data chunk as a custom `Other` error.
        hound::Error::IoError(e)
            if e.kind() == io::ErrorKind::UnexpectedEof
                || e.to_string().contains("enough bytes") =>
        {
            AudioError::Truncated
        }
        hound::Error::IoError(source) => AudioError::Io {
            path: path.to_path_buf(),
            source,
        },
        hound::Error::Unsupported => AudioError::Unsupported("codec or sample layout".into()),
        hound::Error::TooWide => AudioError::Unsupported("sample width".into()),
        hound::Error::FormatError(msg) => AudioError::Malformed(msg.to_string()),
        other => AudioError::Malformed(other.to_string()),
    }
}

/// Reads a PCM 16-bit or IEEE float 32-bit WAV file.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    decode(reader, path)
}

/// Decodes WAV bytes held in memory.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer, AudioError> {
    let here = Path::new("<memory>");
    let reader = hound::WavReader::new(io::Cursor::new(bytes)).map_err(|e| map_hound(here, e))?;
    decode(reader, here)
}

fn decode<R: io::Read>(
    reader: hound::WavReader<R>,
    path: &Path,
) -> Result<AudioBuffer, AudioError> {
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(AudioError::NoChannels);
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (format, bits) => return Err(AudioError::Unsupported(format!("{format:?} {bits}-bit"))),
    };
    if !interleaved.len().is_multiple_of(channels) {
        return Err(AudioError::Truncated);
    }
    let mut planar = vec![Vec::with_capacity(interleaved.len() / channels); channels];
    for frame in interleaved.chunks_exact(channels) {
        for (c, &s) in frame.iter().enumerate() {
            planar[c].push(s);
        }
    }
    AudioBuffer::new(spec.sample_rate, planar)
}

/// Writes the buffer as WAV. Samples are clamped to `[-1, 1]`; 16-bit
/// quantization truncates toward zero so it never raises a peak.
pub fn write_wav(
    buffer: &AudioBuffer,
    path: impl AsRef<Path>,
    depth: BitDepth,
) -> Result<(), AudioError> {
    let path = path.as_ref();
    let bytes = encode_wav(buffer, depth)?;
    std::fs::write(path, bytes).map_err(|source| AudioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Encodes the buffer as an in-memory WAV file.
pub fn encode_wav(buffer: &AudioBuffer, depth: BitDepth) -> Result<Vec<u8>, AudioError> {
    let (bits, format) = match depth {
        BitDepth::Pcm16 => (16, hound::SampleFormat::Int),
        BitDepth::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = hound::WavSpec {
        channels: buffer.num_channels() as u16,
        sample_rate: buffer.sample_rate_hz(),
        bits_per_sample: bits,
        sample_format: format,
    };
    let mut cursor = io::Cursor::new(Vec::new());
    let here = Path::new("<memory>");
    {
        let mut writer =
            hound::WavWriter::new(&mut cursor, spec).map_err(|e| map_hound(here, e))?;
        for i in 0..buffer.len() {
            for c in buffer.channels() {
                let s = c[i].clamp(-1.0, 1.0);
                match depth {
                    BitDepth::Pcm16 => {
                        writer.write_sample((s * 32768.0).trunc().clamp(-32768.0, 32767.0) as i16)
                    }
                    BitDepth::Float32 => writer.write_sample(s),
                }
                .map_err(|e| map_hound(here, e))?;
            }
        }
        writer.finalize().map_err(|e| map_hound(here, e))?;
    }
    Ok(cursor.into_inner())
}

/// Arithmetic mean of all channels.
pub fn to_mono(buffer: &AudioBuffer) -> AudioBuffer {
    if buffer.num_channels() == 1 {
        return buffer.clone();
    }
    let n = buffer.num_channels() as f32;
    let samples = (0..buffer.len())
        .map(|i| buffer.channels().iter().map(|c| c[i]).sum::<f32>() / n)
        .collect();
    AudioBuffer {
        sample_rate_hz: buffer.sample_rate_hz,
        channels: vec![samples],
    }
}

/// Linear-interpolation resampling; output length is
/// `round(len * target / source)`.
pub fn resample_linear(
    buffer: &AudioBuffer,
    target_rate_hz: u32,
) -> Result<AudioBuffer, AudioError> {
    if target_rate_hz == 0 {
        return Err(AudioError::InvalidSampleRate);
    }
    let source = buffer.sample_rate_hz;
    if source == target_rate_hz {
        return Ok(buffer.clone());
    }
    let step = source as f64 / target_rate_hz as f64;
    let out_len = (buffer.len() as f64 * target_rate_hz as f64 / source as f64).round() as usize;
    let channels = buffer
        .channels
        .iter()
        .map(|x| {
            if x.is_empty() {
                return vec![0.0; out_len];
            }
            let last = x.len() - 1;
            (0..out_len)
                .map(|i| {
                    let pos = i as f64 * step;
                    let i0 = (pos.floor() as usize).min(last);
                    let i1 = (i0 + 1).min(last);
                    let frac = (pos - i0 as f64).clamp(0.0, 1.0);
                    (x[i0] as f64 * (1.0 - frac) + x[i1] as f64 * frac) as f32
                })
                .collect()
        })
        .collect();
    AudioBuffer::new(target_rate_hz, channels)
}

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Magnitude spectra of Hann-windowed frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    sample_rate_hz: u32,
    window_size: usize,
    hop: usize,
    magnitudes: Vec<Vec<f64>>,
}

impl Spectrogram {
    pub fn frame_rate_hz(&self) -> f64 {
        self.sample_rate_hz as f64 / self.hop as f64
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate_hz as f64 / self.window_size as f64
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn num_bins(&self) -> usize {
        self.window_size / 2 + 1
    }

    /// Frames × (window_size / 2 + 1) magnitudes.
    pub fn magnitudes(&self) -> &[Vec<f64>] {
        &self.magnitudes
    }

    pub fn num_frames(&self) -> usize {
        self.magnitudes.len()
    }

    /// Time of the center of frame `k`'s analysis window.
    pub fn frame_center_s(&self, k: usize) -> f64 {
        (k * self.hop) as f64 / self.sample_rate_hz as f64
            + self.window_size as f64 / (2.0 * self.sample_rate_hz as f64)
    }
}

/// Reusable forward FFT with a fixed Hann window.
pub(crate) struct FrameAnalyzer {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    scratch: Vec<Complex<f64>>,
    buf: Vec<Complex<f64>>,
}

impl FrameAnalyzer {
    pub(crate) fn new(window_size: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(window_size);
        let scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        FrameAnalyzer {
            fft,
            window: hann(window_size),
            scratch,
            buf: vec![Complex::default(); window_size],
        }
    }

    pub(crate) fn magnitudes(&mut self, frame: &[f32]) -> Vec<f64> {
        for ((b, &x), &w) in self.buf.iter_mut().zip(frame).zip(&self.window) {
            *b = Complex::new(x as f64 * w, 0.0);
        }
        self.fft
            .process_with_scratch(&mut self.buf, &mut self.scratch);
        self.buf[..self.window.len() / 2 + 1]
            .iter()
            .map(|c| c.norm())
            .collect()
    }
}

pub(crate) fn check_frames(
    len: usize,
    window_size: usize,
    hop: usize,
) -> Result<usize, AudioError> {
    if window_size == 0 || !window_size.is_power_of_two() {
        return Err(AudioError::InvalidWindow(window_size));
    }
    if hop == 0 || hop > window_size {
        return Err(AudioError::InvalidHop {
            hop,
            window: window_size,
        });
    }
    if len < window_size {
        return Err(AudioError::TooShort {
            needed: window_size,
            got: len,
        });
    }
    Ok((len - window_size) / hop + 1)
}

pub(crate) fn stft_samples(
    samples: &[f32],
    sample_rate_hz: u32,
    window_size: usize,
    hop: usize,
) -> Result<Spectrogram, AudioError> {
    let frames = check_frames(samples.len(), window_size, hop)?;
    let mut analyzer = FrameAnalyzer::new(window_size);
    let magnitudes = (0..frames)
        .map(|k| analyzer.magnitudes(&samples[k * hop..k * hop + window_size]))
        .collect();
    Ok(Spectrogram {
        sample_rate_hz,
        window_size,
        hop,
        magnitudes,
    })
}

/// Hann-windowed magnitude STFT without edge padding; yields
/// `floor((len - window_size) / hop) + 1` frames.
pub fn stft(
    buffer: &AudioBuffer,
    window_size: usize,
    hop: usize,
) -> Result<Spectrogram, AudioError> {
    if buffer.num_channels() != 1 {
        return Err(AudioError::NotMono(buffer.num_channels()));
    }
    stft_samples(buffer.channel(0), buffer.sample_rate_hz, window_size, hop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use proptest::prelude::*;

    fn peak_bin(spec: &Spectrogram, frame: usize) -> usize {
        let m = &spec.magnitudes()[frame];
        (0..m.len()).fold(0, |b, i| if m[i] > m[b] { i } else { b })
    }

    #[test]
    fn rejects_ragged_channels() {
        assert!(matches!(
            AudioBuffer::new(44100, vec![vec![0.0; 3], vec![0.0; 2]]),
            Err(AudioError::ChannelLength { channel: 1, .. })
        ));
        assert!(matches!(
            AudioBuffer::new(0, vec![vec![]]),
            Err(AudioError::InvalidSampleRate)
        ));
        assert!(matches!(
            AudioBuffer::new(8000, vec![]),
            Err(AudioError::NoChannels)
        ));
    }

    #[test]
    fn float_wav_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let buf = synth::sine(440.0, 0.8, 1.0, 44100);
        write_wav(&buf, &path, BitDepth::Float32).unwrap();
        assert_eq!(read_wav(&path).unwrap(), buf);
    }

    #[test]
    fn pcm16_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let left = synth::sine(440.0, 1.0, 0.5, 22050)
            .into_channels()
            .remove(0);
        let right: Vec<f32> = left.iter().map(|s| -s * 0.3).collect();
        let buf = AudioBuffer::new(22050, vec![left, right]).unwrap();
        write_wav(&buf, &path, BitDepth::Pcm16).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.num_channels(), 2);
        let err = buf
            .channels()
            .iter()
            .flatten()
            .zip(back.channels().iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(err <= 2f32.powi(-15), "{err}");
    }

    #[test]
    fn pcm16_never_raises_magnitude() {
        let xs = vec![0.891_250_9f32, -0.891_250_9, 0.3, -0.7, 1e-6];
        let back = decode_wav(
            &encode_wav(
                &AudioBuffer::mono(8000, xs.clone()).unwrap(),
                BitDepth::Pcm16,
            )
            .unwrap(),
        )
        .unwrap();
        for (a, b) in xs.iter().zip(back.channel(0)) {
            assert!(b.abs() <= a.abs() && (a - b).abs() < 2f32.powi(-15));
        }
    }

    #[test]
    fn full_scale_pcm16_edges() {
        let buf = AudioBuffer::mono(8000, vec![1.0, -1.0, 0.0]).unwrap();
        let back = decode_wav(&encode_wav(&buf, BitDepth::Pcm16).unwrap()).unwrap();
        assert_eq!(back.channel(0), &[32767.0 / 32768.0, -1.0, 0.0]);
    }

    fn patch_format_tag(bytes: &mut [u8], tag: u16) {
        let fmt = bytes.windows(4).position(|w| w == b"fmt ").unwrap();
        bytes[fmt + 8..fmt + 10].copy_from_slice(&tag.to_le_bytes());
    }

    #[test]
    fn rejects_compressed_codec() {
        let buf = synth::sine(440.0, 0.5, 0.1, 8000);
        let mut bytes = encode_wav(&buf, BitDepth::Pcm16).unwrap();
        patch_format_tag(&mut bytes, 0x0055);
        assert!(matches!(
            decode_wav(&bytes),
            Err(AudioError::Unsupported(_))
        ));
    }

    #[test]
    fn rejects_truncated_file() {
        let buf = synth::sine(440.0, 0.5, 0.1, 8000);
        let bytes = encode_wav(&buf, BitDepth::Pcm16).unwrap();
        let cut = &bytes[..bytes.len() - 101];
        assert!(
            matches!(decode_wav(cut), Err(AudioError::Truncated)),
            "{:?}",
            decode_wav(cut)
        );
        assert!(decode_wav(&bytes[..20]).is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            read_wav("/nonexistent/x.wav"),
            Err(AudioError::Io { .. })
        ));
    }

    #[test]
    fn mono_mixdown() {
        let x: Vec<f32> = (0..100).map(|i| (i as f32 * 0.1).sin()).collect();
        let same = AudioBuffer::new(100, vec![x.clone(), x.clone()]).unwrap();
        assert_eq!(to_mono(&same).channel(0), &x[..]);
        let neg: Vec<f32> = x.iter().map(|v| -v).collect();
        let cancel = AudioBuffer::new(100, vec![x.clone(), neg]).unwrap();
        assert!(to_mono(&cancel).channel(0).iter().all(|&v| v == 0.0));
        let mono = AudioBuffer::mono(100, x).unwrap();
        assert_eq!(to_mono(&mono), mono);
    }

    #[test]
    fn resample_lengths() {
        let buf = synth::sine(440.0, 0.5, 1.0, 44100);
        assert_eq!(resample_linear(&buf, 44100).unwrap(), buf);
        assert_eq!(resample_linear(&buf, 22050).unwrap().len(), 22050);
        assert!(resample_linear(&buf, 0).is_err());
    }

    #[test]
    fn resampled_tone_keeps_its_bin() {
        let buf = synth::sine(440.0, 0.5, 1.0, 44100);
        let up = resample_linear(&buf, 48000).unwrap();
        let spec = stft(&up, 4096, 1024).unwrap();
        let expected = (440.0f64 * 4096.0 / 48000.0).round() as usize;
        assert_eq!(expected, 38);
        for k in 0..spec.num_frames() {
            assert_eq!(peak_bin(&spec, k), expected);
        }
    }

    #[test]
    fn sine_peaks_at_analytic_bin() {
        let buf = synth::sine(440.0, 0.5, 1.0, 44100);
        let spec = stft(&buf, 4096, 2048).unwrap();
        assert_eq!(spec.num_frames(), (44100 - 4096) / 2048 + 1);
        for k in 0..spec.num_frames() {
            assert_eq!(peak_bin(&spec, k), 41);
        }
    }

    #[test]
    fn stft_edge_cases() {
        let zeros = AudioBuffer::mono(8000, vec![0.0; 2048]).unwrap();
        let spec = stft(&zeros, 512, 128).unwrap();
        assert!(spec.magnitudes().iter().flatten().all(|&m| m == 0.0));
        let exact = AudioBuffer::mono(8000, vec![0.1; 1024]).unwrap();
        for hop in [1, 100, 1024] {
            assert_eq!(stft(&exact, 1024, hop).unwrap().num_frames(), 1);
        }
        assert!(matches!(
            stft(&exact, 2048, 512),
            Err(AudioError::TooShort { .. })
        ));
        assert!(matches!(
            stft(&exact, 1000, 500),
            Err(AudioError::InvalidWindow(1000))
        ));
        assert!(matches!(
            stft(&exact, 512, 0),
            Err(AudioError::InvalidHop { .. })
        ));
        assert!(matches!(
            stft(&exact, 512, 513),
            Err(AudioError::InvalidHop { .. })
        ));
        let stereo = AudioBuffer::new(8000, vec![vec![0.0; 1024]; 2]).unwrap();
        assert!(matches!(
            stft(&stereo, 512, 256),
            Err(AudioError::NotMono(2))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn windowed_sine_energy_is_concentrated(freq in 100.0f64..3000.0, phase in 0.0f64..std::f64::consts::TAU) {
            let sr = 16000;
            let samples: Vec<f32> = (0..2048)
                .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64 + phase).sin() as f32)
                .collect();
            let buf = AudioBuffer::mono(sr, samples).unwrap();
            let spec = stft(&buf, 2048, 2048).unwrap();
            let mags = &spec.magnitudes()[0];
            let analytic = (freq * 2048.0 / sr as f64).round() as usize;
            let total: f64 = mags.iter().map(|m| m * m).sum();
            let near: f64 = mags[analytic.saturating_sub(2)..=(analytic + 2).min(mags.len() - 1)]
                .iter()
                .map(|m| m * m)
                .sum();
            prop_assert!(near >= 0.9 * total, "{near} / {total}");
        }

        #[test]
        fn resample_round_trip_is_close(freq in 50.0f64..1000.0, target in prop::sample::select(vec![32000u32, 48000, 88200])) {
            let src = 44100;
            let buf = synth::sine(freq, 0.9, 0.2, src);
            let there = resample_linear(&buf, target).unwrap();
            let back = resample_linear(&there, src).unwrap();
            let n = back.len().min(buf.len()) - 2;
            for i in 0..n {
                prop_assert!((back.channel(0)[i] - buf.channel(0)[i]).abs() <= 1e-2);
            }
        }

        #[test]
        fn stft_is_deterministic(seed in 0u64..1000) {
            let samples: Vec<f32> = (0..4096).map(|i| (((i as u64 * 2654435761 + seed) % 1000) as f32 / 500.0) - 1.0).collect();
            let buf = AudioBuffer::mono(44100, samples).unwrap();
            prop_assert_eq!(stft(&buf, 1024, 256).unwrap(), stft(&buf, 1024, 256).unwrap());
        }
    }
}
