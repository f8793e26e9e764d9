//! WSOLA time-scale modification and downbeat-anchored alignment.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::audio::{self, AudioBuffer, AudioError};
use crate::beat::BeatGrid;

pub const MIN_RATIO: f64 = 0.25;
pub const MAX_RATIO: f64 = 4.0;

#[derive(Debug, Error)]
pub enum TimeWarpError {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("stretch ratio {0} is outside [{MIN_RATIO}, {MAX_RATIO}]")]
    RatioOutOfRange(f64),
    #[error("need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("invalid WSOLA configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid anchor map: {0}")]
    InvalidAnchors(String),
    #[error("last source anchor {anchor_s:.3} s is past the end of the audio ({duration_s:.3} s)")]
    AnchorPastEnd { anchor_s: f64, duration_s: f64 },
    #[error("{0} beat grid has no downbeats")]
    NoDownbeats(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WsolaConfig {
    pub frame_len: usize,
    pub synthesis_hop: usize,
    pub search_tolerance: usize,
}

impl Default for WsolaConfig {
    fn default() -> Self {
        WsolaConfig {
            frame_len: 1024,
            synthesis_hop: 512,
            search_tolerance: 512,
        }
    }
}

impl WsolaConfig {
    pub fn validate(&self) -> Result<(), TimeWarpError> {
        if self.frame_len == 0 || self.synthesis_hop == 0 || self.synthesis_hop > self.frame_len {
            return Err(TimeWarpError::InvalidConfig(format!(
                "need 0 < synthesis_hop ({}) <= frame_len ({})",
                self.synthesis_hop, self.frame_len
            )));
        }
        Ok(())
    }
}

fn check_ratio(ratio: f64) -> Result<(), TimeWarpError> {
    if !(MIN_RATIO..=MAX_RATIO).contains(&ratio) {
        return Err(TimeWarpError::RatioOutOfRange(ratio));
    }
    Ok(())
}

/// Stretches `buffer` to `round(len * ratio)` samples without changing pitch.
///
/// Multichannel input shares one set of frame offsets, chosen on the mono
/// downmix, so channels stay phase-aligned.
pub fn wsola_stretch(
    buffer: &AudioBuffer,
    ratio: f64,
    config: &WsolaConfig,
) -> Result<AudioBuffer, TimeWarpError> {
    config.validate()?;
    check_ratio(ratio)?;
    if buffer.len() < config.frame_len {
        return Err(TimeWarpError::TooShort {
            needed: config.frame_len,
            got: buffer.len(),
        });
    }
    let out_len = (buffer.len() as f64 * ratio).round() as usize;
    stretch_to_len(buffer, out_len, config)
}

fn stretch_to_len(
    buffer: &AudioBuffer,
    out_len: usize,
    config: &WsolaConfig,
) -> Result<AudioBuffer, TimeWarpError> {
    if out_len == buffer.len() {
        return Ok(buffer.clone());
    }
    let scale = buffer.len() as f64 / out_len as f64;
    stretch_along(buffer, out_len, config, &|n| n * scale)
}

/// Frame-offset search and overlap-add, with `source_of` giving the input
/// position of every output position. No range checks.
fn stretch_along(
    buffer: &AudioBuffer,
    out_len: usize,
    config: &WsolaConfig,
    source_of: &dyn Fn(f64) -> f64,
) -> Result<AudioBuffer, TimeWarpError> {
    let mono = audio::to_mono(buffer);
    let starts = Searcher::new(config).analysis_starts(mono.channel(0), out_len, source_of);
    let window = audio::hann(config.frame_len);
    let channels = buffer
        .channels()
        .iter()
        .map(|x| {
            let mut num = vec![0.0f64; out_len];
            let mut den = vec![0.0f64; out_len];
            for (m, &a) in starts.iter().enumerate() {
                let out0 = m * config.synthesis_hop;
                for (i, w) in window.iter().enumerate() {
                    let Some(slot) = num.get_mut(out0 + i) else {
                        break;
                    };
                    *slot += w * sample(x, a + i as isize);
                    den[out0 + i] += w;
                }
            }
            (0..out_len)
                .map(|n| {
                    if den[n] > 1e-9 {
                        (num[n] / den[n]) as f32
                    } else {
                        let src = source_of(n as f64).round() as isize;
                        sample(x, src) as f32
                    }
                })
                .collect()
        })
        .collect();
    Ok(AudioBuffer::new(buffer.sample_rate_hz(), channels)?)
}

fn sample(x: &[f32], i: isize) -> f64 {
    usize::try_from(i)
        .ok()
        .and_then(|i| x.get(i))
        .map_or(0.0, |&v| v as f64)
}

struct Searcher {
    frame_len: usize,
    hop: usize,
    tolerance: usize,
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Searcher {
    fn new(config: &WsolaConfig) -> Self {
        let size = (config.frame_len + 2 * config.search_tolerance).next_power_of_two();
        let mut planner = FftPlanner::new();
        Searcher {
            frame_len: config.frame_len,
            hop: config.synthesis_hop,
            tolerance: config.search_tolerance,
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        }
    }

    /// Input start position of every synthesis frame. Frame `m` is written at
    /// `m * hop`; its nominal input position is `source_of(m * hop)`, refined
    /// by the offset within the tolerance that best matches the natural
    /// continuation of the previous frame.
    fn analysis_starts(
        &self,
        x: &[f32],
        out_len: usize,
        source_of: &dyn Fn(f64) -> f64,
    ) -> Vec<isize> {
        let frames = out_len.div_ceil(self.hop).max(1);
        let mut starts = Vec::with_capacity(frames);
        starts.push(0isize);
        for m in 1..frames {
            let nominal = source_of((m * self.hop) as f64).round() as isize;
            let continuation = starts[m - 1] + self.hop as isize;
            starts.push(nominal + self.best_offset(x, nominal, continuation));
        }
        starts
    }

    /// Offset in `[-tolerance, tolerance]` maximizing the cross-correlation
    /// of the candidate frame with the template. Ties prefer zero, then the
    /// more negative offset.
    fn best_offset(&self, x: &[f32], nominal: isize, continuation: isize) -> isize {
        if self.tolerance == 0 {
            return 0;
        }
        let tol = self.tolerance as isize;
        let region_start = nominal - tol;
        let region_len = self.frame_len + 2 * self.tolerance;
        let mut region: Vec<Complex<f64>> = (0..self.size)
            .map(|i| {
                let v = if i < region_len {
                    sample(x, region_start + i as isize)
                } else {
                    0.0
                };
                Complex::new(v, 0.0)
            })
            .collect();
        let mut template: Vec<Complex<f64>> = (0..self.size)
            .map(|i| {
                let v = if i < self.frame_len {
                    sample(x, continuation + i as isize)
                } else {
                    0.0
                };
                Complex::new(v, 0.0)
            })
            .collect();
        self.forward.process(&mut region);
        self.forward.process(&mut template);
        let mut corr: Vec<Complex<f64>> = region
            .iter()
            .zip(&template)
            .map(|(r, t)| r * t.conj())
            .collect();
        self.inverse.process(&mut corr);

        let score = |k: usize| corr[k].re;
        let zero = self.tolerance;
        let mut best = zero;
        for k in 0..=2 * self.tolerance {
            if score(k) > score(best) {
                best = k;
            }
        }
        best as isize - tol
    }
}

/// Piecewise-linear time map given by `(source_s, target_s)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorMap {
    pairs: Vec<(f64, f64)>,
}

impl AnchorMap {
    /// Requires at least two pairs, a first pair of `(0, 0)`, and strictly
    /// increasing finite coordinates.
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self, TimeWarpError> {
        if pairs.len() < 2 {
            return Err(TimeWarpError::InvalidAnchors(format!(
                "need at least 2 pairs, got {}",
                pairs.len()
            )));
        }
        if pairs[0] != (0.0, 0.0) {
            return Err(TimeWarpError::InvalidAnchors(
                "first pair must be (0, 0)".into(),
            ));
        }
        if pairs.iter().any(|(s, t)| !(s.is_finite() && t.is_finite())) {
            return Err(TimeWarpError::InvalidAnchors(
                "anchor times must be finite".into(),
            ));
        }
        for (k, w) in pairs.windows(2).enumerate() {
            if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
                return Err(TimeWarpError::InvalidAnchors(format!(
                    "pair {} ({}, {}) does not increase in both coordinates",
                    k + 1,
                    w[1].0,
                    w[1].1
                )));
            }
        }
        Ok(AnchorMap { pairs })
    }

    pub fn identity(end_s: f64) -> Result<Self, TimeWarpError> {
        AnchorMap::new(vec![(0.0, 0.0), (end_s, end_s)])
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    /// Stretch ratio of every segment.
    pub fn ratios(&self) -> Vec<f64> {
        self.pairs
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .collect()
    }

    /// Target time of source time `t`, or `None` outside the anchored span.
    pub fn map_time(&self, t: f64) -> Option<f64> {
        let last = self.pairs.last()?;
        if !(0.0..=last.0).contains(&t) {
            return None;
        }
        Some(interpolate(&self.pairs, t, |p| p.0, |p| p.1))
    }

    /// Source time of target time `t`, or `None` outside the anchored span.
    pub fn source_time(&self, t: f64) -> Option<f64> {
        let last = self.pairs.last()?;
        if !(0.0..=last.1).contains(&t) {
            return None;
        }
        Some(interpolate(&self.pairs, t, |p| p.1, |p| p.0))
    }
}

/// Piecewise-linear interpolation through `pairs`, extrapolating the outer
/// segments.
fn interpolate(
    pairs: &[(f64, f64)],
    t: f64,
    from: impl Fn(&(f64, f64)) -> f64,
    to: impl Fn(&(f64, f64)) -> f64,
) -> f64 {
    let k = pairs
        .partition_point(|p| from(p) <= t)
        .saturating_sub(1)
        .min(pairs.len() - 2);
    let (a, b) = (&pairs[k], &pairs[k + 1]);
    to(a) + (t - from(a)) * (to(b) - to(a)) / (from(b) - from(a))
}

/// Pairs the k-th source downbeat with the k-th target downbeat, up to the
/// shorter list, with `(0, 0)` prepended when it is not already the first pair.
pub fn build_anchor_map(source: &BeatGrid, target: &BeatGrid) -> Result<AnchorMap, TimeWarpError> {
    if source.downbeats_s().is_empty() {
        return Err(TimeWarpError::NoDownbeats("source"));
    }
    if target.downbeats_s().is_empty() {
        return Err(TimeWarpError::NoDownbeats("target"));
    }
    let mut pairs: Vec<(f64, f64)> = source
        .downbeats_s()
        .iter()
        .copied()
        .zip(target.downbeats_s().iter().copied())
        .collect();
    if pairs[0] != (0.0, 0.0) {
        pairs.insert(0, (0.0, 0.0));
    }
    AnchorMap::new(pairs)
}

/// Warps the audio so that every source anchor lands on its target time.
///
/// One WSOLA pass follows the piecewise-linear map: output position `n`
/// reads around the source time of `n`, so anchors need not fall on frame
/// boundaries and transients at the anchors are not cut. Output length is
/// `round(last_target * sr)`; audio after the last source anchor is dropped.
pub fn align_to_anchors(
    buffer: &AudioBuffer,
    anchors: &AnchorMap,
    config: &WsolaConfig,
) -> Result<AudioBuffer, TimeWarpError> {
    config.validate()?;
    let sr = buffer.sample_rate_hz() as f64;
    let duration_s = buffer.duration_s();
    let last = anchors
        .pairs
        .last()
        .expect("anchor map has at least two pairs");
    if last.0 > duration_s + 0.5 / sr {
        return Err(TimeWarpError::AnchorPastEnd {
            anchor_s: last.0,
            duration_s,
        });
    }
    for r in anchors.ratios() {
        check_ratio(r)?;
    }
    if buffer.len() < config.frame_len {
        return Err(TimeWarpError::TooShort {
            needed: config.frame_len,
            got: buffer.len(),
        });
    }

    let out_len = (last.1 * sr).round() as usize;
    if anchors.pairs.iter().all(|(s, t)| s == t) {
        let channels = buffer
            .channels()
            .iter()
            .map(|c| c[..out_len.min(c.len())].to_vec())
            .collect();
        return Ok(AudioBuffer::new(buffer.sample_rate_hz(), channels)?);
    }
    let pairs: Vec<(f64, f64)> = anchors
        .pairs
        .iter()
        .map(|&(s, t)| (s * sr, t * sr))
        .collect();
    stretch_along(buffer, out_len, config, &|n| {
        interpolate(&pairs, n, |p| p.1, |p| p.0)
    })
}
