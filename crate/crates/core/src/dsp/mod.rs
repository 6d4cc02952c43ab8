//! Waveform ingestion, preprocessing and the magnitude/phase STFT frontend.
//!
//! The pipeline is `ingest` → `preprocess` → `stft_features` → `tokenize`.
//! Every stage is a pure function; the framing constants are shared with
//! the annotators so that pitch/formant frames line up 1:1 with STFT frames.

pub mod fft;
mod stft;

use alloc::vec::Vec;

use thiserror::Error;

pub use stft::{stft_features, stft_frame, tokenize, FeatureGrid, Tokens};

/// Working sample rate in Hz.
pub const SAMPLE_RATE: u32 = 16_000;
/// Samples in one analysis frame (0.032 s).
pub const FRAME_LEN: usize = 512;
/// Hop between analysis frames (0.016 s).
pub const HOP_LEN: usize = 256;
/// Fixed model input length in samples (2.064 s).
pub const FIXED_LEN: usize = 33_024;
/// Frames per fixed input.
pub const N_FRAMES: usize = (FIXED_LEN - FRAME_LEN) / HOP_LEN + 1;
/// Frequency bins kept per frame (Nyquist bin dropped).
pub const N_BINS: usize = FRAME_LEN / 2;
/// Floor added to the magnitude before the log.
pub const LOG_EPS: f64 = 1e-10;
/// Default silence threshold relative to peak.
pub const DEFAULT_SILENCE_DB: f64 = -40.0;
/// Block length used for silence trimming (20 ms).
pub const TRIM_BLOCK: usize = 320;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("invalid audio: {0}")]
    InvalidAudio(&'static str),
    #[error("audio is silent after trimming")]
    SilentAudio,
    #[error("expected {expected} samples, got {got}")]
    BadLength { expected: usize, got: usize },
}

/// Mono PCM signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub trimmed: bool,
    pub normalized: bool,
}

/// Preprocessed signal of exactly [`FIXED_LEN`] samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedWaveform {
    samples: Vec<f64>,
}

impl FixedWaveform {
    pub fn new(samples: Vec<f64>) -> Result<Self, DspError> {
        if samples.len() != FIXED_LEN {
            return Err(DspError::BadLength {
                expected: FIXED_LEN,
                got: samples.len(),
            });
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// Brings raw samples to 16 kHz by linear interpolation.
pub fn ingest(raw_samples: &[f64], rate: u32) -> Result<Waveform, DspError> {
    if raw_samples.is_empty() {
        return Err(DspError::InvalidAudio("no samples"));
    }
    if rate == 0 {
        return Err(DspError::InvalidAudio("sample rate must be positive"));
    }
    if raw_samples.iter().any(|s| !s.is_finite()) {
        return Err(DspError::InvalidAudio("non-finite sample"));
    }
    let samples = if rate == SAMPLE_RATE {
        raw_samples.to_vec()
    } else {
        resample_linear(raw_samples, rate, SAMPLE_RATE)
    };
    Ok(Waveform {
        samples,
        sample_rate: SAMPLE_RATE,
        trimmed: false,
        normalized: false,
    })
}

fn resample_linear(x: &[f64], from: u32, to: u32) -> Vec<f64> {
    let out_len = ((x.len() as u64 * to as u64) / from as u64).max(1) as usize;
    let last = x.len() - 1;
    (0..out_len)
        .map(|i| {
            // exact integer part keeps integer-ratio decimation sample-exact
            let num = i as u64 * from as u64;
            let idx = (num / to as u64) as usize;
            let frac = (num % to as u64) as f64 / to as f64;
            if idx >= last {
                x[last]
            } else {
                x[idx] * (1.0 - frac) + x[idx + 1] * frac
            }
        })
        .collect()
}

/// Trims leading/trailing silence, peak-normalizes, then tiles or truncates
/// to [`FIXED_LEN`] samples.
pub fn preprocess(w: &Waveform, silence_threshold_db: f64) -> Result<FixedWaveform, DspError> {
    if w.sample_rate != SAMPLE_RATE {
        return Err(DspError::InvalidAudio("waveform was not ingested at 16 kHz"));
    }
    let trimmed = trim_silence(&w.samples, silence_threshold_db)?;
    let normalized = peak_normalize(trimmed).ok_or(DspError::SilentAudio)?;
    Ok(FixedWaveform {
        samples: fit_length(&normalized, FIXED_LEN),
    })
}

/// Removes leading and trailing 20 ms blocks whose RMS level lies below
/// `threshold_db` relative to the signal peak.
pub fn trim_silence(x: &[f64], threshold_db: f64) -> Result<&[f64], DspError> {
    let peak = x.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak == 0.0 {
        return Err(DspError::SilentAudio);
    }
    let loud = |block: &[f64]| {
        let ms = block.iter().map(|s| s * s).sum::<f64>() / block.len() as f64;
        let rms = libm::sqrt(ms);
        rms > 0.0 && 20.0 * libm::log10(rms / peak) >= threshold_db
    };
    let blocks: Vec<&[f64]> = x.chunks(TRIM_BLOCK).collect();
    let first = blocks.iter().position(|b| loud(b));
    let last = blocks.iter().rposition(|b| loud(b));
    match (first, last) {
        (Some(f), Some(l)) => {
            let start = f * TRIM_BLOCK;
            let end = ((l + 1) * TRIM_BLOCK).min(x.len());
            Ok(&x[start..end])
        }
        _ => Err(DspError::SilentAudio),
    }
}

/// Scales so that the largest absolute sample is exactly 1.0.
pub fn peak_normalize(x: &[f64]) -> Option<Vec<f64>> {
    let peak = x.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak == 0.0 || !peak.is_finite() {
        return None;
    }
    Some(x.iter().map(|s| s / peak).collect())
}

/// Repeats a short signal until it covers `len` samples; keeps the leading
/// `len` samples of a long one.
pub fn fit_length(x: &[f64], len: usize) -> Vec<f64> {
    debug_assert!(!x.is_empty());
    x.iter().copied().cycle().take(len).collect()
}
