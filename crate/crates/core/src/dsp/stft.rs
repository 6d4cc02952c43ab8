use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::fft::fft_in_place;
use super::{FixedWaveform, FRAME_LEN, HOP_LEN, LOG_EPS, N_BINS, N_FRAMES};

/// Log-magnitude and sin-phase grids, row-major `n_frames × n_bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub log_mag: Vec<f64>,
    pub sin_phase: Vec<f64>,
    pub n_frames: usize,
    pub n_bins: usize,
    pub frame_len_samples: usize,
    pub hop_samples: usize,
}

impl FeatureGrid {
    pub fn log_mag_at(&self, frame: usize, bin: usize) -> f64 {
        self.log_mag[frame * self.n_bins + bin]
    }

    pub fn sin_phase_at(&self, frame: usize, bin: usize) -> f64 {
        self.sin_phase[frame * self.n_bins + bin]
    }
}

/// Periodic Hann window.
pub(crate) fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * libm::cos(2.0 * PI * i as f64 / n as f64))
        .collect()
}

/// Hann-windowed 512-point DFT of one frame; returns the first
/// [`N_BINS`] complex bins as `(re, im)`.
pub fn stft_frame(frame: &[f64]) -> Vec<(f64, f64)> {
    assert_eq!(frame.len(), FRAME_LEN);
    let window = hann(FRAME_LEN);
    stft_frame_with(frame, &window)
}

fn stft_frame_with(frame: &[f64], window: &[f64]) -> Vec<(f64, f64)> {
    let mut re: Vec<f64> = frame.iter().zip(window).map(|(x, w)| x * w).collect();
    let mut im = vec![0.0; FRAME_LEN];
    fft_in_place(&mut re, &mut im);
    re.into_iter().zip(im).take(N_BINS).collect()
}

/// Computes the `128 × 256` log-magnitude / sin-phase grids.
pub fn stft_features(x: &FixedWaveform) -> FeatureGrid {
    let samples = x.samples();
    let window = hann(FRAME_LEN);
    let mut log_mag = Vec::with_capacity(N_FRAMES * N_BINS);
    let mut sin_phase = Vec::with_capacity(N_FRAMES * N_BINS);
    for t in 0..N_FRAMES {
        let start = t * HOP_LEN;
        for (re, im) in stft_frame_with(&samples[start..start + FRAME_LEN], &window) {
            let mag = libm::hypot(re, im);
            log_mag.push(libm::log(mag + LOG_EPS));
            sin_phase.push(libm::sin(libm::atan2(im, re)));
        }
    }
    FeatureGrid {
        log_mag,
        sin_phase,
        n_frames: N_FRAMES,
        n_bins: N_BINS,
        frame_len_samples: FRAME_LEN,
        hop_samples: HOP_LEN,
    }
}

/// Row-major token sequence: token `t` is the full frequency row of frame `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tokens {
    pub n_tokens: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tokens {
    pub fn token(&self, t: usize) -> &[f64] {
        &self.data[t * self.width..(t + 1) * self.width]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.width)
    }
}

/// Time-only segmentation: one `1 × M` slice per frame, in time order.
pub fn tokenize(g: &FeatureGrid) -> (Tokens, Tokens) {
    let mk = |data: &Vec<f64>| Tokens {
        n_tokens: g.n_frames,
        width: g.n_bins,
        data: data.clone(),
    };
    (mk(&g.log_mag), mk(&g.sin_phase))
}
