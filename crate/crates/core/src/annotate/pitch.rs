//! Probabilistic YIN pitch tracking with HMM smoothing.
//!
//! Each frame yields a handful of (frequency, probability) candidates from
//! the troughs of the cumulative-mean-normalized difference function. A
//! Viterbi pass over a log-frequency grid plus one unvoiced state picks a
//! smooth path through them.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dsp::{FixedWaveform, FRAME_LEN, HOP_LEN, SAMPLE_RATE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PitchConfig {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop_len: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    /// Upper end of the uniform threshold prior.
    pub threshold_max: f64,
    /// Number of discrete thresholds in `(0, threshold_max]`.
    pub n_thresholds: usize,
    /// Width of one pitch state in cents.
    pub cents_per_bin: f64,
    /// Probability of switching between voiced and unvoiced.
    pub switch_prob: f64,
    /// Log-probability penalty per pitch bin of jump.
    pub jump_cost: f64,
    /// Largest allowed jump between consecutive frames, in bins.
    pub max_jump_bins: usize,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            frame_len: FRAME_LEN,
            hop_len: HOP_LEN,
            fmin_hz: 60.0,
            fmax_hz: 400.0,
            threshold_max: 0.35,
            n_thresholds: 35,
            cents_per_bin: 10.0,
            switch_prob: 0.01,
            jump_cost: 0.05,
            max_jump_bins: 60,
        }
    }
}

impl PitchConfig {
    fn min_lag(&self) -> usize {
        libm::floor(self.sample_rate as f64 / self.fmax_hz) as usize
    }

    fn max_lag(&self) -> usize {
        libm::ceil(self.sample_rate as f64 / self.fmin_hz) as usize
    }

    pub fn n_bins(&self) -> usize {
        libm::floor(1200.0 * libm::log2(self.fmax_hz / self.fmin_hz) / self.cents_per_bin) as usize + 1
    }

    pub fn bin_freq(&self, bin: usize) -> f64 {
        self.fmin_hz * libm::exp2(bin as f64 * self.cents_per_bin / 1200.0)
    }

    fn freq_bin(&self, freq: f64) -> usize {
        let b = libm::round(1200.0 * libm::log2(freq / self.fmin_hz) / self.cents_per_bin);
        (b.max(0.0) as usize).min(self.n_bins() - 1)
    }
}

/// One trough of the normalized difference function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchCandidate {
    pub freq_hz: f64,
    pub prob: f64,
}

/// Cumulative-mean-normalized difference `d'(τ)` for `τ in 0..=max_lag+1`.
pub fn normalized_difference(frame: &[f64], max_lag: usize) -> Vec<f64> {
    let width = frame.len() - max_lag - 1;
    let mut d = vec![0.0; max_lag + 2];
    for (tau, slot) in d.iter_mut().enumerate().skip(1) {
        *slot = (0..width)
            .map(|j| {
                let diff = frame[j] - frame[j + tau];
                diff * diff
            })
            .sum();
    }
    let mut out = vec![1.0; d.len()];
    let mut running = 0.0;
    for tau in 1..d.len() {
        running += d[tau];
        out[tau] = if running > 1e-12 { d[tau] * tau as f64 / running } else { 1.0 };
    }
    out
}

/// Scores the troughs of one frame under the threshold prior.
pub fn frame_candidates(frame: &[f64], cfg: &PitchConfig) -> Vec<PitchCandidate> {
    let (lo, hi) = (cfg.min_lag().max(1), cfg.max_lag());
    let dn = normalized_difference(frame, hi);
    let troughs: Vec<usize> = (lo..=hi)
        .filter(|&t| dn[t] < dn[t - 1] && dn[t] <= dn[t + 1])
        .collect();
    if troughs.is_empty() {
        return Vec::new();
    }

    let mut mass = vec![0.0; troughs.len()];
    let prior = 1.0 / cfg.n_thresholds as f64;
    for k in 1..=cfg.n_thresholds {
        let threshold = cfg.threshold_max * k as f64 / cfg.n_thresholds as f64;
        // the first trough under the threshold takes this threshold's mass
        if let Some(i) = troughs.iter().position(|&t| dn[t] < threshold) {
            mass[i] += prior;
        }
    }

    troughs
        .iter()
        .zip(mass)
        .filter(|(_, m)| *m > 0.0)
        .map(|(&t, prob)| {
            let (a, b, c) = (dn[t - 1], dn[t], dn[t + 1]);
            let denom = a - 2.0 * b + c;
            let shift = if denom.abs() > 1e-12 { 0.5 * (a - c) / denom } else { 0.0 };
            let period = t as f64 + shift.clamp(-1.0, 1.0);
            PitchCandidate {
                freq_hz: cfg.sample_rate as f64 / period,
                prob,
            }
        })
        .collect()
}

/// Per-frame f0 in Hz, `None` where the frame is unvoiced.
pub fn track_pitch(x: &FixedWaveform, cfg: &PitchConfig) -> Vec<Option<f64>> {
    track_pitch_samples(x.samples(), cfg)
}

pub fn track_pitch_samples(samples: &[f64], cfg: &PitchConfig) -> Vec<Option<f64>> {
    if samples.len() < cfg.frame_len {
        return Vec::new();
    }
    let n_frames = (samples.len() - cfg.frame_len) / cfg.hop_len + 1;
    let candidates: Vec<Vec<PitchCandidate>> = (0..n_frames)
        .map(|t| {
            let start = t * cfg.hop_len;
            frame_candidates(&samples[start..start + cfg.frame_len], cfg)
        })
        .collect();
    decode(&candidates, cfg)
}

const LOG_FLOOR: f64 = -30.0;

fn safe_ln(p: f64) -> f64 {
    if p > 0.0 {
        libm::log(p).max(LOG_FLOOR)
    } else {
        LOG_FLOOR
    }
}

/// Viterbi decoding over `n_bins` voiced states plus one unvoiced state.
fn decode(candidates: &[Vec<PitchCandidate>], cfg: &PitchConfig) -> Vec<Option<f64>> {
    let n_frames = candidates.len();
    if n_frames == 0 {
        return Vec::new();
    }
    let n_bins = cfg.n_bins();
    let unvoiced = n_bins;
    let n_states = n_bins + 1;

    let emissions: Vec<Vec<f64>> = candidates
        .iter()
        .map(|cands| {
            let mut obs = vec![0.0; n_states];
            for c in cands {
                obs[cfg.freq_bin(c.freq_hz)] += c.prob;
            }
            let voiced: f64 = obs[..n_bins].iter().sum();
            obs[unvoiced] = (1.0 - voiced).max(0.0);
            obs.into_iter().map(safe_ln).collect()
        })
        .collect();

    let stay = libm::log(1.0 - cfg.switch_prob);
    let switch = libm::log(cfg.switch_prob);
    let jump = cfg.max_jump_bins as isize;

    let mut score = emissions[0].clone();
    let mut back = vec![vec![0usize; n_states]; n_frames];
    let mut next = vec![0.0; n_states];
    for t in 1..n_frames {
        for to in 0..n_bins {
            let mut best = (score[unvoiced] + switch, unvoiced);
            let lo = (to as isize - jump).max(0) as usize;
            let hi = ((to as isize + jump) as usize).min(n_bins - 1);
            for from in lo..=hi {
                let dist = from.abs_diff(to) as f64;
                let s = score[from] + stay - cfg.jump_cost * dist;
                if s > best.0 {
                    best = (s, from);
                }
            }
            next[to] = best.0 + emissions[t][to];
            back[t][to] = best.1;
        }
        let mut best = (score[unvoiced] + stay, unvoiced);
        for (from, s) in score[..n_bins].iter().enumerate() {
            if s + switch > best.0 {
                best = (s + switch, from);
            }
        }
        next[unvoiced] = best.0 + emissions[t][unvoiced];
        back[t][unvoiced] = best.1;
        core::mem::swap(&mut score, &mut next);
    }

    let mut state = (0..n_states)
        .max_by(|&a, &b| score[a].partial_cmp(&score[b]).unwrap().then(b.cmp(&a)))
        .unwrap_or(unvoiced);
    let mut path = vec![unvoiced; n_frames];
    for t in (0..n_frames).rev() {
        path[t] = state;
        state = back[t][state];
    }

    path.iter()
        .zip(candidates)
        .map(|(&s, cands)| {
            if s == unvoiced {
                return None;
            }
            // prefer the refined trough frequency that landed in this bin
            let refined = cands
                .iter()
                .filter(|c| cfg.freq_bin(c.freq_hz) == s)
                .max_by(|a, b| a.prob.partial_cmp(&b.prob).unwrap())
                .map(|c| c.freq_hz);
            let f0 = refined.unwrap_or_else(|| cfg.bin_freq(s));
            Some(f0.clamp(cfg.fmin_hz, cfg.fmax_hz))
        })
        .collect()
}
