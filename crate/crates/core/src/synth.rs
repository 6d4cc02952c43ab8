//! Deterministic test signals and the synthetic corpus recipe.
//!
//! "Real" utterances are harmonic source-filter signals with smooth f0
//! contours separated by noise bursts. "Fake" utterances share the recipe
//! but re-draw the harmonic phases every hop and carry a faint steady tone
//! near 6 kHz, so the two classes are separable from log-magnitude and
//! phase features.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{HOP_LEN, SAMPLE_RATE};
use crate::Label;

const FS: f64 = SAMPLE_RATE as f64;

pub fn sine(freq: f64, n: usize, amp: f64) -> Vec<f64> {
    (0..n).map(|i| amp * libm::sin(2.0 * PI * freq * i as f64 / FS)).collect()
}

pub fn sawtooth(freq: f64, n: usize, amp: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let phase = freq * i as f64 / FS;
            amp * (2.0 * (phase - libm::floor(phase)) - 1.0)
        })
        .collect()
}

pub fn white_noise(n: usize, amp: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| amp * (2.0 * rng.random::<f64>() - 1.0)).collect()
}

/// Two-pole resonator coefficients `(a1, a2)` for `y[n] = x[n] + a1·y[n-1] + a2·y[n-2]`.
fn resonator(freq: f64, bandwidth: f64) -> (f64, f64) {
    let r = libm::exp(-PI * bandwidth / FS);
    (2.0 * r * libm::cos(2.0 * PI * freq / FS), -r * r)
}

/// Impulse train at `f0` through a cascade of `(freq, bandwidth)`
/// resonators, peak-scaled to 0.9.
pub fn resonator_vowel(f0: f64, resonators: &[(f64, f64)], n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    let mut k = 0usize;
    loop {
        let pos = libm::round(k as f64 * FS / f0) as usize;
        if pos >= n {
            break;
        }
        x[pos] = 1.0;
        k += 1;
    }
    for &(f, bw) in resonators {
        let (a1, a2) = resonator(f, bw);
        let (mut y1, mut y2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let y = *v + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            *v = y;
        }
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    x.iter().map(|v| 0.9 * v / peak).collect()
}

/// Magnitude response of a two-pole resonator normalized to unit gain at DC.
fn resonance_gain(f: f64, freq: f64, bandwidth: f64) -> f64 {
    let (a1, a2) = resonator(freq, bandwidth);
    let w = 2.0 * PI * f / FS;
    // |1 - a1 e^{-jw} - a2 e^{-2jw}|
    let re = 1.0 - a1 * libm::cos(w) - a2 * libm::cos(2.0 * w);
    let im = a1 * libm::sin(w) + a2 * libm::sin(2.0 * w);
    let dc = 1.0 - a1 - a2;
    dc / libm::hypot(re, im)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpusSpec {
    /// Total number of utterances; real items take the extra one when odd.
    pub count: usize,
    pub seed: u64,
    pub dataset_tag: String,
    /// Cycled over items; empty means no codec tag.
    #[serde(default)]
    pub codec_tags: Vec<String>,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub test_fraction: f64,
    #[serde(default = "default_f0_range")]
    pub f0_range_hz: (f64, f64),
    #[serde(default = "default_duration")]
    pub duration_range_s: (f64, f64),
}

fn default_val_fraction() -> f64 {
    0.2
}
fn default_f0_range() -> (f64, f64) {
    (100.0, 220.0)
}
fn default_duration() -> (f64, f64) {
    (1.2, 1.8)
}

impl SyntheticCorpusSpec {
    pub fn new(count: usize, seed: u64) -> Self {
        Self {
            count,
            seed,
            dataset_tag: String::from("synthetic"),
            codec_tags: Vec::new(),
            val_fraction: default_val_fraction(),
            test_fraction: 0.0,
            f0_range_hz: default_f0_range(),
            duration_range_s: default_duration(),
        }
    }

    pub fn n_real(&self) -> usize {
        self.count.div_ceil(2)
    }

    /// Item plan: label, split and codec tag for each index, stratified so
    /// every split gets the same share of each class.
    pub fn plan(&self) -> Vec<PlannedItem> {
        let mut items = Vec::with_capacity(self.count);
        let n_real = self.n_real();
        for (label, n_class, offset) in [(Label::Real, n_real, 0), (Label::Fake, self.count - n_real, n_real)] {
            let n_test = libm::round(n_class as f64 * self.test_fraction) as usize;
            let n_val = libm::round(n_class as f64 * self.val_fraction) as usize;
            for k in 0..n_class {
                let split = if k < n_test {
                    Split::Test
                } else if k < n_test + n_val {
                    Split::Val
                } else {
                    Split::Train
                };
                let index = offset + k;
                let codec_tag = if self.codec_tags.is_empty() {
                    None
                } else {
                    Some(self.codec_tags[index % self.codec_tags.len()].clone())
                };
                items.push(PlannedItem {
                    index,
                    label,
                    split,
                    codec_tag,
                });
            }
        }
        items
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedItem {
    pub index: usize,
    pub label: Label,
    pub split: Split,
    pub codec_tag: Option<String>,
}

/// A generated utterance at 16 kHz with its per-sample f0 (0 where unvoiced).
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticUtterance {
    pub samples: Vec<f64>,
    pub f0_hz: Vec<f64>,
    pub label: Label,
}

/// Generates item `index` of the corpus described by `spec`.
pub fn generate_utterance(spec: &SyntheticCorpusSpec, index: usize, label: Label) -> SyntheticUtterance {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let (dmin, dmax) = spec.duration_range_s;
    let n = (FS * rng.random_range(dmin..=dmax)) as usize;

    // alternating noise / voiced segments
    let mut voiced = vec![false; n];
    let mut pos = (FS * rng.random_range(0.08..0.16)) as usize;
    while pos < n {
        let len = (FS * rng.random_range(0.3..0.55)) as usize;
        let end = (pos + len).min(n);
        voiced[pos..end].fill(true);
        pos = end + (FS * rng.random_range(0.08..0.18)) as usize;
    }

    let (fmin, fmax) = spec.f0_range_hz;
    let base = rng.random_range(fmin..=fmax);
    let depth = rng.random_range(0.02..0.06);
    let rate = rng.random_range(0.5..1.5);
    let phi = rng.random_range(0.0..2.0 * PI);
    let f1 = rng.random_range(400.0..800.0);
    let f2 = rng.random_range(1100.0..2200.0);
    let noise_amp = rng.random_range(0.05..0.1);

    let f0: Vec<f64> = (0..n)
        .map(|i| {
            if voiced[i] {
                base * (1.0 + depth * libm::sin(2.0 * PI * rate * i as f64 / FS + phi))
            } else {
                0.0
            }
        })
        .collect();

    let n_harm = (7600.0 / (base * (1.0 + depth))) as usize;
    let gains: Vec<f64> = (1..=n_harm)
        .map(|k| {
            let f = k as f64 * base;
            resonance_gain(f, f1, 90.0) * resonance_gain(f, f2, 120.0) / k as f64
        })
        .collect();
    let norm = gains.iter().cloned().fold(0.0, f64::max);

    let fake = label == Label::Fake;
    let mut offsets = vec![0.0; n_harm];
    let mut samples = vec![0.0; n];
    let mut theta = 0.0;
    for i in 0..n {
        if fake && i % HOP_LEN == 0 {
            for o in offsets.iter_mut() {
                *o = rng.random_range(-0.8..0.8);
            }
        }
        let mut v = 0.0;
        if voiced[i] {
            theta += 2.0 * PI * f0[i] / FS;
            for (k, g) in gains.iter().enumerate() {
                v += 0.5 * g / norm * libm::sin((k + 1) as f64 * theta + offsets[k]);
            }
        }
        v += noise_amp * (2.0 * rng.random::<f64>() - 1.0) * if voiced[i] { 0.3 } else { 1.0 };
        if fake {
            v += 0.02 * libm::sin(2.0 * PI * 6000.0 * i as f64 / FS);
        }
        samples[i] = v;
    }

    SyntheticUtterance {
        samples,
        f0_hz: f0,
        label,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::pitch::{track_pitch_samples, PitchConfig};
    use crate::dsp::FRAME_LEN;

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticCorpusSpec::new(8, 7);
        for item in spec.plan() {
            let a = generate_utterance(&spec, item.index, item.label);
            let b = generate_utterance(&spec, item.index, item.label);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn plan_is_stratified() {
        let spec = SyntheticCorpusSpec::new(40, 1);
        let plan = spec.plan();
        assert_eq!(plan.len(), 40);
        let count = |l: Label, s: Split| plan.iter().filter(|p| p.label == l && p.split == s).count();
        assert_eq!(count(Label::Real, Split::Train), 16);
        assert_eq!(count(Label::Fake, Split::Train), 16);
        assert_eq!(count(Label::Real, Split::Val), 4);
        assert_eq!(count(Label::Fake, Split::Val), 4);
    }

    #[test]
    fn real_items_carry_their_f0() {
        let spec = SyntheticCorpusSpec::new(6, 3);
        let cfg = PitchConfig::default();
        for item in spec.plan().into_iter().filter(|p| p.label == Label::Real) {
            let utt = generate_utterance(&spec, item.index, item.label);
            let track = track_pitch_samples(&utt.samples, &cfg);
            let mut checked = 0;
            let mut good = 0;
            for (t, est) in track.iter().enumerate() {
                let span = &utt.f0_hz[t * HOP_LEN..t * HOP_LEN + FRAME_LEN];
                if span.iter().any(|f| *f == 0.0) {
                    continue;
                }
                checked += 1;
                let truth = utt.f0_hz[t * HOP_LEN + FRAME_LEN / 2];
                if matches!(est, Some(f) if (f - truth).abs() <= 2.0) {
                    good += 1;
                }
            }
            assert!(checked > 20);
            assert!(good as f64 >= 0.9 * checked as f64, "item {}: {good}/{checked}", item.index);
        }
    }
}
