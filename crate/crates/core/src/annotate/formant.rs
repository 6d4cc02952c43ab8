//! Burg LPC formant tracking.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dsp::{FixedWaveform, FRAME_LEN, HOP_LEN, SAMPLE_RATE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FormantConfig {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop_len: usize,
    pub lpc_order: usize,
    pub pre_emphasis: f64,
    pub min_freq_hz: f64,
    pub max_freq_hz: f64,
    pub max_bandwidth_hz: f64,
    /// Values used when the very first frame has fewer than two candidates.
    pub fallback_hz: (f64, f64),
}

impl Default for FormantConfig {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            frame_len: FRAME_LEN,
            hop_len: HOP_LEN,
            lpc_order: 10,
            pre_emphasis: 0.97,
            min_freq_hz: 50.0,
            max_freq_hz: 5500.0,
            max_bandwidth_hz: 400.0,
            // midpoints of the F1 [200, 850] and F2 [800, 2700] ranges
            fallback_hz: (525.0, 1750.0),
        }
    }
}

/// Burg's method. Returns `a[0..=order]` with `a[0] = 1` such that the
/// prediction error is `e[n] = Σ a[i]·x[n-i]`.
pub fn burg_lpc(x: &[f64], order: usize) -> Vec<f64> {
    let n = x.len();
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    if n <= order {
        return a;
    }
    let mut fwd = x.to_vec();
    let mut bwd = x.to_vec();
    for m in 0..order {
        let (mut num, mut den) = (0.0, 0.0);
        for i in m + 1..n {
            num += fwd[i] * bwd[i - 1];
            den += fwd[i] * fwd[i] + bwd[i - 1] * bwd[i - 1];
        }
        if den <= f64::MIN_POSITIVE {
            break;
        }
        let k = -2.0 * num / den;
        let prev = a.clone();
        for i in 1..=m + 1 {
            a[i] = prev[i] + k * prev[m + 1 - i];
        }
        for i in (m + 1..n).rev() {
            let (f, b) = (fwd[i], bwd[i - 1]);
            fwd[i] = f + k * b;
            bwd[i] = b + k * f;
        }
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Complex {
    re: f64,
    im: f64,
}

impl Complex {
    const ZERO: Self = Self { re: 0.0, im: 0.0 };

    fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.im + o.im)
    }
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.im - o.im)
    }
    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
    fn div(self, o: Self) -> Self {
        let d = o.re * o.re + o.im * o.im;
        Self::new((self.re * o.re + self.im * o.im) / d, (self.im * o.re - self.re * o.im) / d)
    }
    fn norm(self) -> f64 {
        libm::hypot(self.re, self.im)
    }
    fn arg(self) -> f64 {
        libm::atan2(self.im, self.re)
    }
}

/// Evaluates the monic polynomial with coefficients `c[0] z^n + ... + c[n]`
/// and its derivative.
fn horner(c: &[f64], z: Complex) -> (Complex, Complex) {
    let mut p = Complex::new(c[0], 0.0);
    let mut dp = Complex::ZERO;
    for &ci in &c[1..] {
        dp = dp.mul(z).add(p);
        p = p.mul(z).add(Complex::new(ci, 0.0));
    }
    (p, dp)
}

/// Roots of `c[0] z^n + ... + c[n]` by Aberth–Ehrlich iteration.
fn polynomial_roots(c: &[f64]) -> Vec<Complex> {
    let deg = c.len() - 1;
    if deg == 0 {
        return Vec::new();
    }
    let lead = c[0];
    let monic: Vec<f64> = c.iter().map(|v| v / lead).collect();
    let radius = 1.0 + monic[1..].iter().fold(0.0f64, |m, v| m.max(v.abs())).min(1.0);
    let mut z: Vec<Complex> = (0..deg)
        .map(|k| {
            let angle = 2.0 * PI * k as f64 / deg as f64 + 0.4;
            Complex::new(radius * 0.9 * libm::cos(angle), radius * 0.9 * libm::sin(angle))
        })
        .collect();
    for _ in 0..500 {
        let mut max_step = 0.0f64;
        for i in 0..deg {
            let (p, dp) = horner(&monic, z[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p.div(dp);
            let mut repulsion = Complex::ZERO;
            for j in 0..deg {
                if j != i {
                    repulsion = repulsion.add(Complex::new(1.0, 0.0).div(z[i].sub(z[j])));
                }
            }
            let denom = Complex::new(1.0, 0.0).sub(ratio.mul(repulsion));
            let step = ratio.div(denom);
            if step.re.is_finite() && step.im.is_finite() {
                z[i] = z[i].sub(step);
                max_step = max_step.max(step.norm());
            }
        }
        if max_step < 1e-14 {
            break;
        }
    }
    z
}

/// A resonance of the LPC filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resonance {
    pub freq_hz: f64,
    pub bandwidth_hz: f64,
}

/// Converts LPC coefficients to resonances in the upper half plane, sorted
/// by frequency.
pub fn lpc_resonances(a: &[f64], sample_rate: f64) -> Vec<Resonance> {
    if a.len() < 2 || a[1..].iter().all(|v| v.abs() < 1e-12) {
        return Vec::new();
    }
    let mut out: Vec<Resonance> = polynomial_roots(a)
        .into_iter()
        .filter(|r| r.im > 0.0)
        .map(|mut r| {
            let mag = r.norm();
            if mag > 1.0 {
                // reflect into the unit circle; keeps the frequency
                r = Complex::new(r.re / (mag * mag), r.im / (mag * mag));
            }
            Resonance {
                freq_hz: r.arg() * sample_rate / (2.0 * PI),
                bandwidth_hz: -libm::log(r.norm().max(1e-300)) * sample_rate / PI,
            }
        })
        .collect();
    out.sort_by(|x, y| x.freq_hz.partial_cmp(&y.freq_hz).unwrap());
    out
}

/// Gaussian-like analysis window that reaches zero at the edges.
fn gaussian_window(n: usize) -> Vec<f64> {
    let edge = libm::exp(-12.0);
    let mid = (n as f64 - 1.0) / 2.0;
    let scale = (n as f64 + 1.0) * (n as f64 + 1.0);
    (0..n)
        .map(|i| {
            let d = i as f64 - mid;
            (libm::exp(-48.0 * d * d / scale) - edge) / (1.0 - edge)
        })
        .collect()
}

/// Formant candidates of one frame: resonances within the frequency and
/// bandwidth limits, ascending.
pub fn frame_formants(frame: &[f64], cfg: &FormantConfig) -> Vec<Resonance> {
    let window = gaussian_window(frame.len());
    let mut prev = 0.0;
    let shaped: Vec<f64> = frame
        .iter()
        .zip(&window)
        .map(|(&x, w)| {
            let y = x - cfg.pre_emphasis * prev;
            prev = x;
            y * w
        })
        .collect();
    let a = burg_lpc(&shaped, cfg.lpc_order);
    lpc_resonances(&a, cfg.sample_rate as f64)
        .into_iter()
        .filter(|r| {
            r.freq_hz > cfg.min_freq_hz
                && r.freq_hz < cfg.max_freq_hz
                && r.bandwidth_hz < cfg.max_bandwidth_hz
        })
        .collect()
}

/// Per-frame `(f1, f2)` in Hz. Frames with fewer than two candidates repeat
/// the previous frame's values.
pub fn track_formants(x: &FixedWaveform, cfg: &FormantConfig) -> Vec<(f64, f64)> {
    track_formants_samples(x.samples(), cfg)
}

pub fn track_formants_samples(samples: &[f64], cfg: &FormantConfig) -> Vec<(f64, f64)> {
    if samples.len() < cfg.frame_len {
        return Vec::new();
    }
    let n_frames = (samples.len() - cfg.frame_len) / cfg.hop_len + 1;
    let mut last = cfg.fallback_hz;
    (0..n_frames)
        .map(|t| {
            let start = t * cfg.hop_len;
            let cands = frame_formants(&samples[start..start + cfg.frame_len], cfg);
            if cands.len() >= 2 && cands[0].freq_hz < cands[1].freq_hz {
                last = (cands[0].freq_hz, cands[1].freq_hz);
            }
            last
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::FIXED_LEN;
    use crate::synth;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn burg_recovers_ar2_pole() {
        let (r, f) = (0.95, 800.0);
        let theta = 2.0 * PI * f / 16000.0;
        let (c1, c2) = (2.0 * r * libm::cos(theta), -r * r);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut x = vec![0.0f64; 8192];
        for n in 2..x.len() {
            let e: f64 = rng.random::<f64>() - 0.5;
            x[n] = c1 * x[n - 1] + c2 * x[n - 2] + e;
        }
        let a = burg_lpc(&x, 2);
        assert!((a[1] + c1).abs() < 0.02, "{a:?}");
        assert!((a[2] + c2).abs() < 0.02, "{a:?}");
        let res = lpc_resonances(&a, 16000.0);
        assert_eq!(res.len(), 1);
        assert!((res[0].freq_hz - 800.0).abs() <= 10.0, "{:?}", res[0]);
    }

    #[test]
    fn roots_of_known_polynomial() {
        // (z - 0.5)(z^2 - z + 0.5) = z^3 - 1.5 z^2 + z - 0.25
        let mut roots = polynomial_roots(&[1.0, -1.5, 1.0, -0.25]);
        roots.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert!((roots[0].re - 0.5).abs() < 1e-10 && (roots[0].im + 0.5).abs() < 1e-10);
        assert!((roots[1].re - 0.5).abs() < 1e-10 && roots[1].im.abs() < 1e-10);
        assert!((roots[2].re - 0.5).abs() < 1e-10 && (roots[2].im - 0.5).abs() < 1e-10);
    }

    #[test]
    fn two_resonator_vowel() {
        let x = FixedWaveform::new(synth::resonator_vowel(120.0, &[(500.0, 60.0), (1500.0, 90.0)], FIXED_LEN)).unwrap();
        let tracks = track_formants(&x, &FormantConfig::default());
        assert_eq!(tracks.len(), 128);
        let good = tracks
            .iter()
            .filter(|(f1, f2)| (f1 - 500.0).abs() <= 50.0 && (f2 - 1500.0).abs() <= 75.0)
            .count();
        assert!(good as f64 >= 0.8 * tracks.len() as f64, "{good}/128: {:?}", &tracks[..8]);
    }

    #[test]
    fn silent_frames_use_midpoints() {
        let x = FixedWaveform::new(vec![0.0; FIXED_LEN]).unwrap();
        let tracks = track_formants(&x, &FormantConfig::default());
        assert!(tracks.iter().all(|&p| p == (525.0, 1750.0)));
    }

    #[test]
    fn dropouts_hold_last_value() {
        let mut s = synth::resonator_vowel(120.0, &[(500.0, 60.0), (1500.0, 90.0)], FIXED_LEN);
        for v in s.iter_mut().skip(20_000) {
            *v = 0.0;
        }
        let tracks = track_formants(&FixedWaveform::new(s).unwrap(), &FormantConfig::default());
        let held = tracks[100];
        assert!(tracks[100..].iter().all(|&p| p == held));
        assert_ne!(held, (525.0, 1750.0));
    }
}
