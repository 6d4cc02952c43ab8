//! Frame-level ground truth: f0, the two lowest formants and voicing.

pub mod formant;
pub mod pitch;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::FixedWaveform;

pub use formant::{burg_lpc, lpc_resonances, track_formants, FormantConfig, Resonance};
pub use pitch::{track_pitch, PitchCandidate, PitchConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnnotateError {
    #[error("frame {frame}: voiced flag disagrees with f0 presence")]
    Inconsistent { frame: usize },
    #[error("frame {frame}: f0 {f0} Hz outside [60, 400]")]
    PitchOutOfRange { frame: usize, f0: f64 },
    #[error("frame {frame}: formants not ordered (f1 {f1}, f2 {f2})")]
    FormantOrder { frame: usize, f1: f64, f2: f64 },
    #[error("track lengths differ")]
    Ragged,
}

/// Per-frame supervision for one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    pub f0_hz: Vec<Option<f64>>,
    pub f1_hz: Vec<f64>,
    pub f2_hz: Vec<f64>,
    pub voiced: Vec<bool>,
}

impl FrameAnnotation {
    pub fn n_frames(&self) -> usize {
        self.voiced.len()
    }

    pub fn n_voiced(&self) -> usize {
        self.voiced.iter().filter(|v| **v).count()
    }

    pub fn validate(&self) -> Result<(), AnnotateError> {
        let n = self.voiced.len();
        if self.f0_hz.len() != n || self.f1_hz.len() != n || self.f2_hz.len() != n {
            return Err(AnnotateError::Ragged);
        }
        for t in 0..n {
            if self.voiced[t] != self.f0_hz[t].is_some() {
                return Err(AnnotateError::Inconsistent { frame: t });
            }
            if let Some(f0) = self.f0_hz[t] {
                if !(60.0..=400.0).contains(&f0) {
                    return Err(AnnotateError::PitchOutOfRange { frame: t, f0 });
                }
            }
            let (f1, f2) = (self.f1_hz[t], self.f2_hz[t]);
            if !(f1 > 0.0 && f1 < f2) {
                return Err(AnnotateError::FormantOrder { frame: t, f1, f2 });
            }
        }
        Ok(())
    }
}

/// Voicing mask: a frame is voiced exactly when it carries an f0 estimate.
pub fn derive_voicing(f0_track: &[Option<f64>]) -> Vec<bool> {
    f0_track.iter().map(Option::is_some).collect()
}

/// Runs both trackers and assembles a validated annotation.
pub fn annotate(x: &FixedWaveform, pitch_cfg: &PitchConfig, formant_cfg: &FormantConfig) -> FrameAnnotation {
    let f0_hz = track_pitch(x, pitch_cfg);
    let (f1_hz, f2_hz): (Vec<f64>, Vec<f64>) = track_formants(x, formant_cfg).into_iter().unzip();
    let voiced = derive_voicing(&f0_hz);
    FrameAnnotation {
        f0_hz,
        f1_hz,
        f2_hz,
        voiced,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{stft_features, FIXED_LEN};
    use crate::synth;
    use alloc::vec;

    #[test]
    fn voicing_follows_f0_presence() {
        assert_eq!(
            derive_voicing(&[None, Some(180.0), Some(182.0), None]),
            vec![false, true, true, false]
        );
        assert_eq!(derive_voicing(&[None, None, None]), vec![false; 3]);
    }

    #[test]
    fn sine_utterance_is_voiced() {
        let x = FixedWaveform::new(synth::sine(220.0, FIXED_LEN, 0.9)).unwrap();
        let mask = derive_voicing(&track_pitch(&x, &PitchConfig::default()));
        let interior = &mask[2..mask.len() - 2];
        let voiced = interior.iter().filter(|v| **v).count();
        assert!(voiced as f64 >= 0.95 * interior.len() as f64);
    }

    #[test]
    fn annotation_aligns_with_features() {
        let x = FixedWaveform::new(synth::resonator_vowel(150.0, &[(600.0, 80.0), (1700.0, 100.0)], FIXED_LEN)).unwrap();
        let ann = annotate(&x, &PitchConfig::default(), &FormantConfig::default());
        ann.validate().unwrap();
        assert_eq!(ann.n_frames(), stft_features(&x).n_frames);
        let again = annotate(&x, &PitchConfig::default(), &FormantConfig::default());
        assert_eq!(ann, again);
    }

    #[test]
    fn validate_catches_inconsistency() {
        let ann = FrameAnnotation {
            f0_hz: vec![Some(100.0)],
            f1_hz: vec![500.0],
            f2_hz: vec![1500.0],
            voiced: vec![false],
        };
        assert_eq!(ann.validate(), Err(AnnotateError::Inconsistent { frame: 0 }));
    }
}
