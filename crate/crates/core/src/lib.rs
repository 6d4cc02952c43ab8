//! Multi-task transformer for speech deepfake detection.
//!
//! The crate is `no_std` (with `alloc`) and holds every algorithmic piece:
//!
//! - [`dsp`]: resampling, silence trimming, peak normalization, fixed-length
//!   tiling and the log-magnitude / sin-phase STFT frontend.
//! - [`annotate`]: pYin-style f0 tracking, Burg LPC formant tracking and the
//!   voicing mask used as supervision.
//! - [`tensor`]: a small dense tensor engine with reverse-mode autodiff and
//!   AdamW.
//! - [`model`]: magnitude/phase encoders, fusion, formant and voicing
//!   decoders, and the attention-pooled synthesis predictor.
//! - [`train`]: compound loss, formant standardization, class balancing and
//!   the optimization loop.
//! - [`metrics`] and [`explain`]: EER/AUC, per-tag breakdowns and
//!   voiced/unvoiced attention reliance.
//! - [`synth`]: deterministic signals and the synthetic corpus recipe.
//!
//! File formats, WAV IO and the command line live in the `sfatnet` crate.

#![no_std]

extern crate alloc;

pub mod annotate;
pub mod dsp;
pub mod explain;
pub mod metrics;
pub mod model;
pub mod real;
pub mod synth;
pub mod tensor;
pub mod train;

use serde::{Deserialize, Serialize};

/// Utterance class. Fake speech is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    /// Binary target: 1 for fake, 0 for real.
    pub fn target(self) -> u8 {
        match self {
            Label::Real => 0,
            Label::Fake => 1,
        }
    }

    pub fn from_target(y: u8) -> Self {
        if y == 0 {
            Label::Real
        } else {
            Label::Fake
        }
    }
}
