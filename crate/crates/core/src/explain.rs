//! Temporal attribution: how much of the pooled evidence comes from voiced
//! versus unvoiced frames, for utterances the detector got right.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::ScoreRecord;
use crate::model::VOICING_THRESHOLD;
use crate::Label;

/// Allowed deviation of a weight vector's sum from 1.
pub const WEIGHT_SUM_TOL: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplainError {
    #[error("frame weights must be non-negative and sum to 1 (sum {sum})")]
    InvalidWeights { sum: f64 },
    #[error("{weights} frame weights but {voicing} voicing flags")]
    LengthMismatch { weights: usize, voicing: usize },
    #[error("record {0} has no annotated voicing")]
    MissingTruth(String),
    #[error("asked for {k} frames of {frames}")]
    TooManyFrames { k: usize, frames: usize },
}

/// Where per-frame voicing comes from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VoicingSource {
    /// The model's own voicing decoder, thresholded.
    #[default]
    Model,
    /// Annotated voicing carried in the record.
    Truth,
}

/// `(voiced_share, unvoiced_share)` of the pooling weights.
pub fn utterance_reliance(weights: &[f64], voiced: &[bool]) -> Result<(f64, f64), ExplainError> {
    if weights.len() != voiced.len() {
        return Err(ExplainError::LengthMismatch {
            weights: weights.len(),
            voicing: voiced.len(),
        });
    }
    let sum: f64 = weights.iter().sum();
    if !sum.is_finite() || (sum - 1.0).abs() > WEIGHT_SUM_TOL || weights.iter().any(|w| *w < 0.0) {
        return Err(ExplainError::InvalidWeights { sum });
    }
    let v: f64 = weights.iter().zip(voiced).filter(|(_, &on)| on).map(|(w, _)| w).sum();
    let v = v.clamp(0.0, 1.0);
    Ok((v, 1.0 - v))
}

fn voicing_of(r: &ScoreRecord, source: VoicingSource) -> Result<Vec<bool>, ExplainError> {
    match source {
        VoicingSource::Model => Ok(r.voicing_prob.iter().map(|&p| p >= VOICING_THRESHOLD).collect()),
        VoicingSource::Truth => r.voiced_truth.clone().ok_or_else(|| ExplainError::MissingTruth(r.utt_id.clone())),
    }
}

/// Decision rule at a threshold; the boundary counts as fake.
pub fn is_correct(score: f64, label: Label, threshold: f64) -> bool {
    (score >= threshold) == (label == Label::Fake)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceReliance {
    pub utt_id: String,
    pub dataset_tag: String,
    pub label: Label,
    pub score: f64,
    pub voiced_share: f64,
    pub unvoiced_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReliance {
    pub dataset_tag: String,
    pub label: Label,
    pub n_utterances: usize,
    /// `None` for an empty group.
    pub voiced_share: Option<f64>,
    pub unvoiced_share: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelianceReport {
    pub threshold: f64,
    pub source: VoicingSource,
    /// One row per (dataset, class) seen in the input, sorted.
    pub groups: Vec<GroupReliance>,
    /// Correctly classified utterances, sorted by dataset, class and id.
    pub utterances: Vec<UtteranceReliance>,
}

/// Keeps utterances classified correctly at `threshold`, then averages
/// their shares per (dataset, class). The result does not depend on the
/// order of `records`.
pub fn aggregate(records: &[ScoreRecord], threshold: f64, source: VoicingSource) -> Result<RelianceReport, ExplainError> {
    let mut keys: BTreeSet<(String, Label)> = BTreeSet::new();
    let mut rows = Vec::new();
    for r in records {
        keys.insert((r.dataset_tag.clone(), Label::Real));
        keys.insert((r.dataset_tag.clone(), Label::Fake));
        if !is_correct(r.score, r.label, threshold) {
            continue;
        }
        let (voiced_share, unvoiced_share) = utterance_reliance(&r.frame_weights, &voicing_of(r, source)?)?;
        rows.push(UtteranceReliance {
            utt_id: r.utt_id.clone(),
            dataset_tag: r.dataset_tag.clone(),
            label: r.label,
            score: r.score,
            voiced_share,
            unvoiced_share,
        });
    }
    rows.sort_by(|a, b| {
        (&a.dataset_tag, a.label, &a.utt_id)
            .cmp(&(&b.dataset_tag, b.label, &b.utt_id))
            .then(a.score.total_cmp(&b.score))
            .then(a.voiced_share.total_cmp(&b.voiced_share))
    });

    let mut sums: BTreeMap<(String, Label), (usize, f64)> = keys.into_iter().map(|k| (k, (0, 0.0))).collect();
    for row in &rows {
        let e = sums.get_mut(&(row.dataset_tag.clone(), row.label)).expect("every row's key was registered");
        e.0 += 1;
        e.1 += row.voiced_share;
    }
    let groups = sums
        .into_iter()
        .map(|((dataset_tag, label), (n, v))| {
            let voiced = (n > 0).then(|| v / n as f64);
            GroupReliance {
                dataset_tag,
                label,
                n_utterances: n,
                voiced_share: voiced,
                unvoiced_share: voiced.map(|v| 1.0 - v),
            }
        })
        .collect();
    Ok(RelianceReport {
        threshold,
        source,
        groups,
        utterances: rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopFrame {
    pub index: usize,
    pub weight: f64,
    pub voiced: bool,
}

/// The `k` most heavily weighted frames; ties go to the earlier frame.
pub fn top_frames(record: &ScoreRecord, k: usize, source: VoicingSource) -> Result<Vec<TopFrame>, ExplainError> {
    let frames = record.frame_weights.len();
    if k > frames {
        return Err(ExplainError::TooManyFrames { k, frames });
    }
    let voiced = voicing_of(record, source)?;
    if voiced.len() != frames {
        return Err(ExplainError::LengthMismatch {
            weights: frames,
            voicing: voiced.len(),
        });
    }
    let mut idx: Vec<usize> = (0..frames).collect();
    idx.sort_by(|&a, &b| record.frame_weights[b].total_cmp(&record.frame_weights[a]).then(a.cmp(&b)));
    Ok(idx
        .into_iter()
        .take(k)
        .map(|i| TopFrame {
            index: i,
            weight: record.frame_weights[i],
            voiced: voiced[i],
        })
        .collect())
}
