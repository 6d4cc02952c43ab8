//! Detection metrics over scored utterances: AUC, EER with its operating
//! threshold, and per-tag breakdowns.
//!
//! Fake speech is the positive class. At a threshold θ an utterance is
//! called fake when `score ≥ θ`; the false-acceptance rate counts reals
//! called fake and the false-rejection rate counts fakes called real.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Label;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no {0:?} records; both classes are required")]
    ClassMissing(Label),
    #[error("record {utt_id}: score {score} is not a probability")]
    InvalidScore { utt_id: String, score: f64 },
    #[error("record {utt_id}: frame weights sum to {sum}")]
    InvalidWeights { utt_id: String, sum: f64 },
}

/// One scored utterance as written to and read from score files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub utt_id: String,
    pub score: f64,
    pub label: Label,
    pub dataset_tag: String,
    #[serde(default)]
    pub codec_tag: Option<String>,
    #[serde(default)]
    pub frame_weights: Vec<f64>,
    #[serde(default)]
    pub voicing_prob: Vec<f64>,
    /// Annotated voicing, kept for ground-truth attribution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voiced_truth: Option<Vec<bool>>,
}

impl ScoreRecord {
    pub fn new(utt_id: impl Into<String>, score: f64, label: Label) -> Self {
        Self {
            utt_id: utt_id.into(),
            score,
            label,
            dataset_tag: String::new(),
            codec_tag: None,
            frame_weights: Vec::new(),
            voicing_prob: Vec::new(),
            voiced_truth: None,
        }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(0.0..=1.0).contains(&self.score) {
            return Err(MetricsError::InvalidScore {
                utt_id: self.utt_id.clone(),
                score: self.score,
            });
        }
        if !self.frame_weights.is_empty() {
            let sum: f64 = self.frame_weights.iter().sum();
            if (sum - 1.0).abs() > 1e-5 || self.frame_weights.iter().any(|w| *w < 0.0) {
                return Err(MetricsError::InvalidWeights {
                    utt_id: self.utt_id.clone(),
                    sum,
                });
            }
        }
        Ok(())
    }
}

fn split_scores(records: &[ScoreRecord]) -> Result<(Vec<f64>, Vec<f64>), MetricsError> {
    let (mut fake, mut real) = (Vec::new(), Vec::new());
    for r in records {
        match r.label {
            Label::Fake => fake.push(r.score),
            Label::Real => real.push(r.score),
        }
    }
    if fake.is_empty() {
        return Err(MetricsError::ClassMissing(Label::Fake));
    }
    if real.is_empty() {
        return Err(MetricsError::ClassMissing(Label::Real));
    }
    Ok((fake, real))
}

/// Probability that a random fake outscores a random real, ties counting
/// half. Computed from mid-ranks (Mann–Whitney).
pub fn compute_auc(records: &[ScoreRecord]) -> Result<f64, MetricsError> {
    let (fake, real) = split_scores(records)?;
    Ok(auc_from_scores(&fake, &real))
}

pub fn auc_from_scores(fake: &[f64], real: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = fake.iter().map(|&s| (s, true)).chain(real.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // twice the rank sum keeps mid-ranks integral
    let mut rank_sum2: u64 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let mid2 = (i + 1 + j + 1) as u64;
        rank_sum2 += mid2 * all[i..=j].iter().filter(|e| e.1).count() as u64;
        i = j + 1;
    }
    let (nf, nr) = (fake.len() as u64, real.len() as u64);
    // U·2 = 2·R − nf(nf+1); AUC = U / (nf·nr)
    let u2 = rank_sum2 - nf * (nf + 1);
    u2 as f64 / (2 * nf * nr) as f64
}

/// Equal error rate and the threshold where it occurs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eer {
    pub eer: f64,
    pub threshold: f64,
}

pub fn compute_eer(records: &[ScoreRecord]) -> Result<Eer, MetricsError> {
    let (fake, real) = split_scores(records)?;
    Ok(eer_from_scores(&fake, &real))
}

/// Sweeps −∞, the midpoints between distinct sorted scores, and +∞. The
/// first threshold where FRR reaches FAR marks the crossing; when the two
/// rates pass each other between thresholds the rates and the threshold
/// are linearly interpolated.
pub fn eer_from_scores(fake: &[f64], real: &[f64]) -> Eer {
    let mut all: Vec<(f64, bool)> = fake.iter().map(|&s| (s, true)).chain(real.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nf, nr) = (fake.len() as f64, real.len() as f64);

    // (θ, FAR, FRR); at θ = −∞ everything is called fake
    let mut points: Vec<(f64, f64, f64)> = Vec::with_capacity(all.len() + 1);
    points.push((f64::NEG_INFINITY, 1.0, 0.0));
    let (mut fakes_below, mut reals_below) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let s = all[i].0;
        while i < all.len() && all[i].0 == s {
            if all[i].1 {
                fakes_below += 1;
            } else {
                reals_below += 1;
            }
            i += 1;
        }
        let theta = if i < all.len() { s + (all[i].0 - s) / 2.0 } else { f64::INFINITY };
        points.push((theta, (real.len() - reals_below) as f64 / nr, fakes_below as f64 / nf));
    }
    let mut prev = points[0];
    for &(theta, far, frr) in &points {
        if frr >= far {
            if frr == far {
                return Eer { eer: far, threshold: theta };
            }
            let (t0, far0, frr0) = prev;
            let d0 = far0 - frr0;
            let d1 = far - frr;
            let a = d0 / (d0 - d1);
            let far_x = far0 + a * (far - far0);
            let frr_x = frr0 + a * (frr - frr0);
            let threshold = match (t0.is_finite(), theta.is_finite()) {
                (true, true) => t0 + a * (theta - t0),
                (true, false) => t0,
                _ => theta,
            };
            return Eer {
                eer: (far_x + frr_x) / 2.0,
                threshold,
            };
        }
        prev = (theta, far, frr);
    }
    // +∞ always has FRR = 1 ≥ FAR = 0
    unreachable!("sweep ends with every item called real")
}

/// Which tag a breakdown groups by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagKey {
    Dataset,
    Codec,
}

/// Group name used for records without a codec tag.
pub const UNTAGGED: &str = "none";
/// Name of the all-records row.
pub const OVERALL: &str = "overall";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub tag: String,
    pub n_real: usize,
    pub n_fake: usize,
    /// `None` when the group lacks one of the classes.
    pub eer: Option<f64>,
    pub threshold: Option<f64>,
    pub auc: Option<f64>,
}

fn row(tag: String, records: &[&ScoreRecord]) -> BreakdownRow {
    let fake: Vec<f64> = records.iter().filter(|r| r.label == Label::Fake).map(|r| r.score).collect();
    let real: Vec<f64> = records.iter().filter(|r| r.label == Label::Real).map(|r| r.score).collect();
    let defined = !fake.is_empty() && !real.is_empty();
    let eer = defined.then(|| eer_from_scores(&fake, &real));
    BreakdownRow {
        tag,
        n_real: real.len(),
        n_fake: fake.len(),
        eer: eer.map(|e| e.eer),
        threshold: eer.map(|e| e.threshold),
        auc: defined.then(|| auc_from_scores(&fake, &real)),
    }
}

/// Per-tag rows sorted by tag name, followed by the overall row.
pub fn breakdown(records: &[ScoreRecord], key: TagKey) -> Vec<BreakdownRow> {
    let mut groups: BTreeMap<&str, Vec<&ScoreRecord>> = BTreeMap::new();
    for r in records {
        let tag = match key {
            TagKey::Dataset => r.dataset_tag.as_str(),
            TagKey::Codec => r.codec_tag.as_deref().unwrap_or(UNTAGGED),
        };
        groups.entry(tag).or_default().push(r);
    }
    let mut rows: Vec<BreakdownRow> = groups.into_iter().map(|(tag, rs)| row(tag.into(), &rs)).collect();
    rows.push(row(OVERALL.into(), &records.iter().collect::<Vec<_>>()));
    rows
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| String::from("n/a"), |v| format!("{:.2}", 100.0 * v))
}

/// Tags as columns, EER and AUC as percentage rows with two decimals.
pub fn format_table(rows: &[BreakdownRow]) -> String {
    let mut cells: Vec<[String; 3]> = Vec::with_capacity(rows.len() + 1);
    cells.push(["".into(), "EER (%)".into(), "AUC (%)".into()]);
    for r in rows {
        cells.push([r.tag.clone(), pct(r.eer), pct(r.auc)]);
    }
    let widths: Vec<usize> = cells.iter().map(|c| c.iter().map(|s| s.chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for line in 0..3 {
        for (col, c) in cells.iter().enumerate() {
            if col > 0 {
                out.push_str("  ");
            }
            let cell = &c[line];
            if col == 0 {
                let _ = write!(out, "{cell:<w$}", w = widths[col]);
            } else {
                let _ = write!(out, "{cell:>w$}", w = widths[col]);
            }
        }
        out.push('\n');
    }
    out
}
