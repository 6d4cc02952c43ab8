//! End-to-end orchestration behind each subcommand.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sfatnet_core::dsp::{stft_features, tokenize, FixedWaveform, N_BINS, N_FRAMES};
use sfatnet_core::explain::{aggregate, top_frames, RelianceReport, TopFrame, VoicingSource};
use sfatnet_core::metrics::{breakdown, compute_eer, eer_from_scores, BreakdownRow, ScoreRecord, TagKey};
use sfatnet_core::model::{Model, ModelOutput};
use sfatnet_core::train::{balance_classes, train_loop, EpochRecord, Example, FormantScaler};
use sfatnet_core::Label;

use crate::cache::{load_fixed, AnnotationCache, CacheSummary, Prepared};
use crate::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::manifest::{load_manifest, split_90_10, ManifestEntry};
use crate::scores::{read_scores, write_scores};

pub use crate::cache::annotate_corpus;

/// Threshold used when the validation set cannot define an EER.
pub const FALLBACK_THRESHOLD: f64 = 0.5;

pub fn run_annotate(manifest: &Path, cache_dir: &Path, cfg: &RunConfig) -> Result<CacheSummary> {
    let m = load_manifest(manifest)?;
    annotate_corpus(&m, cache_dir, cfg.annotation.clone())
}

fn score(model: &Model<f32>, x: &FixedWaveform) -> Result<ModelOutput> {
    let (mag, phase) = tokenize(&stft_features(x));
    Ok(model.forward_tokens(&mag, &phase)?)
}

fn prepared_examples(cache: &AnnotationCache, entries: &[ManifestEntry]) -> Result<(Vec<Example<f32>>, CacheSummary)> {
    let (prepared, summary) = cache.annotate_all(entries)?;
    let mut out = Vec::with_capacity(entries.len());
    for (entry, p) in entries.iter().zip(prepared) {
        if let Some(Prepared { waveform, annotation, .. }) = p {
            out.push(Example::from_waveform(&waveform, annotation, entry.label)?);
        }
    }
    Ok((out, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub n_train: usize,
    pub n_val: usize,
    pub n_skipped: usize,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub threshold: f64,
    pub checkpoint: PathBuf,
    pub history: PathBuf,
}

pub fn history_path(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".history.jsonl");
    PathBuf::from(s)
}

/// Trains on the manifest's `train` entries and validates on its `val`
/// entries, or on a stratified 90/10 split of `train` when it has none.
pub fn run_train(manifest: &Path, cache_dir: &Path, cfg: &RunConfig, out: &Path) -> Result<TrainSummary> {
    if (cfg.model.n_frames, cfg.model.n_bins) != (N_FRAMES, N_BINS) {
        return Err(Error::Usage(format!(
            "model expects {}x{} tokens but the frontend produces {N_FRAMES}x{N_BINS}",
            cfg.model.n_frames, cfg.model.n_bins
        )));
    }
    let m = load_manifest(manifest)?;
    let mut train = m.in_split(sfatnet_core::synth::Split::Train);
    let mut val = m.in_split(sfatnet_core::synth::Split::Val);
    if val.is_empty() {
        (train, val) = split_90_10(&train, cfg.train.seed)?;
    }
    let cache = AnnotationCache::open(cache_dir, cfg.annotation.clone())?;
    let (train_ex, s1) = prepared_examples(&cache, &train)?;
    let (val_ex, s2) = prepared_examples(&cache, &val)?;
    log::info!(
        "{} train / {} val utterances ({} annotated, {} from cache, {} skipped)",
        train_ex.len(),
        val_ex.len(),
        s1.computed + s2.computed,
        s1.reused + s2.reused,
        s1.skipped.len() + s2.skipped.len()
    );

    let scaler = FormantScaler::fit(train_ex.iter().map(|e| &e.annotation), cfg.model.formant_ranges)?;
    let balanced = balance_classes(&train_ex, |e| e.label)?;
    let mut history: Vec<EpochRecord> = Vec::new();
    let model = Model::<f32>::new(cfg.model.clone())?;
    let outcome = train_loop(model, &balanced, &val_ex, &scaler, &cfg.train, |r| {
        log::info!(
            "epoch {:3}  lr {:.2e}  train {:.5}  val {:.5}  (bce_p {:.5}  bce_v {:.5}  mse_f {:.5})",
            r.epoch,
            r.lr,
            r.train_total,
            r.val_total,
            r.bce_p,
            r.bce_v,
            r.mse_f
        );
        history.push(r.clone());
    })?;

    let (mut fake, mut real) = (Vec::new(), Vec::new());
    for ex in &val_ex {
        let s = outcome.best.forward(&ex.mag, &ex.phase)?.score;
        match ex.label {
            Label::Fake => fake.push(s),
            Label::Real => real.push(s),
        }
    }
    let threshold = if fake.is_empty() || real.is_empty() {
        log::warn!("validation set lacks a class; using threshold {FALLBACK_THRESHOLD}");
        FALLBACK_THRESHOLD
    } else {
        eer_from_scores(&fake, &real).threshold.clamp(0.0, 1.0)
    };

    let meta = CheckpointMeta {
        model: cfg.model.clone(),
        scaler,
        annotation: cfg.annotation.clone(),
        best_epoch: outcome.best_epoch,
        best_val_loss: outcome.best_val,
        threshold,
    };
    save_checkpoint(out, &outcome.best, &meta)?;
    let hist = history_path(out);
    write_jsonl(&hist, &history)?;
    Ok(TrainSummary {
        n_train: train_ex.len(),
        n_val: val_ex.len(),
        n_skipped: s1.skipped.len() + s2.skipped.len(),
        epochs: history.len(),
        best_epoch: outcome.best_epoch,
        best_val_loss: outcome.best_val,
        stopped_early: outcome.stopped_early,
        threshold,
        checkpoint: out.to_path_buf(),
        history: hist,
    })
}

fn write_jsonl<S: Serialize>(path: &Path, items: &[S]) -> Result<()> {
    let file = fs::File::create(path).map_err(Error::io(path))?;
    let mut w = BufWriter::new(file);
    for it in items {
        serde_json::to_writer(&mut w, it).expect("record serializes");
        w.write_all(b"\n").map_err(Error::io(path))?;
    }
    w.flush().map_err(Error::io(path))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub records: Vec<ScoreRecord>,
    /// Per-tag rows then the overall row.
    pub rows: Vec<BreakdownRow>,
    pub skipped: Vec<String>,
}

/// Scores every manifest entry. With `cache_dir`, annotated voicing is
/// attached to each record so reliance can be attributed to ground truth.
pub fn run_eval(manifest: &Path, ckpt: &Path, scores_out: &Path, by: TagKey, cache_dir: Option<&Path>) -> Result<EvalSummary> {
    let m = load_manifest(manifest)?;
    let (model, meta) = load_checkpoint(ckpt)?;
    let cache = cache_dir.map(|d| AnnotationCache::open(d, meta.annotation.clone())).transpose()?;

    let results: Vec<Result<ScoreRecord>> = m
        .entries
        .par_iter()
        .map(|e| {
            let (x, truth) = match &cache {
                Some(c) => {
                    let p = c.prepare(e)?;
                    (p.waveform, Some(p.annotation.voiced))
                }
                None => (load_fixed(&e.audio_path, meta.annotation.silence_db)?, None),
            };
            let out = score(&model, &x)?;
            let mut r = ScoreRecord::new(e.utt_id.clone(), out.score, e.label);
            r.dataset_tag = e.dataset_tag.clone();
            r.codec_tag = e.codec_tag.clone();
            r.frame_weights = out.frame_weights;
            r.voicing_prob = out.voicing_prob;
            r.voiced_truth = truth;
            Ok(r)
        })
        .collect();

    let mut records = Vec::with_capacity(results.len());
    let mut skipped = Vec::new();
    for (e, r) in m.entries.iter().zip(results) {
        match r {
            Ok(r) => records.push(r),
            Err(err @ (Error::Wav { .. } | Error::Audio { .. } | Error::Io { .. })) => {
                log::warn!("{}: skipped ({err})", e.utt_id);
                skipped.push(e.utt_id.clone());
            }
            Err(err) => return Err(err),
        }
    }
    if records.is_empty() {
        return Err(Error::Data("no utterance could be scored".into()));
    }
    write_scores(scores_out, &records)?;
    let rows = breakdown(&records, by);
    Ok(EvalSummary { records, rows, skipped })
}

/// Reliance report at the EER threshold of the score file.
pub fn run_explain(scores: &Path, report: &Path, source: VoicingSource) -> Result<RelianceReport> {
    let records = read_scores(scores)?;
    let threshold = compute_eer(&records)?.threshold;
    let rep = aggregate(&records, threshold, source)?;
    write_report(report, &rep)?;
    Ok(rep)
}

/// A `.csv` path receives the per-group table; anything else the full
/// report as JSON.
pub fn write_report(path: &Path, rep: &RelianceReport) -> Result<()> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let bytes = if is_csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        for g in &rep.groups {
            w.serialize(g).map_err(|e| Error::Data(e.to_string()))?;
        }
        w.into_inner().map_err(|e| Error::Data(e.to_string()))?
    } else {
        let mut v = serde_json::to_vec_pretty(rep).expect("report serializes");
        v.push(b'\n');
        v
    };
    fs::write(path, bytes).map_err(Error::io(path))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Inference {
    pub score: f64,
    pub threshold: f64,
    pub decision: Label,
    pub voiced_frames: usize,
    pub top_frames: Vec<TopFrame>,
}

/// Number of highest-weight frames reported by `run_infer`.
pub const TOP_FRAMES: usize = 5;

pub fn run_infer(wav: &Path, ckpt: &Path) -> Result<Inference> {
    let (model, meta) = load_checkpoint(ckpt)?;
    let x = load_fixed(wav, meta.annotation.silence_db)?;
    let out = score(&model, &x)?;
    let decision = if out.score >= meta.threshold { Label::Fake } else { Label::Real };
    let mut rec = ScoreRecord::new(wav.display().to_string(), out.score, decision);
    rec.frame_weights = out.frame_weights;
    rec.voicing_prob = out.voicing_prob;
    let k = TOP_FRAMES.min(rec.frame_weights.len());
    Ok(Inference {
        score: out.score,
        threshold: meta.threshold,
        decision,
        voiced_frames: out.v_mask.iter().filter(|v| **v).count(),
        top_frames: top_frames(&rec, k, VoicingSource::Model)?,
    })
}
