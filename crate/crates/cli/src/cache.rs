//! Content-addressed annotation cache.
//!
//! Each utterance gets one file in the cache directory holding a single JSON
//! line: `{utt_id, key, frames: [{t, f0, f1, f2, voiced}]}`. The key is a
//! SHA-256 over the audio file's bytes and the serialized preprocessing and
//! annotator parameters, so any change to either invalidates the entry.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sfatnet_core::annotate::{annotate, FormantConfig, FrameAnnotation, PitchConfig};
use sfatnet_core::dsp::{ingest, preprocess, FixedWaveform, DEFAULT_SILENCE_DB};

use crate::audio::read_wav;
use crate::error::{Error, Result};
use crate::manifest::{Manifest, ManifestEntry};

/// Everything that influences an annotation besides the audio itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotationParams {
    pub silence_db: f64,
    pub pitch: PitchConfig,
    pub formant: FormantConfig,
}

impl Default for AnnotationParams {
    fn default() -> Self {
        Self {
            silence_db: DEFAULT_SILENCE_DB,
            pitch: PitchConfig::default(),
            formant: FormantConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub t: usize,
    pub f0: Option<f64>,
    pub f1: f64,
    pub f2: f64,
    pub voiced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub utt_id: String,
    pub key: String,
    pub frames: Vec<FrameRecord>,
}

impl CacheRecord {
    pub fn new(utt_id: &str, key: &str, ann: &FrameAnnotation) -> Self {
        let frames = (0..ann.n_frames())
            .map(|t| FrameRecord {
                t,
                f0: ann.f0_hz[t],
                f1: ann.f1_hz[t],
                f2: ann.f2_hz[t],
                voiced: ann.voiced[t],
            })
            .collect();
        Self {
            utt_id: utt_id.to_string(),
            key: key.to_string(),
            frames,
        }
    }

    pub fn annotation(&self) -> FrameAnnotation {
        FrameAnnotation {
            f0_hz: self.frames.iter().map(|f| f.f0).collect(),
            f1_hz: self.frames.iter().map(|f| f.f1).collect(),
            f2_hz: self.frames.iter().map(|f| f.f2).collect(),
            voiced: self.frames.iter().map(|f| f.voiced).collect(),
        }
    }
}

pub fn cache_key(audio_bytes: &[u8], params: &AnnotationParams) -> String {
    let mut h = Sha256::new();
    h.update(audio_bytes);
    h.update(serde_json::to_vec(params).expect("parameters serialize"));
    hex::encode(h.finalize())
}

/// Reads, resamples, trims, normalizes and fits a WAV file to the model's
/// input length.
pub fn load_fixed(path: &Path, silence_db: f64) -> Result<FixedWaveform> {
    let (samples, rate) = read_wav(path)?;
    let audio_err = |source| Error::Audio {
        path: path.to_path_buf(),
        source,
    };
    let w = ingest(&samples, rate).map_err(audio_err)?;
    preprocess(&w, silence_db).map_err(audio_err)
}

/// An utterance ready for training or scoring.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub waveform: FixedWaveform,
    pub annotation: FrameAnnotation,
    pub reused: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skipped {
    pub utt_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CacheSummary {
    pub computed: usize,
    pub reused: usize,
    pub skipped: Vec<Skipped>,
}

pub struct AnnotationCache {
    dir: PathBuf,
    params: AnnotationParams,
    computations: AtomicUsize,
}

static TEMP_SEQ: AtomicUsize = AtomicUsize::new(0);

fn file_stem(utt_id: &str) -> String {
    let safe: String = utt_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .take(64)
        .collect();
    // the digest keeps ids that sanitize alike apart
    let digest = hex::encode(Sha256::digest(utt_id.as_bytes()));
    format!("{safe}-{}", &digest[..12])
}

impl AnnotationCache {
    pub fn open(dir: &Path, params: AnnotationParams) -> Result<Self> {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            params,
            computations: AtomicUsize::new(0),
        })
    }

    pub fn params(&self) -> &AnnotationParams {
        &self.params
    }

    /// Number of annotations computed (not read back) since opening.
    pub fn computations(&self) -> usize {
        self.computations.load(Ordering::Relaxed)
    }

    pub fn record_path(&self, utt_id: &str) -> PathBuf {
        self.dir.join(format!("{}.json", file_stem(utt_id)))
    }

    /// The stored record, if present and readable.
    pub fn read_record(&self, utt_id: &str) -> Option<CacheRecord> {
        let text = fs::read_to_string(self.record_path(utt_id)).ok()?;
        match serde_json::from_str::<CacheRecord>(text.trim_end()) {
            Ok(r) if r.utt_id == utt_id => Some(r),
            Ok(_) => None,
            Err(e) => {
                log::warn!("{utt_id}: ignoring unreadable cache record ({e})");
                None
            }
        }
    }

    fn write_record(&self, record: &CacheRecord) -> Result<()> {
        let path = self.record_path(&record.utt_id);
        let tmp = self.dir.join(format!(
            ".{}.{}.{}.tmp",
            file_stem(&record.utt_id),
            std::process::id(),
            TEMP_SEQ.fetch_add(1, Ordering::Relaxed)
        ));
        let mut line = serde_json::to_vec(record).expect("record serializes");
        line.push(b'\n');
        let write = || -> std::io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&line)?;
            f.sync_all()?;
            fs::rename(&tmp, &path)
        };
        write().map_err(|e| {
            let _ = fs::remove_file(&tmp);
            Error::Io { path, source: e }
        })
    }

    /// Preprocesses one utterance and returns its annotation, from the cache
    /// when the key matches and freshly computed (then stored) otherwise.
    pub fn prepare(&self, entry: &ManifestEntry) -> Result<Prepared> {
        let bytes = fs::read(&entry.audio_path).map_err(Error::io(&entry.audio_path))?;
        let key = cache_key(&bytes, &self.params);
        let waveform = load_fixed(&entry.audio_path, self.params.silence_db)?;
        if let Some(rec) = self.read_record(&entry.utt_id).filter(|r| r.key == key) {
            return Ok(Prepared {
                waveform,
                annotation: rec.annotation(),
                reused: true,
            });
        }
        let annotation = annotate(&waveform, &self.params.pitch, &self.params.formant);
        self.computations.fetch_add(1, Ordering::Relaxed);
        self.write_record(&CacheRecord::new(&entry.utt_id, &key, &annotation))?;
        Ok(Prepared {
            waveform,
            annotation,
            reused: false,
        })
    }

    /// Annotates every entry in parallel. Unreadable or silent audio is
    /// logged and reported as skipped; cache write failures abort.
    pub fn annotate_all(&self, entries: &[ManifestEntry]) -> Result<(Vec<Option<Prepared>>, CacheSummary)> {
        let results: Vec<Result<Prepared>> = entries.par_iter().map(|e| self.prepare(e)).collect();
        let mut summary = CacheSummary::default();
        let mut prepared = Vec::with_capacity(entries.len());
        for (entry, r) in entries.iter().zip(results) {
            match r {
                Ok(p) => {
                    if p.reused {
                        summary.reused += 1;
                    } else {
                        summary.computed += 1;
                    }
                    prepared.push(Some(p));
                }
                Err(e @ (Error::Wav { .. } | Error::Audio { .. })) => {
                    log::warn!("{}: skipped ({e})", entry.utt_id);
                    summary.skipped.push(Skipped {
                        utt_id: entry.utt_id.clone(),
                        reason: e.to_string(),
                    });
                    prepared.push(None);
                }
                Err(Error::Io { path, source }) if path == entry.audio_path => {
                    log::warn!("{}: skipped ({}: {source})", entry.utt_id, path.display());
                    summary.skipped.push(Skipped {
                        utt_id: entry.utt_id.clone(),
                        reason: source.to_string(),
                    });
                    prepared.push(None);
                }
                Err(e) => return Err(e),
            }
        }
        Ok((prepared, summary))
    }
}

/// Fills the cache for every manifest entry.
pub fn annotate_corpus(manifest: &Manifest, cache_dir: &Path, params: AnnotationParams) -> Result<CacheSummary> {
    let cache = AnnotationCache::open(cache_dir, params)?;
    let (_, summary) = cache.annotate_all(&manifest.entries)?;
    Ok(summary)
}
