//! Comma-separated dataset manifests with a header row:
//!
//! ```text
//! utt_id,audio_path,label,dataset_tag,codec_tag,split
//! a001,wav/a001.wav,real,asv5,,train
//! ```
//!
//! Relative audio paths are resolved against the manifest's directory.
//! `codec_tag` may be empty; `split` defaults to `train` when empty.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sfatnet_core::synth::Split;
use sfatnet_core::Label;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub utt_id: String,
    pub audio_path: PathBuf,
    pub label: Label,
    pub dataset_tag: String,
    pub codec_tag: Option<String>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Deserialize)]
struct Row {
    utt_id: String,
    audio_path: String,
    label: String,
    dataset_tag: String,
    #[serde(default)]
    codec_tag: Option<String>,
    #[serde(default)]
    split: Option<String>,
}

fn parse_label(s: &str) -> Option<Label> {
    match s {
        "real" => Some(Label::Real),
        "fake" => Some(Label::Fake),
        _ => None,
    }
}

fn parse_split(s: Option<&str>) -> Option<Split> {
    match s.unwrap_or("") {
        "" | "train" => Some(Split::Train),
        "val" => Some(Split::Val),
        "test" => Some(Split::Test),
        _ => None,
    }
}

fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = entries.len() as u64 + 2;
        if row.utt_id.is_empty() {
            return Err(parse_err(line, "empty utt_id".into()));
        }
        let label = parse_label(&row.label).ok_or_else(|| parse_err(line, format!("label {:?} is not real or fake", row.label)))?;
        let split = parse_split(row.split.as_deref()).ok_or_else(|| parse_err(line, format!("split {:?} is not train, val or test", row.split.unwrap_or_default())))?;
        if !seen.insert(row.utt_id.clone()) {
            return Err(Error::DuplicateId(row.utt_id));
        }
        let audio = PathBuf::from(&row.audio_path);
        entries.push(ManifestEntry {
            utt_id: row.utt_id,
            audio_path: if audio.is_absolute() { audio } else { base.join(audio) },
            label,
            dataset_tag: row.dataset_tag,
            codec_tag: row.codec_tag.filter(|c| !c.is_empty()),
            split,
        });
    }
    let manifest = Manifest { entries };
    for missing in manifest.missing_audio() {
        log::warn!("{}: audio file {} not found", missing.utt_id, missing.audio_path.display());
    }
    Ok(manifest)
}

/// Writes `entries` with paths relative to `base` where possible.
pub fn write_manifest(path: &Path, manifest: &Manifest, base: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Data(e.to_string());
    w.write_record(["utt_id", "audio_path", "label", "dataset_tag", "codec_tag", "split"]).map_err(io)?;
    for e in &manifest.entries {
        let audio = e.audio_path.strip_prefix(base).unwrap_or(&e.audio_path);
        let label = match e.label {
            Label::Real => "real",
            Label::Fake => "fake",
        };
        w.write_record([
            e.utt_id.as_str(),
            &audio.to_string_lossy(),
            label,
            &e.dataset_tag,
            e.codec_tag.as_deref().unwrap_or(""),
            split_name(e.split),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    fs::write(path, bytes).map_err(Error::io(path))
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn missing_audio(&self) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| !e.audio_path.is_file()).collect()
    }

    pub fn in_split(&self, split: Split) -> Vec<ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).cloned().collect()
    }
}

/// Smallest input `split_90_10` accepts.
pub const MIN_SPLIT_ENTRIES: usize = 10;

/// Stratified 90/10 partition. Each class is shuffled with `seed` and its
/// first round(10%) items go to validation; both outputs keep input order.
pub fn split_90_10(entries: &[ManifestEntry], seed: u64) -> Result<(Vec<ManifestEntry>, Vec<ManifestEntry>)> {
    if entries.len() < MIN_SPLIT_ENTRIES {
        return Err(Error::InsufficientData {
            needed: MIN_SPLIT_ENTRIES,
            found: entries.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_val = vec![false; entries.len()];
    for class in [Label::Real, Label::Fake] {
        let mut idx: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].label == class).collect();
        idx.shuffle(&mut rng);
        let n_val = (idx.len() as f64 * 0.1).round() as usize;
        for &i in &idx[..n_val] {
            is_val[i] = true;
        }
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (e, v) in entries.iter().zip(is_val) {
        let mut e = e.clone();
        if v {
            e.split = Split::Val;
            val.push(e);
        } else {
            e.split = Split::Train;
            train.push(e);
        }
    }
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("manifest.csv");
        fs::write(&p, body).unwrap();
        p
    }

    const HEADER: &str = "utt_id,audio_path,label,dataset_tag,codec_tag,split\n";

    #[test]
    fn three_valid_rows() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{HEADER}a,a.wav,real,d,,train\nb,b.wav,fake,d,mp3,val\nc,/abs/c.wav,fake,d,,\n");
        let m = load_manifest(&write(dir.path(), &body)).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.entries[0].audio_path, dir.path().join("a.wav"));
        assert_eq!(m.entries[1].codec_tag.as_deref(), Some("mp3"));
        assert_eq!(m.entries[1].split, Split::Val);
        assert_eq!(m.entries[2].codec_tag, None);
        assert_eq!(m.entries[2].split, Split::Train);
        assert_eq!(m.entries[2].audio_path, PathBuf::from("/abs/c.wav"));
        assert_eq!(m.missing_audio().len(), 3);
    }

    #[test]
    fn bonafide_is_rejected_with_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{HEADER}a,a.wav,real,d,,train\nb,b.wav,bonafide,d,,train\n");
        match load_manifest(&write(dir.path(), &body)) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("bonafide"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ragged_row_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{HEADER}a,a.wav,real\n");
        assert!(matches!(load_manifest(&write(dir.path(), &body)), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn duplicate_ids_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{HEADER}a,a.wav,real,d,,\na,b.wav,fake,d,,\n");
        match load_manifest(&write(dir.path(), &body)) {
            Err(Error::DuplicateId(id)) => assert_eq!(id, "a"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{HEADER}a,wav/a.wav,real,d,,train\nb,wav/b.wav,fake,d,opus,test\n");
        let p = write(dir.path(), &body);
        let m = load_manifest(&p).unwrap();
        let out = dir.path().join("again.csv");
        write_manifest(&out, &m, dir.path()).unwrap();
        assert_eq!(fs::read_to_string(&out).unwrap(), body);
    }

    fn entries(n_real: usize, n_fake: usize) -> Vec<ManifestEntry> {
        (0..n_real + n_fake)
            .map(|i| ManifestEntry {
                utt_id: format!("u{i:03}"),
                audio_path: PathBuf::from(format!("u{i}.wav")),
                label: if i < n_real { Label::Real } else { Label::Fake },
                dataset_tag: "d".into(),
                codec_tag: None,
                split: Split::Train,
            })
            .collect()
    }

    #[test]
    fn ninety_ten_is_stratified() {
        let all = entries(50, 50);
        let (train, val) = split_90_10(&all, 3).unwrap();
        let count = |v: &[ManifestEntry], l: Label| v.iter().filter(|e| e.label == l).count();
        assert_eq!((train.len(), val.len()), (90, 10));
        assert_eq!((count(&train, Label::Real), count(&train, Label::Fake)), (45, 45));
        assert_eq!((count(&val, Label::Real), count(&val, Label::Fake)), (5, 5));
        assert!(val.iter().all(|e| e.split == Split::Val));
    }

    #[test]
    fn split_is_deterministic_and_a_partition() {
        let all = entries(23, 31);
        let a = split_90_10(&all, 9).unwrap();
        assert_eq!(a, split_90_10(&all, 9).unwrap());
        let mut ids: Vec<&str> = a.0.iter().chain(&a.1).map(|e| e.utt_id.as_str()).collect();
        ids.sort();
        let mut expected: Vec<&str> = all.iter().map(|e| e.utt_id.as_str()).collect();
        expected.sort();
        assert_eq!(ids, expected);
        assert_ne!(a.1, split_90_10(&all, 10).unwrap().1);
    }

    #[test]
    fn tiny_sets_cannot_be_split() {
        assert!(matches!(split_90_10(&entries(4, 5), 0), Err(Error::InsufficientData { found: 9, .. })));
    }
}
