//! Writes the synthetic corpus to disk as 16-bit WAV files plus a manifest.

use std::fs;
use std::path::Path;

use sfatnet_core::dsp::SAMPLE_RATE;
use sfatnet_core::synth::{generate_utterance, SyntheticCorpusSpec};
use sfatnet_core::Label;

use crate::audio::write_wav;
use crate::error::{Error, Result};
use crate::manifest::{write_manifest, Manifest, ManifestEntry};

pub const MANIFEST_NAME: &str = "manifest.csv";

pub fn load_spec(path: &Path) -> Result<SyntheticCorpusSpec> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    let spec: SyntheticCorpusSpec = toml::from_str(&text).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if spec.count == 0 {
        return Err(Error::Config {
            path: path.to_path_buf(),
            message: "count must be positive".into(),
        });
    }
    Ok(spec)
}

pub fn utt_id(spec: &SyntheticCorpusSpec, index: usize, label: Label) -> String {
    let class = match label {
        Label::Real => "real",
        Label::Fake => "fake",
    };
    format!("{}_{class}_{index:05}", spec.dataset_tag)
}

/// Generates every planned item under `out_dir/wav` and writes
/// `out_dir/manifest.csv`. Output bytes depend only on `spec`.
pub fn generate_synthetic_corpus(spec: &SyntheticCorpusSpec, out_dir: &Path) -> Result<Manifest> {
    let wav_dir = out_dir.join("wav");
    fs::create_dir_all(&wav_dir).map_err(Error::io(&wav_dir))?;
    let mut entries = Vec::with_capacity(spec.count);
    for item in spec.plan() {
        let id = utt_id(spec, item.index, item.label);
        let path = wav_dir.join(format!("{id}.wav"));
        let utt = generate_utterance(spec, item.index, item.label);
        write_wav(&path, &utt.samples, SAMPLE_RATE)?;
        entries.push(ManifestEntry {
            utt_id: id,
            audio_path: path,
            label: item.label,
            dataset_tag: spec.dataset_tag.clone(),
            codec_tag: item.codec_tag,
            split: item.split,
        });
    }
    let manifest = Manifest { entries };
    write_manifest(&out_dir.join(MANIFEST_NAME), &manifest, out_dir)?;
    Ok(manifest)
}
