use std::fs;
use std::path::Path;

use sfatnet::audio::read_wav;
use sfatnet::corpus::{generate_synthetic_corpus, load_spec, utt_id};
use sfatnet::manifest::load_manifest;
use sfatnet_core::annotate::pitch::track_pitch_samples;
use sfatnet_core::annotate::PitchConfig;
use sfatnet_core::synth::{generate_utterance, SyntheticCorpusSpec};
use sfatnet_core::Label;

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn same_spec_gives_byte_identical_corpora() {
    let spec = SyntheticCorpusSpec::new(8, 7);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_synthetic_corpus(&spec, a.path()).unwrap();
    generate_synthetic_corpus(&spec, b.path()).unwrap();
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert_eq!(ta.len(), 9);
    assert_eq!(ta, tb);
}

#[test]
fn manifest_lists_every_item() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.toml");
    fs::write(&spec_path, "count = 13\nseed = 2\ndataset_tag = \"toy\"\ncodec_tags = [\"mp3\", \"opus\"]\n").unwrap();
    let spec = load_spec(&spec_path).unwrap();
    let out = dir.path().join("corpus");
    generate_synthetic_corpus(&spec, &out).unwrap();
    let m = load_manifest(&out.join("manifest.csv")).unwrap();
    assert_eq!(m.len(), 13);
    assert!(m.missing_audio().is_empty());
    assert_eq!(m.entries.iter().filter(|e| e.label == Label::Real).count(), 7);
    assert!(m.entries.iter().all(|e| e.dataset_tag == "toy" && e.codec_tag.is_some()));
}

#[test]
fn zero_count_spec_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("spec.toml");
    fs::write(&p, "count = 0\nseed = 1\ndataset_tag = \"x\"\n").unwrap();
    assert!(load_spec(&p).is_err());
}

// The generator's own per-sample f0 is the reference: frames that lie
// entirely inside a voiced run must be tracked to its frame mean ± 2 Hz.
#[test]
fn real_items_carry_their_planned_f0() {
    let spec = SyntheticCorpusSpec::new(6, 11);
    let dir = tempfile::tempdir().unwrap();
    generate_synthetic_corpus(&spec, dir.path()).unwrap();
    let cfg = PitchConfig::default();
    for item in spec.plan().into_iter().filter(|i| i.label == Label::Real) {
        let utt = generate_utterance(&spec, item.index, item.label);
        let path = dir.path().join("wav").join(format!("{}.wav", utt_id(&spec, item.index, item.label)));
        let (samples, rate) = read_wav(&path).unwrap();
        assert_eq!(rate, 16_000);
        let track = track_pitch_samples(&samples, &cfg);
        let (mut checked, mut hits) = (0, 0);
        for (t, est) in track.iter().enumerate() {
            let span = &utt.f0_hz[t * cfg.hop_len..t * cfg.hop_len + cfg.frame_len];
            // skip frames touching a voicing boundary, including one hop either side
            let lo = t.saturating_sub(1) * cfg.hop_len;
            let hi = ((t + 1) * cfg.hop_len + cfg.frame_len).min(utt.f0_hz.len());
            if utt.f0_hz[lo..hi].iter().any(|f| *f == 0.0) {
                continue;
            }
            let truth = span.iter().sum::<f64>() / span.len() as f64;
            checked += 1;
            if est.is_some_and(|f| (f - truth).abs() <= 2.0) {
                hits += 1;
            }
        }
        assert!(checked > 10, "{}: only {checked} interior voiced frames", item.index);
        assert!(hits as f64 >= 0.95 * checked as f64, "{}: {hits}/{checked} frames within 2 Hz", item.index);
    }
}
