use sfatnet_core::annotate::{annotate, FormantConfig, PitchConfig};
use sfatnet_core::dsp::{ingest, preprocess, DEFAULT_SILENCE_DB, SAMPLE_RATE};
use sfatnet_core::metrics::auc_from_scores;
use sfatnet_core::model::{Model, ModelConfig};
use sfatnet_core::synth::{generate_utterance, SyntheticCorpusSpec};
use sfatnet_core::train::{train_loop, Example, FormantScaler, TrainConfig};
use sfatnet_core::Label;

#[test]
fn tiny_corpus_is_overfit() {
    let spec = SyntheticCorpusSpec::new(8, 3);
    let examples: Vec<Example<f32>> = spec
        .plan()
        .into_iter()
        .map(|item| {
            let utt = generate_utterance(&spec, item.index, item.label);
            let x = preprocess(&ingest(&utt.samples, SAMPLE_RATE).unwrap(), DEFAULT_SILENCE_DB).unwrap();
            let ann = annotate(&x, &PitchConfig::default(), &FormantConfig::default());
            Example::from_waveform(&x, ann, item.label).unwrap()
        })
        .collect();
    let cfg = ModelConfig::toy(128, 256);
    let scaler = FormantScaler::fit(examples.iter().map(|e| &e.annotation), cfg.formant_ranges).unwrap();
    let tc = TrainConfig {
        batch_size: 4,
        lr: 2e-3,
        max_epochs: 30,
        seed: 1,
        ..TrainConfig::default()
    };
    let out = train_loop(Model::<f32>::new(cfg).unwrap(), &examples, &examples, &scaler, &tc, |_| {}).unwrap();

    let losses: Vec<f64> = out.history.iter().take(5).map(|r| r.train_total).collect();
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");

    let (mut fake, mut real) = (Vec::new(), Vec::new());
    for ex in &examples {
        let s = out.best.forward(&ex.mag, &ex.phase).unwrap().score;
        if ex.label == Label::Fake {
            fake.push(s);
        } else {
            real.push(s);
        }
    }
    assert_eq!(auc_from_scores(&fake, &real), 1.0);
}
