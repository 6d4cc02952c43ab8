//! Multi-task objective, target scaling, class balancing and the
//! optimization loop.

mod loss;
mod schedule;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::FrameAnnotation;
use crate::dsp::{stft_features, tokenize, FixedWaveform};
use crate::model::{tokens_to_tensor, Model, ModelError};
use crate::real::Real;
use crate::tensor::{AdamW, AdamWConfig, Graph, ParamStore, Tensor, TensorError};
use crate::Label;

pub use loss::{compound_loss, compound_loss_graph, LossComponents, LossVars, LossWeights, BCE_EPS};
pub use schedule::{Observation, PlateauScheduler};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("prediction has {predicted} frames but annotation has {annotated}")]
    Alignment { predicted: usize, annotated: usize },
    #[error("degenerate training data: {0}")]
    DegenerateData(String),
    #[error("no {0:?} items to balance against")]
    ClassMissing(Label),
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error("non-finite {component} at epoch {epoch}{}", batch.map(|b| format!(", batch {b}")).unwrap_or_default())]
    NonFinite {
        epoch: usize,
        /// `None` when the validation pass produced the value.
        batch: Option<usize>,
        component: &'static str,
    },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Per-formant mean and standard deviation of log-Hz values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormantScaler {
    pub mean: [f64; 3],
    pub std: [f64; 3],
    /// Targets are clamped into these ranges before the log.
    pub ranges: [(f64, f64); 3],
}

/// Smallest spread accepted for a fitted formant.
pub const MIN_STD: f64 = 1e-12;

const FORMANT_NAMES: [&str; 3] = ["f0", "F1", "F2"];

impl FormantScaler {
    /// Fits on the voiced frames of `annotations` (the training split only).
    pub fn fit<'a>(annotations: impl IntoIterator<Item = &'a FrameAnnotation>, ranges: [(f64, f64); 3]) -> Result<Self, TrainError> {
        let mut logs: [Vec<f64>; 3] = Default::default();
        for a in annotations {
            for t in 0..a.n_frames() {
                if let (true, Some(f0)) = (a.voiced[t], a.f0_hz[t]) {
                    for (i, f) in [f0, a.f1_hz[t], a.f2_hz[t]].into_iter().enumerate() {
                        logs[i].push(libm::log(f.clamp(ranges[i].0, ranges[i].1)));
                    }
                }
            }
        }
        if logs[0].is_empty() {
            return Err(TrainError::DegenerateData("no voiced frames".into()));
        }
        let mut mean = [0.0; 3];
        let mut std = [0.0; 3];
        for i in 0..3 {
            let n = logs[i].len() as f64;
            mean[i] = logs[i].iter().sum::<f64>() / n;
            std[i] = libm::sqrt(logs[i].iter().map(|v| (v - mean[i]) * (v - mean[i])).sum::<f64>() / n);
            if !(std[i] > MIN_STD && std[i].is_finite()) {
                return Err(TrainError::DegenerateData(format!("{} has no spread over voiced frames", FORMANT_NAMES[i])));
            }
        }
        Ok(Self { mean, std, ranges })
    }

    /// Hz → clamped, log-scaled, standardized.
    pub fn apply(&self, hz: [f64; 3]) -> [f64; 3] {
        let logs = core::array::from_fn(|i| libm::log(hz[i].clamp(self.ranges[i].0, self.ranges[i].1)));
        self.standardize_log(logs)
    }

    pub fn standardize_log(&self, logs: [f64; 3]) -> [f64; 3] {
        core::array::from_fn(|i| (logs[i] - self.mean[i]) / self.std[i])
    }

    pub fn invert(&self, z: [f64; 3]) -> [f64; 3] {
        core::array::from_fn(|i| libm::exp(z[i] * self.std[i] + self.mean[i]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub plateau_patience: usize,
    pub decay_factor: f64,
    pub improvement_tolerance: f64,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub loss_weights: LossWeights,
    pub seed: u64,
    pub optimizer: AdamWConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            lr: 1e-4,
            plateau_patience: 10,
            decay_factor: 0.5,
            improvement_tolerance: 1e-5,
            early_stop_patience: 20,
            max_epochs: 100,
            loss_weights: LossWeights::default(),
            seed: 0,
            optimizer: AdamWConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let w = &self.loss_weights;
        let checks = [
            (self.batch_size > 0, "batch_size must be positive"),
            (self.plateau_patience > 0, "plateau_patience must be positive"),
            (self.early_stop_patience > 0, "early_stop_patience must be positive"),
            (self.max_epochs > 0, "max_epochs must be positive"),
            (w.score > 0.0 && w.voicing > 0.0 && w.formant > 0.0, "loss weights must be positive"),
            (self.lr >= 0.0 && self.lr.is_finite(), "lr must be finite and non-negative"),
            (self.decay_factor > 0.0 && self.decay_factor <= 1.0, "decay_factor must lie in (0, 1]"),
        ];
        match checks.into_iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(TrainError::Config(msg.into())),
            None => Ok(()),
        }
    }
}

/// One supervised utterance: both token grids plus its annotation and label.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<T> {
    pub mag: Tensor<T>,
    pub phase: Tensor<T>,
    pub annotation: FrameAnnotation,
    pub label: Label,
}

impl<T: Real> Example<T> {
    pub fn from_waveform(x: &FixedWaveform, annotation: FrameAnnotation, label: Label) -> Result<Self, TrainError> {
        let (mag, phase) = tokenize(&stft_features(x));
        if annotation.n_frames() != mag.n_tokens {
            return Err(TrainError::Alignment {
                predicted: mag.n_tokens,
                annotated: annotation.n_frames(),
            });
        }
        Ok(Self {
            mag: tokens_to_tensor(&mag)?,
            phase: tokens_to_tensor(&phase)?,
            annotation,
            label,
        })
    }
}

/// Oversamples the minority class by cycling through its items in order
/// until both classes are the same size. Majority items are untouched and
/// the input order is kept, with the repeats appended.
pub fn balance_classes<E: Clone>(items: &[E], label_of: impl Fn(&E) -> Label) -> Result<Vec<E>, TrainError> {
    let of = |l: Label| items.iter().filter(|e| label_of(e) == l).collect::<Vec<_>>();
    let (real, fake) = (of(Label::Real), of(Label::Fake));
    for (class, members) in [(Label::Real, &real), (Label::Fake, &fake)] {
        if members.is_empty() {
            return Err(TrainError::ClassMissing(class));
        }
    }
    let (minority, deficit) = if real.len() < fake.len() {
        (&real, fake.len() - real.len())
    } else {
        (&fake, real.len() - fake.len())
    };
    let mut out = items.to_vec();
    out.extend(minority.iter().cycle().take(deficit).map(|e| (*e).clone()));
    Ok(out)
}

/// Per-epoch history line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Rate used for this epoch's updates.
    pub lr: f64,
    pub train_total: f64,
    pub val_total: f64,
    /// Training-set means of the three terms.
    pub bce_p: f64,
    pub bce_v: f64,
    pub mse_f: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters from the epoch with the lowest validation loss.
    pub best: Model<T>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
}

fn mean_components(sum: LossComponents, n: usize) -> LossComponents {
    let k = n as f64;
    LossComponents {
        total: sum.total / k,
        bce_p: sum.bce_p / k,
        bce_v: sum.bce_v / k,
        mse_f: sum.mse_f / k,
    }
}

fn add_components(a: &mut LossComponents, b: LossComponents) {
    a.total += b.total;
    a.bce_p += b.bce_p;
    a.bce_v += b.bce_v;
    a.mse_f += b.mse_f;
}

/// Forward, loss and backward for one utterance; gradients of `loss·scale`
/// are added into the parameters' buffers.
pub fn accumulate_utterance<T: Real>(
    model: &mut Model<T>,
    ex: &Example<T>,
    scaler: &FormantScaler,
    weights: &LossWeights,
    scale: f64,
) -> Result<LossComponents, TrainError> {
    let mut g = Graph::new();
    let bound = model.bind(&mut g, true);
    let (m, p) = (g.constant(ex.mag.clone()), g.constant(ex.phase.clone()));
    let vars = model.forward_graph(&mut g, &bound, m, p)?;
    let loss = compound_loss_graph(&mut g, &vars, &ex.annotation, ex.label, scaler, weights)?;
    let parts = loss.components(&g);
    if parts.non_finite().is_some() {
        return Ok(parts);
    }
    let scaled = g.scale(loss.total, T::from_f64(scale));
    g.backward(scaled)?;
    for (param, var) in model.params.tensors_mut().zip(bound.vars()) {
        if let Some(grad) = g.grad(*var) {
            param.accumulate_grad(grad);
        }
    }
    Ok(parts)
}

/// Mean loss over `examples` without touching gradients.
pub fn evaluate_loss<T: Real>(
    model: &Model<T>,
    examples: &[Example<T>],
    scaler: &FormantScaler,
    weights: &LossWeights,
) -> Result<LossComponents, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::EmptySet("evaluation"));
    }
    let mut sum = LossComponents::default();
    for ex in examples {
        let mut g = Graph::new();
        let bound = model.bind(&mut g, false);
        let (m, p) = (g.constant(ex.mag.clone()), g.constant(ex.phase.clone()));
        let vars = model.forward_graph(&mut g, &bound, m, p)?;
        let loss = compound_loss_graph(&mut g, &vars, &ex.annotation, ex.label, scaler, weights)?;
        add_components(&mut sum, loss.components(&g));
    }
    Ok(mean_components(sum, examples.len()))
}

/// Mini-batch AdamW with plateau decay and early stopping on the
/// validation loss. `on_epoch` sees every history record as it is made.
pub fn train_loop<T: Real>(
    mut model: Model<T>,
    train: &[Example<T>],
    val: &[Example<T>],
    scaler: &FormantScaler,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptySet("training"));
    }
    if val.is_empty() {
        return Err(TrainError::EmptySet("validation"));
    }
    let weights = cfg.loss_weights;
    let mut opt = AdamW::new(cfg.optimizer, &model.params);
    let mut sched = PlateauScheduler::new(cfg.lr, cfg.plateau_patience, cfg.decay_factor, cfg.improvement_tolerance);
    let mut best: ParamStore<T> = model.params.clone();
    let mut best_epoch = 0;
    let mut history = Vec::new();
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let lr = sched.lr;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add((epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        order.sort_unstable();
        order.shuffle(&mut rng);

        let mut sum = LossComponents::default();
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            model.params.zero_grads();
            let scale = 1.0 / idx.len() as f64;
            for &i in idx {
                let parts = accumulate_utterance(&mut model, &train[i], scaler, &weights, scale)?;
                if let Some(component) = parts.non_finite() {
                    return Err(TrainError::NonFinite {
                        epoch,
                        batch: Some(batch + 1),
                        component,
                    });
                }
                add_components(&mut sum, parts);
            }
            opt.step(&mut model.params, lr);
        }
        let train_mean = mean_components(sum, train.len());

        let val_loss = evaluate_loss(&model, val, scaler, &weights)?;
        if let Some(component) = val_loss.non_finite() {
            return Err(TrainError::NonFinite {
                epoch,
                batch: None,
                component,
            });
        }
        let obs = sched.observe(val_loss.total);
        if obs.improved {
            best = model.params.clone();
            best_epoch = epoch;
        }
        let record = EpochRecord {
            epoch,
            lr,
            train_total: train_mean.total,
            val_total: val_loss.total,
            bce_p: train_mean.bce_p,
            bce_v: train_mean.bce_v,
            mse_f: train_mean.mse_f,
        };
        on_epoch(&record);
        history.push(record);
        if obs.stale_epochs >= cfg.early_stop_patience {
            stopped_early = true;
            break;
        }
    }

    let best = Model::from_params(model.config.clone(), best)?;
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_val: sched.best(),
        history,
        stopped_early,
    })
}

#[cfg(test)]
mod tests;
