use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{FormantScaler, TrainError};
use crate::annotate::FrameAnnotation;
use crate::model::{ForwardVars, ModelOutput};
use crate::real::Real;
use crate::tensor::{Graph, Tensor, Var};
use crate::Label;

/// Probability clamp inside every BCE term.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub score: f64,
    pub voicing: f64,
    pub formant: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            score: 1.0,
            voicing: 0.3,
            formant: 0.3,
        }
    }
}

impl LossWeights {
    pub fn combine(&self, bce_p: f64, bce_v: f64, mse_f: f64) -> f64 {
        self.score * bce_p + self.voicing * bce_v + self.formant * mse_f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub total: f64,
    pub bce_p: f64,
    pub bce_v: f64,
    pub mse_f: f64,
}

impl LossComponents {
    /// Name and value of the first non-finite component, if any.
    pub fn non_finite(&self) -> Option<&'static str> {
        [("bce_p", self.bce_p), ("bce_v", self.bce_v), ("mse_f", self.mse_f), ("total", self.total)]
            .into_iter()
            .find(|(_, v)| !v.is_finite())
            .map(|(n, _)| n)
    }
}

/// Graph handles of the loss terms.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub bce_p: Var,
    pub bce_v: Var,
    pub mse_f: Var,
}

impl LossVars {
    pub fn components<T: Real>(&self, g: &Graph<T>) -> LossComponents {
        let v = |x: Var| g.value(x).item().to_f64();
        LossComponents {
            total: v(self.total),
            bce_p: v(self.bce_p),
            bce_v: v(self.bce_v),
            mse_f: v(self.mse_f),
        }
    }
}

fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(y * libm::log(p) + (1.0 - y) * libm::log(1.0 - p))
}

fn check_alignment(frames: usize, truth: &FrameAnnotation) -> Result<(), TrainError> {
    let n = truth.n_frames();
    if n != frames || truth.f0_hz.len() != n || truth.f1_hz.len() != n || truth.f2_hz.len() != n {
        return Err(TrainError::Alignment {
            predicted: frames,
            annotated: n,
        });
    }
    Ok(())
}

/// Standardized log targets per frame; `None` on unvoiced frames.
fn targets(truth: &FrameAnnotation, scaler: &FormantScaler) -> Vec<Option<[f64; 3]>> {
    (0..truth.n_frames())
        .map(|t| match (truth.voiced[t], truth.f0_hz[t]) {
            (true, Some(f0)) => Some(scaler.apply([f0, truth.f1_hz[t], truth.f2_hz[t]])),
            _ => None,
        })
        .collect()
}

/// Compound loss on plain forward outputs.
pub fn compound_loss(
    out: &ModelOutput,
    truth: &FrameAnnotation,
    label: Label,
    scaler: &FormantScaler,
    weights: &LossWeights,
) -> Result<LossComponents, TrainError> {
    let frames = out.formants.len();
    check_alignment(frames, truth)?;
    if out.voicing_prob.len() != frames {
        return Err(TrainError::Alignment {
            predicted: out.voicing_prob.len(),
            annotated: frames,
        });
    }
    let bce_p = bce(out.score, label.target() as f64);
    let bce_v = out
        .voicing_prob
        .iter()
        .zip(&truth.voiced)
        .map(|(&p, &v)| bce(p, if v { 1.0 } else { 0.0 }))
        .sum::<f64>()
        / frames as f64;

    let mut sq = 0.0;
    let mut n = 0usize;
    for (pred, target) in out.formants.iter().zip(targets(truth, scaler)) {
        if let Some(target) = target {
            let pred = scaler.standardize_log(pred.map(libm::log));
            for i in 0..3 {
                let d = pred[i] - target[i];
                sq += d * d;
            }
            n += 3;
        }
    }
    let mse_f = if n == 0 { 0.0 } else { sq / n as f64 };
    Ok(LossComponents {
        total: weights.combine(bce_p, bce_v, mse_f),
        bce_p,
        bce_v,
        mse_f,
    })
}

fn graph_bce<T: Real>(g: &mut Graph<T>, p: Var, y: &[f64]) -> Result<Var, TrainError> {
    let shape = g.shape(p).to_vec();
    let p = g.clamp(p, T::from_f64(BCE_EPS), T::from_f64(1.0 - BCE_EPS));
    let lp = g.log(p);
    let neg = g.scale(p, T::from_f64(-1.0));
    let q = g.add_scalar(neg, T::ONE);
    let lq = g.log(q);
    let yt = g.constant(Tensor::from_f64(&shape, y)?);
    let not_y: Vec<f64> = y.iter().map(|v| 1.0 - v).collect();
    let nyt = g.constant(Tensor::from_f64(&shape, &not_y)?);
    let a = g.mul(yt, lp)?;
    let b = g.mul(nyt, lq)?;
    let s = g.add(a, b)?;
    let m = g.mean(s, None)?;
    Ok(g.scale(m, T::from_f64(-1.0)))
}

/// Compound loss recorded in `g` so it can be backpropagated.
pub fn compound_loss_graph<T: Real>(
    g: &mut Graph<T>,
    vars: &ForwardVars,
    truth: &FrameAnnotation,
    label: Label,
    scaler: &FormantScaler,
    weights: &LossWeights,
) -> Result<LossVars, TrainError> {
    let frames = g.shape(vars.formants)[0];
    check_alignment(frames, truth)?;

    let bce_p = graph_bce(g, vars.score, &[label.target() as f64])?;
    let voiced: Vec<f64> = truth.voiced.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    let bce_v = graph_bce(g, vars.voicing, &voiced)?;

    let targets = targets(truth, scaler);
    let n_voiced = targets.iter().filter(|t| t.is_some()).count();
    let mse_f = if n_voiced == 0 {
        g.constant(Tensor::scalar(T::ZERO))
    } else {
        let logf = g.log(vars.formants);
        let neg_mean = g.constant(Tensor::from_f64(&[3], &scaler.mean.map(|m| -m))?);
        let centred = g.add(logf, neg_mean)?;
        let mut inv_std = Vec::with_capacity(frames * 3);
        let mut target = Vec::with_capacity(frames * 3);
        for t in &targets {
            for i in 0..3 {
                // unvoiced rows are zeroed on both sides
                let on = t.is_some();
                inv_std.push(if on { 1.0 / scaler.std[i] } else { 0.0 });
                target.push(t.map_or(0.0, |v| v[i]));
            }
        }
        let inv_std = g.constant(Tensor::from_f64(&[frames, 3], &inv_std)?);
        let target = g.constant(Tensor::from_f64(&[frames, 3], &target)?);
        let z = g.mul(centred, inv_std)?;
        let d = g.sub(z, target)?;
        let sq = g.mul(d, d)?;
        let s = g.sum(sq, None)?;
        g.scale(s, T::from_f64(1.0 / (3 * n_voiced) as f64))
    };

    let wp = g.scale(bce_p, T::from_f64(weights.score));
    let wv = g.scale(bce_v, T::from_f64(weights.voicing));
    let wf = g.scale(mse_f, T::from_f64(weights.formant));
    let partial = g.add(wp, wv)?;
    let total = g.add(partial, wf)?;
    Ok(LossVars {
        total,
        bce_p,
        bce_v,
        mse_f,
    })
}
