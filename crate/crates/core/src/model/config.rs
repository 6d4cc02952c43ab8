use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::dsp::{N_BINS, N_FRAMES};

/// Architecture hyperparameters. Every size may be shrunk for toy runs.
/// Missing fields deserialize from the toy configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Embedding width `D`.
    pub dim: usize,
    /// Frames per input `L`.
    pub n_frames: usize,
    /// Frequency bins per token `M`.
    pub n_bins: usize,
    pub enc_layers: usize,
    pub enc_heads: usize,
    pub enc_head_dim: usize,
    pub pred_layers: usize,
    pub pred_heads: usize,
    pub pred_head_dim: usize,
    /// Hidden width of every MLP block.
    pub mlp_dim: usize,
    /// Heads `H` of the attention-pooling projection.
    pub pool_heads: usize,
    /// `[lo, hi]` in Hz for f0, F1 and F2.
    pub formant_ranges: [(f64, f64); 3],
    /// Seed for parameter initialization.
    pub seed: u64,
}

pub const FORMANT_RANGES: [(f64, f64); 3] = [(60.0, 400.0), (200.0, 850.0), (800.0, 2700.0)];

impl Default for ModelConfig {
    fn default() -> Self {
        Self::toy(N_FRAMES, N_BINS)
    }
}

impl ModelConfig {
    /// Full-size configuration.
    pub fn full() -> Self {
        Self {
            dim: 512,
            n_frames: 128,
            n_bins: 256,
            enc_layers: 8,
            enc_heads: 8,
            enc_head_dim: 64,
            pred_layers: 4,
            pred_heads: 6,
            pred_head_dim: 64,
            mlp_dim: 1024,
            pool_heads: 4,
            formant_ranges: FORMANT_RANGES,
            seed: 0,
        }
    }

    /// Small configuration for desk-scale training and tests.
    pub fn toy(n_frames: usize, n_bins: usize) -> Self {
        Self {
            dim: 16,
            n_frames,
            n_bins,
            enc_layers: 1,
            enc_heads: 2,
            enc_head_dim: 8,
            pred_layers: 1,
            pred_heads: 2,
            pred_head_dim: 8,
            mlp_dim: 32,
            pool_heads: 2,
            formant_ranges: FORMANT_RANGES,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let sizes = [
            ("dim", self.dim),
            ("n_frames", self.n_frames),
            ("n_bins", self.n_bins),
            ("enc_heads", self.enc_heads),
            ("enc_head_dim", self.enc_head_dim),
            ("pred_heads", self.pred_heads),
            ("pred_head_dim", self.pred_head_dim),
            ("mlp_dim", self.mlp_dim),
            ("pool_heads", self.pool_heads),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if self.enc_heads * self.enc_head_dim != self.dim {
            return Err(ModelError::Config(format!(
                "encoder heads·head_dim = {} must equal dim {}",
                self.enc_heads * self.enc_head_dim,
                self.dim
            )));
        }
        for (i, (lo, hi)) in self.formant_ranges.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && *lo > 0.0 && lo < hi) {
                return Err(ModelError::Config(format!("formant range {i} is not an interval [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// Names and shapes of every learnable tensor, in storage order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.dim;
        let mut out = Vec::new();
        for stream in ["mag", "phase"] {
            out.push((format!("{stream}.embed.weight"), vec![self.n_bins, d]));
            out.push((format!("{stream}.embed.bias"), vec![d]));
            out.push((format!("{stream}.pos"), vec![self.n_frames, d]));
            self.stack_shapes(&mut out, stream, self.enc_layers, self.enc_heads * self.enc_head_dim);
        }
        out.push(("fusion.weight".into(), vec![2 * d, d]));
        out.push(("fusion.bias".into(), vec![d]));
        out.push(("formant.weight".into(), vec![d, 3]));
        out.push(("formant.bias".into(), vec![3]));
        out.push(("voicing.weight".into(), vec![d, 1]));
        out.push(("voicing.bias".into(), vec![1]));
        self.stack_shapes(&mut out, "pred", self.pred_layers, self.pred_heads * self.pred_head_dim);
        out.push(("pool.weight".into(), vec![d, self.pool_heads]));
        out.push(("head.ln.gamma".into(), vec![d]));
        out.push(("head.ln.beta".into(), vec![d]));
        out.push(("head.weight".into(), vec![d, 1]));
        out.push(("head.bias".into(), vec![1]));
        out
    }

    fn stack_shapes(&self, out: &mut Vec<(String, Vec<usize>)>, prefix: &str, layers: usize, inner: usize) {
        let d = self.dim;
        for l in 0..layers {
            let p = format!("{prefix}.layers.{l}");
            out.push((format!("{p}.ln1.gamma"), vec![d]));
            out.push((format!("{p}.ln1.beta"), vec![d]));
            out.push((format!("{p}.attn.qkv.weight"), vec![d, 3 * inner]));
            out.push((format!("{p}.attn.qkv.bias"), vec![3 * inner]));
            out.push((format!("{p}.attn.out.weight"), vec![inner, d]));
            out.push((format!("{p}.attn.out.bias"), vec![d]));
            out.push((format!("{p}.ln2.gamma"), vec![d]));
            out.push((format!("{p}.ln2.beta"), vec![d]));
            out.push((format!("{p}.mlp.fc1.weight"), vec![d, self.mlp_dim]));
            out.push((format!("{p}.mlp.fc1.bias"), vec![self.mlp_dim]));
            out.push((format!("{p}.mlp.fc2.weight"), vec![self.mlp_dim, d]));
            out.push((format!("{p}.mlp.fc2.bias"), vec![d]));
        }
        out.push((format!("{prefix}.final_ln.gamma"), vec![d]));
        out.push((format!("{prefix}.final_ln.beta"), vec![d]));
    }
}

/// Exact number of learnable scalars for a configuration.
pub fn count_params(cfg: &ModelConfig) -> usize {
    cfg.param_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
}
