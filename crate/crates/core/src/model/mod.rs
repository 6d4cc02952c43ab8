//! Dual-stream transformer with formant, voicing and synthesis heads.
//!
//! ```text
//! mag tokens ──▶ embed + pos ──▶ encoder ─┐
//!                                         ├─ concat ─▶ fusion ─▶ z_enc
//! phase tokens ▶ embed + pos ──▶ encoder ─┘                        │
//!        ┌──────────────────────┬──────────────────────────────────┤
//!        ▼                      ▼                                  ▼
//!  formant decoder       voicing decoder              predictor stack
//!  σ(zW+b)·(hi−lo)+lo    σ(zW+b), mask ≥ 0.5          logsumexp pooling
//!                                                     LN ─▶ linear ─▶ σ
//! ```

mod config;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dsp::Tokens;
use crate::real::Real;
use crate::tensor::{Graph, ParamStore, Tensor, TensorError, Var};

pub use config::{count_params, ModelConfig, FORMANT_RANGES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("parameter {name}: expected shape {expected:?}, found {found:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("missing parameter {0}")]
    MissingParam(String),
}

/// Voicing threshold; a frame is voiced when its probability is at least this.
pub const VOICING_THRESHOLD: f64 = 0.5;

/// Plain-value result of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    /// `L` rows of (f0, F1, F2) in Hz.
    pub formants: Vec<[f64; 3]>,
    pub voicing_prob: Vec<f64>,
    pub v_mask: Vec<bool>,
    pub score: f64,
    pub frame_weights: Vec<f64>,
}

impl ModelOutput {
    /// Formant rows gated by the voicing mask; unvoiced frames report nothing.
    pub fn masked_formants(&self) -> Vec<Option<[f64; 3]>> {
        self.formants
            .iter()
            .zip(&self.v_mask)
            .map(|(f, &v)| if v { Some(*f) } else { None })
            .collect()
    }
}

/// Graph handles of the three heads for one utterance.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub z_enc: Var,
    /// `[L, 3]` formants in Hz.
    pub formants: Var,
    /// `[L, 1]` voicing probabilities.
    pub voicing: Var,
    /// `[1, 1]` synthesis probability.
    pub score: Var,
    /// `[L]` pooling weights.
    pub frame_weights: Var,
}

/// Parameters bound into one graph.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    index: BTreeMap<String, usize>,
}

impl<T: Real> Model<T> {
    /// Fresh model: Xavier-uniform projections, zero biases, unit/zero
    /// layer-norm scale/shift, small uniform positional embeddings.
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        for (name, shape) in config.param_shapes() {
            let t = if name.ends_with(".gamma") {
                Tensor::ones(&shape)
            } else if name.ends_with(".bias") || name.ends_with(".beta") {
                Tensor::zeros(&shape)
            } else if name.ends_with(".pos") {
                let n = shape.iter().product();
                Tensor::new(&shape, (0..n).map(|_| T::from_f64(rng.random_range(-0.02..0.02))).collect())?
            } else {
                Tensor::xavier_uniform(shape[0], shape[1], &mut rng)
            };
            params.push(name, t);
        }
        Ok(Self::assemble(config, params))
    }

    /// Wraps existing parameters after checking names and shapes.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self, ModelError> {
        config.validate()?;
        for (name, shape) in config.param_shapes() {
            let t = params.by_name(&name).map_err(|_| ModelError::MissingParam(name.clone()))?;
            if t.shape() != shape.as_slice() {
                return Err(ModelError::ParamShape {
                    name,
                    expected: shape,
                    found: t.shape().to_vec(),
                });
            }
        }
        Ok(Self::assemble(config, params))
    }

    fn assemble(config: ModelConfig, params: ParamStore<T>) -> Self {
        let index = params.names().enumerate().map(|(i, n)| (String::from(n), i)).collect();
        Self { config, params, index }
    }

    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
            index: self.index.clone(),
        }
    }

    /// Adds every parameter to `g` as a leaf.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Bound {
        let vars = self
            .params
            .tensors()
            .map(|t| {
                let mut t = t.clone();
                t.requires_grad = trainable;
                g.leaf(t)
            })
            .collect();
        Bound { vars }
    }

    fn p(&self, b: &Bound, name: &str) -> Var {
        b.vars[*self.index.get(name).unwrap_or_else(|| panic!("unknown parameter {name}"))]
    }

    fn linear(&self, g: &mut Graph<T>, b: &Bound, x: Var, prefix: &str) -> Result<Var, TensorError> {
        let y = g.matmul(x, self.p(b, &format!("{prefix}.weight")))?;
        g.add(y, self.p(b, &format!("{prefix}.bias")))
    }

    fn norm(&self, g: &mut Graph<T>, b: &Bound, x: Var, prefix: &str) -> Result<Var, TensorError> {
        g.layer_norm(x, self.p(b, &format!("{prefix}.gamma")), self.p(b, &format!("{prefix}.beta")))
    }

    fn attention(&self, g: &mut Graph<T>, b: &Bound, x: Var, prefix: &str, heads: usize, head_dim: usize) -> Result<Var, TensorError> {
        let inner = heads * head_dim;
        let qkv = self.linear(g, b, x, &format!("{prefix}.qkv"))?;
        let scale = T::from_f64(1.0 / libm::sqrt(head_dim as f64));
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let q = g.slice(qkv, h * head_dim, head_dim)?;
            let k = g.slice(qkv, inner + h * head_dim, head_dim)?;
            let v = g.slice(qkv, 2 * inner + h * head_dim, head_dim)?;
            let kt = g.transpose(k)?;
            let scores = g.matmul(q, kt)?;
            let scores = g.scale(scores, scale);
            let attn = g.softmax(scores, 1)?;
            outs.push(g.matmul(attn, v)?);
        }
        let cat = if heads == 1 { outs[0] } else { g.concat(&outs)? };
        self.linear(g, b, cat, &format!("{prefix}.out"))
    }

    /// Pre-norm transformer stack followed by a final layer norm.
    fn stack(&self, g: &mut Graph<T>, b: &Bound, mut x: Var, prefix: &str, layers: usize, heads: usize, head_dim: usize) -> Result<Var, TensorError> {
        for l in 0..layers {
            let p = format!("{prefix}.layers.{l}");
            let h = self.norm(g, b, x, &format!("{p}.ln1"))?;
            let h = self.attention(g, b, h, &format!("{p}.attn"), heads, head_dim)?;
            x = g.add(x, h)?;
            let h = self.norm(g, b, x, &format!("{p}.ln2"))?;
            let h = self.linear(g, b, h, &format!("{p}.mlp.fc1"))?;
            let h = g.gelu(h);
            let h = self.linear(g, b, h, &format!("{p}.mlp.fc2"))?;
            x = g.add(x, h)?;
        }
        self.norm(g, b, x, &format!("{prefix}.final_ln"))
    }

    fn check_tokens(&self, g: &Graph<T>, v: Var) -> Result<(), TensorError> {
        let expected = [self.config.n_frames, self.config.n_bins];
        if g.shape(v) != expected {
            return Err(TensorError::ShapeError {
                op: "tokens",
                lhs: g.shape(v).to_vec(),
                rhs: expected.to_vec(),
            });
        }
        Ok(())
    }

    /// Both encoders plus the fusion projection; returns `z_enc ∈ L×D`.
    pub fn encode(&self, g: &mut Graph<T>, b: &Bound, mag: Var, phase: Var) -> Result<Var, TensorError> {
        self.check_tokens(g, mag)?;
        self.check_tokens(g, phase)?;
        let c = &self.config;
        let mut streams = [mag, phase];
        for (stream, x) in ["mag", "phase"].iter().zip(streams.iter_mut()) {
            let e = self.linear(g, b, *x, &format!("{stream}.embed"))?;
            let e = g.add(e, self.p(b, &format!("{stream}.pos")))?;
            *x = self.stack(g, b, e, stream, c.enc_layers, c.enc_heads, c.enc_head_dim)?;
        }
        let cat = g.concat(&streams)?;
        self.linear(g, b, cat, "fusion")
    }

    /// `F̂ = σ(z W + b)·(hi − lo) + lo`, one column per formant.
    pub fn decode_formants(&self, g: &mut Graph<T>, b: &Bound, z_enc: Var) -> Result<Var, TensorError> {
        let z = self.linear(g, b, z_enc, "formant")?;
        let s = g.sigmoid(z);
        let rows = g.shape(z)[0];
        let ranges = &self.config.formant_ranges;
        let span: Vec<f64> = (0..rows).flat_map(|_| ranges.iter().map(|(lo, hi)| hi - lo)).collect();
        let span = g.constant(Tensor::from_f64(&[rows, 3], &span)?);
        let lo = g.constant(Tensor::from_f64(&[3], &ranges.map(|r| r.0))?);
        let scaled = g.mul(s, span)?;
        g.add(scaled, lo)
    }

    /// Per-frame voicing probability, `[L, 1]`.
    pub fn decode_voicing(&self, g: &mut Graph<T>, b: &Bound, z_enc: Var) -> Result<Var, TensorError> {
        let z = self.linear(g, b, z_enc, "voicing")?;
        Ok(g.sigmoid(z))
    }

    /// Predictor stack, attention pooling and the synthesis score.
    /// Returns `(score [1,1], frame_weights [L])`.
    pub fn pool_and_score(&self, g: &mut Graph<T>, b: &Bound, z_enc: Var) -> Result<(Var, Var), TensorError> {
        let c = &self.config;
        let z_p = self.stack(g, b, z_enc, "pred", c.pred_layers, c.pred_heads, c.pred_head_dim)?;
        let (pooled, weights) = attention_pool(g, z_p, self.p(b, "pool.weight"))?;
        let h = self.norm(g, b, pooled, "head.ln")?;
        let logit = self.linear(g, b, h, "head")?;
        Ok((g.sigmoid(logit), weights))
    }

    pub fn forward_graph(&self, g: &mut Graph<T>, b: &Bound, mag: Var, phase: Var) -> Result<ForwardVars, TensorError> {
        let z_enc = self.encode(g, b, mag, phase)?;
        let formants = self.decode_formants(g, b, z_enc)?;
        let voicing = self.decode_voicing(g, b, z_enc)?;
        let (score, frame_weights) = self.pool_and_score(g, b, z_enc)?;
        Ok(ForwardVars {
            z_enc,
            formants,
            voicing,
            score,
            frame_weights,
        })
    }

    /// Inference on `[L, M]` token tensors.
    pub fn forward(&self, mag: &Tensor<T>, phase: &Tensor<T>) -> Result<ModelOutput, ModelError> {
        let mut g = Graph::new();
        let b = self.bind(&mut g, false);
        let (m, p) = (g.constant(mag.clone()), g.constant(phase.clone()));
        let vars = self.forward_graph(&mut g, &b, m, p)?;
        Ok(output_from_graph(&g, &vars))
    }

    pub fn forward_tokens(&self, mag: &Tokens, phase: &Tokens) -> Result<ModelOutput, ModelError> {
        self.forward(&tokens_to_tensor(mag)?, &tokens_to_tensor(phase)?)
    }
}

/// Logsumexp-over-heads scoring, softmax over frames, weighted sum of rows.
/// `z_p` is `[L, D]`, `w_h` is `[D, H]`; returns `(pooled [1, D], weights [L])`.
pub fn attention_pool<T: Real>(g: &mut Graph<T>, z_p: Var, w_h: Var) -> Result<(Var, Var), TensorError> {
    let frames = g.shape(z_p)[0];
    let head_scores = g.matmul(z_p, w_h)?;
    let s = g.logsumexp(head_scores, 1)?;
    let weights = g.softmax(s, 0)?;
    let row = g.reshape(weights, &[1, frames])?;
    let pooled = g.matmul(row, z_p)?;
    Ok((pooled, weights))
}

pub fn output_from_graph<T: Real>(g: &Graph<T>, v: &ForwardVars) -> ModelOutput {
    let formants = g.value(v.formants).values().chunks(3).map(|r| [r[0].to_f64(), r[1].to_f64(), r[2].to_f64()]).collect();
    let voicing_prob: Vec<f64> = g.value(v.voicing).to_f64_vec();
    let v_mask = voicing_prob.iter().map(|&p| p >= VOICING_THRESHOLD).collect();
    ModelOutput {
        formants,
        voicing_prob,
        v_mask,
        score: g.value(v.score).item().to_f64(),
        frame_weights: g.value(v.frame_weights).to_f64_vec(),
    }
}

pub fn tokens_to_tensor<T: Real>(tokens: &Tokens) -> Result<Tensor<T>, TensorError> {
    Tensor::from_f64(&[tokens.n_tokens, tokens.width], &tokens.data)
}

/// Preimage of a target frequency under the formant mapping.
pub fn formant_logit(freq_hz: f64, range: (f64, f64)) -> f64 {
    let u = (freq_hz - range.0) / (range.1 - range.0);
    libm::log(u / (1.0 - u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::Rng;

    fn random_tokens<T: Real>(cfg: &ModelConfig, seed: u64) -> (Tensor<T>, Tensor<T>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = cfg.n_frames * cfg.n_bins;
        let mag = (0..n).map(|_| T::from_f64(rng.random_range(-4.0..2.0))).collect();
        let phase = (0..n).map(|_| T::from_f64(rng.random_range(-1.0..1.0))).collect();
        let shape = [cfg.n_frames, cfg.n_bins];
        (Tensor::new(&shape, mag).unwrap(), Tensor::new(&shape, phase).unwrap())
    }

    fn tiny() -> ModelConfig {
        ModelConfig {
            dim: 8,
            n_frames: 8,
            n_bins: 16,
            enc_layers: 1,
            enc_heads: 2,
            enc_head_dim: 4,
            pred_layers: 1,
            pred_heads: 2,
            pred_head_dim: 4,
            mlp_dim: 12,
            pool_heads: 2,
            formant_ranges: FORMANT_RANGES,
            seed: 3,
        }
    }

    /// Parameter count written out by hand from the layer structure.
    fn hand_count(c: &ModelConfig) -> usize {
        let d = c.dim;
        let block = |inner: usize| 2 * d + (d * 3 * inner + 3 * inner) + (inner * d + d) + 2 * d + (d * c.mlp_dim + c.mlp_dim) + (c.mlp_dim * d + d);
        let encoder = c.n_bins * d + d + c.n_frames * d + c.enc_layers * block(c.enc_heads * c.enc_head_dim) + 2 * d;
        let predictor = c.pred_layers * block(c.pred_heads * c.pred_head_dim) + 2 * d;
        2 * encoder + (2 * d * d + d) + (3 * d + 3) + (d + 1) + predictor + d * c.pool_heads + 2 * d + d + 1
    }

    #[test]
    fn count_matches_hand_formula() {
        for cfg in [tiny(), ModelConfig::toy(128, 256), ModelConfig::full()] {
            assert_eq!(count_params(&cfg), hand_count(&cfg));
        }
    }

    #[test]
    fn single_linear_count() {
        let mut cfg = tiny();
        cfg.dim = 4;
        cfg.enc_heads = 1;
        cfg.enc_head_dim = 4;
        let shapes = cfg.param_shapes();
        let formant: usize = shapes
            .iter()
            .filter(|(n, _)| n.starts_with("formant."))
            .map(|(_, s)| s.iter().product::<usize>())
            .sum();
        assert_eq!(formant, 15);
    }

    #[test]
    fn full_budget_is_close_to_41_8m() {
        let n = count_params(&ModelConfig::full()) as f64;
        assert!((n - 41.8e6).abs() <= 0.1 * 41.8e6, "{n}");
    }

    #[test]
    fn toy_count_matches_instantiated_params() {
        let m = Model::<f32>::new(tiny()).unwrap();
        assert_eq!(m.param_count(), count_params(&tiny()));
    }

    #[test]
    fn config_validation() {
        let mut c = tiny();
        c.enc_heads = 3;
        assert!(matches!(Model::<f32>::new(c), Err(ModelError::Config(_))));
        let mut c = tiny();
        c.formant_ranges[1] = (900.0, 800.0);
        assert!(Model::<f32>::new(c).is_err());
    }

    #[test]
    fn encode_shape() {
        let m = Model::<f64>::new(tiny()).unwrap();
        let (mag, phase) = random_tokens::<f64>(&m.config, 1);
        let mut g = Graph::new();
        let b = m.bind(&mut g, false);
        let (a, p) = (g.constant(mag), g.constant(phase));
        let z = m.encode(&mut g, &b, a, p).unwrap();
        assert_eq!(g.shape(z), &[8, 8]);
    }

    #[test]
    fn wrong_token_shape_is_rejected() {
        let m = Model::<f64>::new(tiny()).unwrap();
        let bad = Tensor::<f64>::zeros(&[8, 15]);
        let ok = Tensor::<f64>::zeros(&[8, 16]);
        assert!(matches!(m.forward(&bad, &ok), Err(ModelError::Tensor(TensorError::ShapeError { .. }))));
    }

    #[test]
    fn identity_fusion_passes_magnitude_stream() {
        let mut cfg = tiny();
        cfg.enc_layers = 0;
        let mut m = Model::<f64>::new(cfg.clone()).unwrap();
        let d = cfg.dim;
        {
            let w = m.params.by_name_mut("fusion.weight").unwrap();
            let vals = w.values_mut();
            vals.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..d {
                vals[i * d + i] = 1.0;
            }
        }
        let (mag, phase) = random_tokens::<f64>(&cfg, 2);
        let mut g = Graph::new();
        let b = m.bind(&mut g, false);
        let (a, p) = (g.constant(mag.clone()), g.constant(phase));
        let z = m.encode(&mut g, &b, a, p).unwrap();

        // projected magnitude stream: final_ln(mag·W + b + pos)
        let mut g2 = Graph::new();
        let b2 = m.bind(&mut g2, false);
        let a2 = g2.constant(mag);
        let e = m.linear(&mut g2, &b2, a2, "mag.embed").unwrap();
        let e = g2.add(e, m.p(&b2, "mag.pos")).unwrap();
        let expected = m.norm(&mut g2, &b2, e, "mag.final_ln").unwrap();
        assert_eq!(g.value(z).values(), g2.value(expected).values());
    }

    #[test]
    fn attention_is_permutation_equivariant_without_positions() {
        let cfg = tiny();
        let mut m = Model::<f64>::new(cfg.clone()).unwrap();
        for s in ["mag.pos", "phase.pos"] {
            m.params.by_name_mut(s).unwrap().values_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let (mag, phase) = random_tokens::<f64>(&cfg, 4);
        let swap = |t: &Tensor<f64>| {
            let mut v = t.values().to_vec();
            let w = cfg.n_bins;
            for j in 0..w {
                v.swap(1 * w + j, 5 * w + j);
            }
            Tensor::new(t.shape(), v).unwrap()
        };
        let run = |mag: Tensor<f64>, phase: Tensor<f64>| {
            let mut g = Graph::new();
            let b = m.bind(&mut g, false);
            let (a, p) = (g.constant(mag), g.constant(phase));
            let z = m.encode(&mut g, &b, a, p).unwrap();
            g.value(z).values().to_vec()
        };
        let base = run(mag.clone(), phase.clone());
        let permuted = run(swap(&mag), swap(&phase));
        let d = cfg.dim;
        for t in 0..cfg.n_frames {
            let src = match t {
                1 => 5,
                5 => 1,
                t => t,
            };
            for j in 0..d {
                assert!((permuted[t * d + j] - base[src * d + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn formant_midpoints_and_limits() {
        let cfg = tiny();
        let mut m = Model::<f64>::new(cfg.clone()).unwrap();
        m.params.by_name_mut("formant.weight").unwrap().values_mut().iter_mut().for_each(|v| *v = 0.0);
        let (mag, phase) = random_tokens::<f64>(&cfg, 5);
        let out = m.forward(&mag, &phase).unwrap();
        for row in &out.formants {
            assert!((row[0] - 230.0).abs() < 1e-12);
            assert!((row[1] - 525.0).abs() < 1e-12);
            assert!((row[2] - 1750.0).abs() < 1e-12);
        }
        m.params.by_name_mut("formant.bias").unwrap().values_mut().iter_mut().for_each(|v| *v = 40.0);
        let out = m.forward(&mag, &phase).unwrap();
        for row in &out.formants {
            for (v, (_, hi)) in row.iter().zip(FORMANT_RANGES) {
                assert!(*v <= hi && hi - v < 1e-9);
            }
        }
    }

    #[test]
    fn formant_preimage_of_196hz() {
        let z = formant_logit(196.0, (60.0, 400.0));
        assert!((z - libm::log(0.4 / 0.6)).abs() < 1e-12);
        assert!((z + 0.405).abs() < 1e-3);
        let back = 1.0 / (1.0 + libm::exp(-z)) * 340.0 + 60.0;
        assert!((back - 196.0).abs() < 1e-9);
    }

    #[test]
    fn voicing_threshold_is_inclusive() {
        let cfg = tiny();
        let mut m = Model::<f64>::new(cfg.clone()).unwrap();
        m.params.by_name_mut("voicing.weight").unwrap().values_mut().iter_mut().for_each(|v| *v = 0.0);
        let (mag, phase) = random_tokens::<f64>(&cfg, 6);
        let out = m.forward(&mag, &phase).unwrap();
        assert!(out.voicing_prob.iter().all(|&p| p == 0.5));
        assert!(out.v_mask.iter().all(|&v| v));
        m.params.by_name_mut("voicing.bias").unwrap().values_mut()[0] = 10.0;
        let out = m.forward(&mag, &phase).unwrap();
        assert!(out.voicing_prob.iter().all(|&p| p > 0.9999));
    }

    #[test]
    fn masked_view_hides_unvoiced_rows() {
        let out = ModelOutput {
            formants: vec![[100.0, 500.0, 1500.0], [110.0, 510.0, 1510.0]],
            voicing_prob: vec![0.9, 0.1],
            v_mask: vec![true, false],
            score: 0.5,
            frame_weights: vec![0.5, 0.5],
        };
        assert_eq!(out.masked_formants(), vec![Some([100.0, 500.0, 1500.0]), None]);
    }

    #[test]
    fn pooling_hand_example() {
        let mut g = Graph::<f64>::new();
        let z = g.constant(Tensor::new(&[2, 1], vec![0.0, libm::log(3.0)]).unwrap());
        let w = g.constant(Tensor::new(&[1, 1], vec![1.0]).unwrap());
        let (pooled, weights) = attention_pool(&mut g, z, w).unwrap();
        let wv = g.value(weights).values();
        assert!((wv[0] - 0.25).abs() < 1e-15);
        assert!((wv[1] - 0.75).abs() < 1e-15);
        assert!((g.value(pooled).item() - 0.75 * libm::log(3.0)).abs() < 1e-15);
        assert!((g.value(pooled).item() - 0.824).abs() < 1e-3);
    }

    #[test]
    fn identical_rows_pool_uniformly() {
        let mut g = Graph::<f64>::new();
        let z = g.constant(Tensor::new(&[4, 2], vec![0.3, -0.2, 0.3, -0.2, 0.3, -0.2, 0.3, -0.2]).unwrap());
        let w = g.constant(Tensor::new(&[2, 3], vec![0.1, 0.5, -1.0, 2.0, 0.0, 0.3]).unwrap());
        let (_, weights) = attention_pool(&mut g, z, w).unwrap();
        assert!(g.value(weights).values().iter().all(|w| (w - 0.25).abs() < 1e-15));
    }

    #[test]
    fn pooling_weights_ignore_score_shift() {
        // adding c to every frame score is the same as a constant extra
        // column contribution; softmax must not move
        let mut g = Graph::<f64>::new();
        let s = g.constant(Tensor::new(&[3], vec![0.2, -1.0, 0.7]).unwrap());
        let shifted = g.add_scalar(s, 5.0);
        let a = g.softmax(s, 0).unwrap();
        let b = g.softmax(shifted, 0).unwrap();
        for (x, y) in g.value(a).values().iter().zip(g.value(b).values()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn head_count_only_changes_pool_weight() {
        let mut a = tiny();
        let mut b = tiny();
        a.pool_heads = 1;
        b.pool_heads = 5;
        let shapes_a = a.param_shapes();
        let shapes_b = b.param_shapes();
        for ((na, sa), (nb, sb)) in shapes_a.iter().zip(&shapes_b) {
            assert_eq!(na, nb);
            if na != "pool.weight" {
                assert_eq!(sa, sb);
            }
        }
        let (mag, phase) = random_tokens::<f64>(&b, 8);
        let oa = Model::<f64>::new(a).unwrap().forward(&mag, &phase).unwrap();
        let ob = Model::<f64>::new(b).unwrap().forward(&mag, &phase).unwrap();
        assert_eq!(oa.frame_weights.len(), ob.frame_weights.len());
        assert_eq!(oa.formants.len(), ob.formants.len());
    }

    #[test]
    fn forward_is_deterministic() {
        let m = Model::<f32>::new(tiny()).unwrap();
        let (mag, phase) = random_tokens::<f32>(&m.config, 9);
        assert_eq!(m.forward(&mag, &phase).unwrap(), m.forward(&mag, &phase).unwrap());
    }

    #[test]
    fn output_invariants_hold() {
        let m = Model::<f32>::new(tiny()).unwrap();
        for seed in 0..10 {
            let (mag, phase) = random_tokens::<f32>(&m.config, seed);
            let out = m.forward(&mag, &phase).unwrap();
            let total: f64 = out.frame_weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-5);
            assert!(out.score > 0.0 && out.score < 1.0);
            for row in &out.formants {
                for (v, (lo, hi)) in row.iter().zip(FORMANT_RANGES) {
                    assert!(*v >= lo && *v <= hi);
                }
            }
        }
    }

    #[test]
    fn from_params_checks_shapes() {
        let m = Model::<f32>::new(tiny()).unwrap();
        assert!(Model::from_params(tiny(), m.params.clone()).is_ok());
        let mut other = tiny();
        other.dim = 4;
        other.enc_head_dim = 2;
        other.pred_head_dim = 2;
        assert!(matches!(Model::from_params(other, m.params.clone()), Err(ModelError::ParamShape { .. })));
    }
}
