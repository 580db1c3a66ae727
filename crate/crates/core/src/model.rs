//! Decoder-only transformer with a tied LM head and a next-utterance
//! classification head.
//!
//! Each input position embeds as word + position + dialog-state. Blocks are
//! post-norm: `x = LN(x + Attn(x))`, `x = LN(x + MLP(x))`, followed by a
//! final layer norm. Attention is causal and ignores padded keys.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const MASK_VALUE: f64 = -1e9;
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub n_positions: usize,
    pub n_states: usize,
    pub dropout_rate: f64,
    #[serde(default)]
    pub activation: Activation,
}

impl ModelConfig {
    /// CPU-friendly default: 4 layers, width 128, 4 heads.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            n_layers: 4,
            d_model: 128,
            n_heads: 4,
            d_ff: 512,
            vocab_size,
            n_positions: 256,
            n_states: crate::input::N_STATES,
            dropout_rate: 0.1,
            activation: Activation::Relu,
        }
    }

    /// Full-size 12-layer, 768-wide, 12-head configuration.
    pub fn full(vocab_size: usize) -> Self {
        Self {
            n_layers: 12,
            d_model: 768,
            n_heads: 12,
            d_ff: 3072,
            vocab_size,
            n_positions: 512,
            n_states: crate::input::N_STATES,
            dropout_rate: 0.1,
            activation: Activation::Relu,
        }
    }

    /// Two layers, width 16. Used by gradient checks.
    pub fn tiny(vocab_size: usize) -> Self {
        Self {
            n_layers: 2,
            d_model: 16,
            n_heads: 2,
            d_ff: 64,
            vocab_size,
            n_positions: 32,
            n_states: crate::input::N_STATES,
            dropout_rate: 0.0,
            activation: Activation::Relu,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_layers == 0 || self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return fail("layer count, width, heads and d_ff must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return fail(format!("d_model {} is not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.vocab_size == 0 || self.n_positions == 0 {
            return fail("vocab_size and n_positions must be positive".into());
        }
        if self.n_states < crate::input::N_STATES {
            return fail(format!("n_states must be at least {}", crate::input::N_STATES));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        Ok(())
    }

    /// Every parameter tensor in storage order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (d, f) = (self.d_model, self.d_ff);
        let mut out = vec![
            ("wte".to_string(), vec![self.vocab_size, d]),
            ("wpe".to_string(), vec![self.n_positions, d]),
            ("wse".to_string(), vec![self.n_states, d]),
        ];
        for l in 0..self.n_layers {
            let p = |s: &str| format!("h{l}.{s}");
            for proj in ["q", "k", "v", "o"] {
                out.push((p(&format!("attn.{proj}.w")), vec![d, d]));
                out.push((p(&format!("attn.{proj}.b")), vec![d]));
            }
            out.push((p("ln1.g"), vec![d]));
            out.push((p("ln1.b"), vec![d]));
            out.push((p("mlp.fc.w"), vec![d, f]));
            out.push((p("mlp.fc.b"), vec![f]));
            out.push((p("mlp.proj.w"), vec![f, d]));
            out.push((p("mlp.proj.b"), vec![d]));
            out.push((p("ln2.g"), vec![d]));
            out.push((p("ln2.b"), vec![d]));
        }
        out.push(("ln_f.g".to_string(), vec![d]));
        out.push(("ln_f.b".to_string(), vec![d]));
        out.push(("cls.w".to_string(), vec![d, 1]));
        out.push(("cls.b".to_string(), vec![1]));
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}

const PER_LAYER: usize = 16;
const EMBEDDINGS: usize = 3;

/// True for tensors that weight decay should shrink: everything except
/// biases and layer-norm parameters.
pub fn is_decayed(name: &str) -> bool {
    !(name.ends_with(".b") || name.contains("ln"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ModelParams<T> {
    /// Normal(0, 0.02) weights, unit layer-norm gains, zero biases.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (names, tensors) = config
            .param_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let t = if name.ends_with(".g") {
                    Tensor::full(&shape, T::one())
                } else if name.ends_with(".b") {
                    Tensor::zeros(&shape)
                } else {
                    Tensor::randn(&shape, INIT_STD, &mut rng)
                };
                (name, t)
            })
            .unzip();
        Ok(Self { config: config.clone(), names, tensors })
    }

    /// Assembles parameters from named tensors, checking every name and shape
    /// against `config`.
    pub fn from_named(config: &ModelConfig, mut named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        config.validate()?;
        let expected = config.param_shapes();
        let mut tensors = Vec::with_capacity(expected.len());
        let mut names = Vec::with_capacity(expected.len());
        for (name, shape) in expected {
            let pos = named.iter().position(|(n, _)| *n == name).ok_or_else(|| {
                Error::Checkpoint(format!("missing tensor {name}"))
            })?;
            let (_, t) = named.swap_remove(pos);
            if t.shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "shape mismatch for {name}: file has {:?}, model expects {:?}",
                    t.shape(),
                    shape
                )));
            }
            names.push(name);
            tensors.push(t);
        }
        if let Some((extra, _)) = named.first() {
            return Err(Error::Checkpoint(format!("unexpected tensor {extra}")));
        }
        Ok(Self { config: config.clone(), names, tensors })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.names.iter().position(|n| n == name).map(move |i| &mut self.tensors[i])
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    /// Registers every tensor in `g`: as gradient leaves when `trainable`,
    /// otherwise as constants.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> BoundParams {
        let vars = self
            .tensors
            .iter()
            .map(|t| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) })
            .collect();
        BoundParams { vars, n_layers: self.config.n_layers }
    }
}

/// Graph handles for one bound copy of the parameters.
#[derive(Debug, Clone)]
pub struct BoundParams {
    pub vars: Vec<Var>,
    n_layers: usize,
}

struct LayerVars {
    q: (Var, Var),
    k: (Var, Var),
    v: (Var, Var),
    o: (Var, Var),
    ln1: (Var, Var),
    fc: (Var, Var),
    proj: (Var, Var),
    ln2: (Var, Var),
}

impl BoundParams {
    /// Handles for externally registered tensors, in [`ModelConfig::param_shapes`]
    /// order.
    pub fn from_vars(vars: Vec<Var>, config: &ModelConfig) -> Self {
        Self { vars, n_layers: config.n_layers }
    }

    pub fn wte(&self) -> Var {
        self.vars[0]
    }
    fn wpe(&self) -> Var {
        self.vars[1]
    }
    fn wse(&self) -> Var {
        self.vars[2]
    }
    fn layer(&self, l: usize) -> LayerVars {
        let b = EMBEDDINGS + l * PER_LAYER;
        let p = |i: usize| (self.vars[b + i], self.vars[b + i + 1]);
        LayerVars { q: p(0), k: p(2), v: p(4), o: p(6), ln1: p(8), fc: p(10), proj: p(12), ln2: p(14) }
    }
    fn tail(&self) -> usize {
        EMBEDDINGS + self.n_layers * PER_LAYER
    }
    fn ln_f(&self) -> (Var, Var) {
        (self.vars[self.tail()], self.vars[self.tail() + 1])
    }
    fn cls(&self) -> (Var, Var) {
        (self.vars[self.tail() + 2], self.vars[self.tail() + 3])
    }
}

/// Equal-length id rows stacked for one forward pass. `pad[i]` marks padded
/// positions, which never serve as attention keys.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    pub n_seqs: usize,
    pub seq_len: usize,
    pub word_ids: Vec<u32>,
    pub position_ids: Vec<u32>,
    pub state_ids: Vec<u32>,
    pub pad: Vec<bool>,
}

impl SequenceBatch {
    /// Right-pads rows to the longest one.
    pub fn from_rows(rows: &[(&[u32], &[u32], &[u32])], pad_word: u32, pad_state: u32) -> Self {
        let seq_len = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let total = rows.len() * seq_len;
        let mut b = SequenceBatch {
            n_seqs: rows.len(),
            seq_len,
            word_ids: Vec::with_capacity(total),
            position_ids: Vec::with_capacity(total),
            state_ids: Vec::with_capacity(total),
            pad: Vec::with_capacity(total),
        };
        for (w, p, s) in rows {
            let fill = seq_len - w.len();
            b.word_ids.extend_from_slice(w);
            b.word_ids.extend(std::iter::repeat_n(pad_word, fill));
            b.position_ids.extend_from_slice(p);
            b.position_ids.extend(std::iter::repeat_n(0, fill));
            b.state_ids.extend_from_slice(s);
            b.state_ids.extend(std::iter::repeat_n(pad_state, fill));
            b.pad.extend(std::iter::repeat_n(false, w.len()));
            b.pad.extend(std::iter::repeat_n(true, fill));
        }
        b
    }

    fn check(&self, config: &ModelConfig) -> Result<()> {
        let limits = [
            (&self.word_ids, config.vocab_size, "word id"),
            (&self.position_ids, config.n_positions, "position id"),
            (&self.state_ids, config.n_states, "state id"),
        ];
        for (ids, limit, what) in limits {
            if let Some(i) = ids.iter().position(|&x| x as usize >= limit) {
                return Err(Error::Input {
                    position: i % self.seq_len.max(1),
                    message: format!("{what} {} out of range (limit {limit}) in sequence {}", ids[i], i / self.seq_len.max(1)),
                });
            }
        }
        Ok(())
    }

    /// Causal mask, broadcast over heads: true where attention is blocked.
    fn attention_mask(&self, heads: usize) -> Vec<bool> {
        let s = self.seq_len;
        let mut mask = Vec::with_capacity(self.n_seqs * heads * s * s);
        for n in 0..self.n_seqs {
            let pad = &self.pad[n * s..(n + 1) * s];
            let mut one = Vec::with_capacity(s * s);
            for i in 0..s {
                for (j, &p) in pad.iter().enumerate() {
                    one.push(j > i || p);
                }
            }
            for _ in 0..heads {
                mask.extend_from_slice(&one);
            }
        }
        mask
    }
}

/// Final hidden states `[n_seqs, seq_len, d_model]`.
pub fn forward<T: Scalar, R: Rng + ?Sized>(
    g: &mut Graph<T>,
    p: &BoundParams,
    config: &ModelConfig,
    batch: &SequenceBatch,
    rng: &mut R,
) -> Result<Var> {
    batch.check(config)?;
    let (n, s, d, h) = (batch.n_seqs, batch.seq_len, config.d_model, config.n_heads);
    let dh = config.head_dim();
    let idx = |ids: &[u32]| ids.iter().map(|&x| x as usize).collect::<Vec<_>>();
    let we = g.gather(p.wte(), &idx(&batch.word_ids), &[n, s])?;
    let pe = g.gather(p.wpe(), &idx(&batch.position_ids), &[n, s])?;
    let se = g.gather(p.wse(), &idx(&batch.state_ids), &[n, s])?;
    let x = g.add(we, pe)?;
    let x = g.add(x, se)?;
    let mut x = g.dropout(x, config.dropout_rate, rng);
    let mask = batch.attention_mask(h);
    let rate = config.dropout_rate;

    for l in 0..config.n_layers {
        let lv = p.layer(l);
        let heads = |g: &mut Graph<T>, (w, b): (Var, Var)| -> Result<Var> {
            let y = g.matmul(x, w, false)?;
            let y = g.add(y, b)?;
            let y = g.reshape(y, &[n, s, h, dh])?;
            let y = g.swap_middle(y)?;
            g.reshape(y, &[n * h, s, dh])
        };
        let q = heads(g, lv.q)?;
        let k = heads(g, lv.k)?;
        let v = heads(g, lv.v)?;
        let scores = g.batch_matmul(q, k, true)?;
        let scores = g.scale(scores, 1.0 / (dh as f64).sqrt());
        let scores = g.masked_fill(scores, mask.clone(), MASK_VALUE)?;
        let probs = g.softmax(scores);
        let probs = g.dropout(probs, rate, rng);
        let ctx = g.batch_matmul(probs, v, false)?;
        let ctx = g.reshape(ctx, &[n, h, s, dh])?;
        let ctx = g.swap_middle(ctx)?;
        let ctx = g.reshape(ctx, &[n, s, d])?;
        let a = g.matmul(ctx, lv.o.0, false)?;
        let a = g.add(a, lv.o.1)?;
        let a = g.dropout(a, rate, rng);
        let r = g.add(x, a)?;
        x = g.layer_norm(r, lv.ln1.0, lv.ln1.1, LAYER_NORM_EPS)?;

        let m = g.matmul(x, lv.fc.0, false)?;
        let m = g.add(m, lv.fc.1)?;
        let m = match config.activation {
            Activation::Relu => g.relu(m),
        };
        let m = g.matmul(m, lv.proj.0, false)?;
        let m = g.add(m, lv.proj.1)?;
        let m = g.dropout(m, rate, rng);
        let r = g.add(x, m)?;
        x = g.layer_norm(r, lv.ln2.0, lv.ln2.1, LAYER_NORM_EPS)?;
    }
    let (gain, bias) = p.ln_f();
    g.layer_norm(x, gain, bias, LAYER_NORM_EPS)
}

/// `hidden · word_embeddingsᵀ`.
pub fn lm_logits<T: Scalar>(g: &mut Graph<T>, p: &BoundParams, hidden: Var) -> Result<Var> {
    g.matmul(hidden, p.wte(), true)
}

/// Picks hidden rows `[n, s, d]` at the given `(sequence, position)` pairs.
pub fn select_positions<T: Scalar>(g: &mut Graph<T>, hidden: Var, at: &[(usize, usize)]) -> Result<Var> {
    let sh = g.shape(hidden).to_vec();
    if sh.len() != 3 {
        return Err(Error::Dimension { op: "select_positions", lhs: sh, rhs: vec![3] });
    }
    let (n, s, d) = (sh[0], sh[1], sh[2]);
    let mut rows = Vec::with_capacity(at.len());
    for (i, &(seq, pos)) in at.iter().enumerate() {
        if seq >= n || pos >= s {
            return Err(Error::Input {
                position: pos,
                message: format!("index ({seq}, {pos}) outside hidden states [{n}, {s}] (entry {i})"),
            });
        }
        rows.push(seq * s + pos);
    }
    let flat = g.reshape(hidden, &[n * s, d])?;
    g.gather(flat, &rows, &[at.len()])
}

/// One classifier score per sequence, read at `cls_index[i]`: `w·h + b`.
pub fn cls_score<T: Scalar>(g: &mut Graph<T>, p: &BoundParams, hidden: Var, cls_index: &[usize]) -> Result<Var> {
    let at: Vec<(usize, usize)> = cls_index.iter().enumerate().map(|(i, &c)| (i, c)).collect();
    let h = select_positions(g, hidden, &at)?;
    let (w, b) = p.cls();
    let s = g.matmul(h, w, false)?;
    let s = g.add(s, b)?;
    g.reshape(s, &[cls_index.len()])
}

/// Inference-only forward pass; returns the graph and hidden-state handle.
pub fn infer<T: Scalar>(params: &ModelParams<T>, batch: &SequenceBatch) -> Result<(Graph<T>, BoundParams, Var)> {
    let mut g = Graph::new(false);
    let bound = params.bind(&mut g, false);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let hidden = forward(&mut g, &bound, &params.config, batch, &mut rng)?;
    Ok((g, bound, hidden))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(rows: &[Vec<u32>]) -> SequenceBatch {
        let owned: Vec<(Vec<u32>, Vec<u32>, Vec<u32>)> = rows
            .iter()
            .map(|w| (w.clone(), (0..w.len() as u32).collect(), vec![1; w.len()]))
            .collect();
        let refs: Vec<(&[u32], &[u32], &[u32])> =
            owned.iter().map(|(a, b, c)| (a.as_slice(), b.as_slice(), c.as_slice())).collect();
        SequenceBatch::from_rows(&refs, 0, 3)
    }

    #[test]
    fn parameter_count_matches_closed_form() {
        let c = ModelConfig { vocab_size: 64, ..ModelConfig::tiny(64) };
        let (v, p, s, d, f, l) = (64, c.n_positions, c.n_states, 16, c.d_ff, 2);
        let per_layer = 4 * (d * d + d) + 2 * d + (d * f + f) + (f * d + d) + 2 * d;
        let expected = v * d + p * d + s * d + l * per_layer + 2 * d + d + 1;
        assert_eq!(c.param_count(), expected);
        let m = ModelParams::<f32>::init(&c, 0).unwrap();
        assert_eq!(m.param_count(), expected);
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let c = ModelConfig::tiny(64);
        let a = ModelParams::<f32>::init(&c, 9).unwrap();
        let b = ModelParams::<f32>::init(&c, 9).unwrap();
        assert_eq!(a, b);
        let other = ModelParams::<f32>::init(&c, 10).unwrap();
        assert_ne!(a, other);
        assert!(a.get("h0.ln1.g").unwrap().data().iter().all(|&x| x == 1.0));
        assert!(a.get("h1.mlp.fc.b").unwrap().data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn indivisible_heads_rejected() {
        let c = ModelConfig { n_heads: 3, ..ModelConfig::tiny(64) };
        assert!(matches!(ModelParams::<f32>::init(&c, 0), Err(Error::Config(_))));
    }

    #[test]
    fn out_of_range_ids_report_position() {
        let c = ModelConfig::tiny(10);
        let m = ModelParams::<f64>::init(&c, 0).unwrap();
        let err = infer(&m, &batch(&[vec![1, 2, 11, 3]])).unwrap_err();
        assert!(matches!(err, Error::Input { position: 2, .. }), "{err:?}");
    }

    #[test]
    fn lm_logits_shape_and_linearity() {
        let c = ModelConfig::tiny(20);
        let m = ModelParams::<f64>::init(&c, 1).unwrap();
        let (mut g, p, h) = infer(&m, &batch(&[vec![1; 10], vec![2; 10]])).unwrap();
        let logits = lm_logits(&mut g, &p, h).unwrap();
        assert_eq!(g.shape(logits), &[2, 10, 20]);
        let h2 = g.scale(h, 2.0);
        let logits2 = lm_logits(&mut g, &p, h2).unwrap();
        for (a, b) in g.value(logits).data().iter().zip(g.value(logits2).data()) {
            assert_eq!(2.0 * a, *b);
        }
        let probs = g.softmax(logits);
        for r in 0..20 {
            let total: f64 = g.value(probs).row(r).iter().sum();
            assert!((total - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_classifier_scores_bias() {
        let c = ModelConfig::tiny(20);
        let mut m = ModelParams::<f64>::init(&c, 1).unwrap();
        m.get_mut("cls.w").unwrap().data_mut().iter_mut().for_each(|x| *x = 0.0);
        m.get_mut("cls.b").unwrap().data_mut()[0] = 0.75;
        let (mut g, p, h) = infer(&m, &batch(&[vec![1, 2, 3], vec![4, 5, 6, 7]])).unwrap();
        let s = cls_score(&mut g, &p, h, &[2, 3]).unwrap();
        assert_eq!(g.value(s).data(), &[0.75, 0.75]);
        assert!(cls_score(&mut g, &p, h, &[2, 9]).is_err());
    }

    #[test]
    fn cls_position_matters() {
        let c = ModelConfig::tiny(20);
        let m = ModelParams::<f64>::init(&c, 4).unwrap();
        let (mut g, p, h) = infer(&m, &batch(&[vec![1, 2, 3, 4, 5]])).unwrap();
        let a = cls_score(&mut g, &p, h, &[4]).unwrap();
        let b = cls_score(&mut g, &p, h, &[1]).unwrap();
        assert_ne!(g.value(a).data()[0], g.value(b).data()[0]);
    }

    #[test]
    fn causal_prefix_unchanged_by_suffix_edit() {
        let c = ModelConfig::tiny(20);
        let m = ModelParams::<f64>::init(&c, 2).unwrap();
        let base = vec![3, 4, 5, 6, 7, 8];
        let mut edited = base.clone();
        edited[4] = 19;
        let (g1, _, h1) = infer(&m, &batch(&[base])).unwrap();
        let (g2, _, h2) = infer(&m, &batch(&[edited])).unwrap();
        let d = c.d_model;
        let (a, b) = (g1.value(h1).data(), g2.value(h2).data());
        assert_eq!(&a[..4 * d], &b[..4 * d]);
        assert_ne!(&a[4 * d..], &b[4 * d..]);
    }

    #[test]
    fn padding_and_batching_do_not_leak() {
        let c = ModelConfig::tiny(20);
        let m = ModelParams::<f32>::init(&c, 3).unwrap();
        let target = vec![5, 6, 7, 8];
        let (g1, _, h1) = infer(&m, &batch(std::slice::from_ref(&target))).unwrap();
        let rows = vec![vec![1; 9], target.clone(), vec![2, 3], vec![9; 7]];
        let (g4, _, h4) = infer(&m, &batch(&rows)).unwrap();
        let (d, s) = (c.d_model, 9);
        let single = g1.value(h1).data();
        let inside = &g4.value(h4).data()[s * d..s * d + 4 * d];
        for (a, b) in single.iter().zip(inside) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn decay_excludes_bias_and_norm() {
        assert!(is_decayed("wte"));
        assert!(is_decayed("h0.attn.q.w"));
        assert!(is_decayed("cls.w"));
        assert!(!is_decayed("h0.attn.q.b"));
        assert!(!is_decayed("h3.ln2.g"));
        assert!(!is_decayed("ln_f.g"));
        assert!(!is_decayed("cls.b"));
    }
}
