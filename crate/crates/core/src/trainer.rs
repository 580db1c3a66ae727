//! Multi-task fine-tuning and plain language-model pre-training.
//!
//! A fine-tuning batch holds, for each example, the gold reply and
//! `n_distractors` replies sampled from other dialogs. Every candidate is built
//! into its own sequence; the classifier is trained with a softmax over each
//! example's candidates, and the LM loss is taken on the gold sequence only.
//! The objective is `lm_coef · lm + cls_coef · cls`.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::data::{Dataset, IndexedExample};
use crate::error::{Error, Result};
use crate::input::{self, BuildOptions, DialogExample, DialogState, LmScope, TokenizedInput};
use crate::model::{self, BoundParams, ModelConfig, ModelParams, SequenceBatch};
use crate::optim::{linear_decay, AdamConfig, AdamState};
use crate::scalar::Scalar;
use crate::tokenizer::{BpeModel, Special};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub lm_coef: f64,
    pub cls_coef: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub total_steps: usize,
    pub n_distractors: usize,
    pub seed: u64,
    pub lm_scope: LmScope,
    pub clip_norm: Option<f64>,
    /// Permute persona sentences each time an example is drawn.
    pub shuffle_persona: bool,
    pub history_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 6.25e-5,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 0.01,
            lm_coef: 2.0,
            cls_coef: 1.0,
            dropout: 0.1,
            batch_size: 4,
            total_steps: 1000,
            n_distractors: 3,
            seed: 0,
            lm_scope: LmScope::Reply,
            clip_norm: Some(1.0),
            shuffle_persona: true,
            history_window: 5,
        }
    }
}

impl TrainConfig {
    /// Full-scale settings: 32 sequences per batch for 200k steps.
    pub fn full() -> Self {
        Self { batch_size: 32, total_steps: 200_000, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.n_distractors == 0 {
            return Err(Error::Config("n_distractors must be at least 1".into()));
        }
        if self.batch_size == 0 || self.total_steps == 0 {
            return Err(Error::Config("batch_size and total_steps must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
            weight_decay: self.weight_decay,
            clip_norm: self.clip_norm,
        }
    }

    pub fn build_options(&self, n_positions: usize) -> BuildOptions {
        BuildOptions { lm_scope: self.lm_scope, history_window: self.history_window, ..BuildOptions::new(n_positions) }
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        linear_decay(self.lr, step, self.total_steps)
    }
}

/// Deduplicated utterance texts with the dialogs each one occurs in.
#[derive(Debug, Clone, Default)]
pub struct UtterancePool {
    texts: Vec<String>,
    dialogs: Vec<Vec<usize>>,
}

impl UtterancePool {
    pub fn from_dataset(ds: &Dataset) -> Self {
        let mut seen: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (d, text) in ds.utterances() {
            let e = seen.entry(text).or_default();
            if e.last() != Some(&d) {
                e.push(d);
            }
        }
        let (texts, dialogs) = seen.into_iter().map(|(t, d)| (t.to_string(), d)).unzip();
        Self { texts, dialogs }
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    /// Texts that occur in some dialog other than `dialog` and differ from
    /// `gold`.
    pub fn eligible(&self, dialog: usize, gold: &str) -> Vec<&str> {
        self.texts
            .iter()
            .zip(&self.dialogs)
            .filter(|(t, ds)| t.as_str() != gold && ds.iter().any(|&d| d != dialog))
            .map(|(t, _)| t.as_str())
            .collect()
    }
}

/// `k` distinct utterances drawn uniformly from other dialogs.
pub fn sample_distractors<R: Rng + ?Sized>(
    pool: &UtterancePool,
    dialog: usize,
    gold: &str,
    k: usize,
    rng: &mut R,
) -> Result<Vec<String>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let eligible = pool.eligible(dialog, gold);
    if eligible.len() < k {
        return Err(Error::Data(format!(
            "need {k} distractors but only {} utterances come from other dialogs",
            eligible.len()
        )));
    }
    Ok(index::sample(rng, eligible.len(), k).into_iter().map(|i| eligible[i].to_string()).collect())
}

/// Inserts `gold` at a random slot among `distractors`; returns the list and
/// the gold index.
pub fn place_gold<R: Rng + ?Sized>(gold: &str, mut distractors: Vec<String>, rng: &mut R) -> (Vec<String>, usize) {
    let at = rng.gen_range(0..=distractors.len());
    distractors.insert(at, gold.to_string());
    (distractors, at)
}

/// Stacked sequences plus the positions each loss reads.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskBatch {
    pub seqs: SequenceBatch,
    pub n_examples: usize,
    pub n_candidates: usize,
    pub gold: Vec<usize>,
    /// `(row, position)` pairs scored by the LM loss, with their targets.
    pub lm_positions: Vec<(usize, usize)>,
    pub lm_targets: Vec<u32>,
    /// Per-row [CLS] position; empty for LM-only batches.
    pub cls_index: Vec<usize>,
}

impl MultiTaskBatch {
    /// `inputs[e][c]` is candidate `c` of example `e`; `gold[e]` marks the
    /// gold candidate, whose LM targets are the only ones scored.
    pub fn assemble(tok: &BpeModel, inputs: &[Vec<TokenizedInput>], gold: &[usize]) -> Result<Self> {
        let n_candidates = inputs.first().map(Vec::len).unwrap_or(0);
        if inputs.iter().any(|c| c.len() != n_candidates) {
            return Err(Error::Contract("examples in a batch must have equal candidate counts".into()));
        }
        if gold.len() != inputs.len() || gold.iter().any(|&g| g >= n_candidates) {
            return Err(Error::Contract("each example needs exactly one gold candidate".into()));
        }
        let rows: Vec<(&[u32], &[u32], &[u32])> = inputs
            .iter()
            .flatten()
            .map(|t| (t.word_ids.as_slice(), t.position_ids.as_slice(), t.state_ids.as_slice()))
            .collect();
        let seqs = SequenceBatch::from_rows(&rows, tok.special(Special::Pad), DialogState::Neutral.id());
        let mut lm_positions = Vec::new();
        let mut lm_targets = Vec::new();
        for (e, (cands, &g)) in inputs.iter().zip(gold).enumerate() {
            let row = e * n_candidates + g;
            for p in cands[g].scored_positions() {
                lm_positions.push((row, p));
                lm_targets.push(cands[g].lm_target_ids[p]);
            }
        }
        let cls_index = inputs.iter().flatten().map(|t| t.cls_index).collect();
        Ok(Self { seqs, n_examples: inputs.len(), n_candidates, gold: gold.to_vec(), lm_positions, lm_targets, cls_index })
    }

    /// Contiguous windows for LM-only training, unannotated state.
    pub fn lm_windows(windows: &[&[u32]], pad: u32) -> Self {
        let owned: Vec<(Vec<u32>, Vec<u32>, Vec<u32>)> = windows
            .iter()
            .map(|w| {
                let n = w.len() - 1;
                (w[..n].to_vec(), (0..n as u32).collect(), vec![DialogState::Neutral.id(); n])
            })
            .collect();
        let rows: Vec<(&[u32], &[u32], &[u32])> =
            owned.iter().map(|(a, b, c)| (a.as_slice(), b.as_slice(), c.as_slice())).collect();
        let seqs = SequenceBatch::from_rows(&rows, pad, DialogState::Neutral.id());
        let mut lm_positions = Vec::new();
        let mut lm_targets = Vec::new();
        for (r, w) in windows.iter().enumerate() {
            for p in 0..w.len() - 1 {
                lm_positions.push((r, p));
                lm_targets.push(w[p + 1]);
            }
        }
        Self {
            seqs,
            n_examples: windows.len(),
            n_candidates: 1,
            gold: vec![0; windows.len()],
            lm_positions,
            lm_targets,
            cls_index: Vec::new(),
        }
    }

    pub fn has_cls(&self) -> bool {
        !self.cls_index.is_empty()
    }
}

/// Graph handles for the two losses and their weighted sum.
pub struct LossVars {
    pub lm: Var,
    pub cls: Option<Var>,
    pub total: Var,
}

pub fn lm_loss_var<T: Scalar>(g: &mut Graph<T>, p: &BoundParams, hidden: Var, batch: &MultiTaskBatch) -> Result<Var> {
    if batch.lm_positions.is_empty() {
        return Err(Error::Contract("batch has no scored LM tokens".into()));
    }
    let h = model::select_positions(g, hidden, &batch.lm_positions)?;
    let logits = model::lm_logits(g, p, h)?;
    g.cross_entropy(logits, &batch.lm_targets)
}

pub fn cls_loss_var<T: Scalar>(g: &mut Graph<T>, p: &BoundParams, hidden: Var, batch: &MultiTaskBatch) -> Result<Var> {
    if batch.n_candidates < 2 {
        return Err(Error::Contract("classification needs at least two candidates".into()));
    }
    let scores = model::cls_score(g, p, hidden, &batch.cls_index)?;
    let scores = g.reshape(scores, &[batch.n_examples, batch.n_candidates])?;
    let gold: Vec<u32> = batch.gold.iter().map(|&x| x as u32).collect();
    g.cross_entropy(scores, &gold)
}

/// Forward pass plus both losses. LM-only batches skip the classifier.
#[allow(clippy::too_many_arguments)]
pub fn multitask_loss<T: Scalar, R: Rng + ?Sized>(
    g: &mut Graph<T>,
    p: &BoundParams,
    config: &ModelConfig,
    batch: &MultiTaskBatch,
    lm_coef: f64,
    cls_coef: f64,
    rng: &mut R,
) -> Result<LossVars> {
    let hidden = model::forward(g, p, config, &batch.seqs, rng)?;
    let lm = lm_loss_var(g, p, hidden, batch)?;
    let weighted_lm = g.scale(lm, lm_coef);
    if !batch.has_cls() {
        return Ok(LossVars { lm, cls: None, total: weighted_lm });
    }
    let cls = cls_loss_var(g, p, hidden, batch)?;
    let weighted_cls = g.scale(cls, cls_coef);
    let total = g.add(weighted_lm, weighted_cls)?;
    Ok(LossVars { lm, cls: Some(cls), total })
}

/// Mean LM cross-entropy of `batch` under `params`, no dropout.
pub fn lm_loss<T: Scalar>(params: &ModelParams<T>, batch: &MultiTaskBatch) -> Result<f64> {
    let (mut g, p, hidden) = model::infer(params, &batch.seqs)?;
    let v = lm_loss_var(&mut g, &p, hidden, batch)?;
    Ok(g.value(v).data()[0].as_f64())
}

/// Mean classification loss of `batch` under `params`, no dropout.
pub fn cls_loss<T: Scalar>(params: &ModelParams<T>, batch: &MultiTaskBatch) -> Result<f64> {
    let (mut g, p, hidden) = model::infer(params, &batch.seqs)?;
    let v = cls_loss_var(&mut g, &p, hidden, batch)?;
    Ok(g.value(v).data()[0].as_f64())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub lr: f64,
    pub lm_loss: f64,
    pub cls_loss: Option<f64>,
    pub total_loss: f64,
}

impl StepReport {
    /// One metrics-log line.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// One optimizer step on `batch`. `step` is zero-based and selects the
/// learning rate from the linear schedule.
#[allow(clippy::too_many_arguments)]
pub fn train_step<T: Scalar, R: Rng + ?Sized>(
    params: &mut ModelParams<T>,
    state: &mut AdamState<T>,
    batch: &MultiTaskBatch,
    step: usize,
    cfg: &TrainConfig,
    lm_coef: f64,
    cls_coef: f64,
    rng: &mut R,
) -> Result<StepReport> {
    if step >= cfg.total_steps {
        return Err(Error::Contract(format!("step {step} is past total_steps {}", cfg.total_steps)));
    }
    let config = ModelConfig { dropout_rate: cfg.dropout, ..params.config.clone() };
    let mut g = Graph::new(true);
    let bound = params.bind(&mut g, true);
    let losses = multitask_loss(&mut g, &bound, &config, batch, lm_coef, cls_coef, rng)?;
    let lm = g.value(losses.lm).data()[0].as_f64();
    let cls = losses.cls.map(|c| g.value(c).data()[0].as_f64());
    let total = lm_coef * lm + cls_coef * cls.unwrap_or(0.0);
    if !total.is_finite() {
        return Err(Error::NonFinite { step, what: format!("loss (lm {lm}, cls {cls:?})") });
    }
    g.backward(losses.total)?;
    let grads: Vec<Vec<T>> = bound.vars.iter().map(|&v| g.grad(v)).collect();
    drop(g);
    let lr = cfg.lr_at(step);
    state.update(params, &grads, lr, &cfg.adam())?;
    if let Some(name) = params.names().iter().zip(params.tensors()).find(|(_, t)| !t.all_finite()).map(|(n, _)| n) {
        return Err(Error::NonFinite { step, what: format!("parameter {name}") });
    }
    Ok(StepReport { step, lr, lm_loss: lm, cls_loss: cls, total_loss: total })
}

/// Fine-tuning loop state: parameters, optimizer, data and the single RNG
/// stream that drives batch order, distractors, gold placement, persona
/// shuffles and dropout.
pub struct Trainer<'a, T: Scalar> {
    pub params: ModelParams<T>,
    pub state: AdamState<T>,
    pub cfg: TrainConfig,
    tok: &'a BpeModel,
    examples: Vec<IndexedExample>,
    pool: UtterancePool,
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
    step: usize,
}

impl<'a, T: Scalar> Trainer<'a, T> {
    pub fn new(tok: &'a BpeModel, params: ModelParams<T>, data: &Dataset, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let examples = data.examples();
        if examples.is_empty() {
            return Err(Error::Data("dataset has no reply turns to train on".into()));
        }
        let pool = UtterancePool::from_dataset(data);
        let state = AdamState::new(&params);
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self { params, state, cfg, tok, examples, pool, order: Vec::new(), cursor: 0, rng, step: 0 })
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    fn next_example(&mut self) -> IndexedExample {
        if self.cursor >= self.order.len() {
            self.order = (0..self.examples.len()).collect();
            rand::seq::SliceRandom::shuffle(self.order.as_mut_slice(), &mut self.rng);
            self.cursor = 0;
        }
        let ex = self.examples[self.order[self.cursor]].clone();
        self.cursor += 1;
        ex
    }

    pub fn next_batch(&mut self) -> Result<MultiTaskBatch> {
        let opts = self.cfg.build_options(self.params.config.n_positions);
        let mut inputs = Vec::with_capacity(self.cfg.batch_size);
        let mut gold = Vec::with_capacity(self.cfg.batch_size);
        for _ in 0..self.cfg.batch_size {
            let IndexedExample { dialog, example } = self.next_example();
            let example = if self.cfg.shuffle_persona {
                input::shuffle_persona(&example, &mut self.rng)
            } else {
                example
            };
            let distractors =
                sample_distractors(&self.pool, dialog, &example.reply, self.cfg.n_distractors, &mut self.rng)?;
            let (cands, g) = place_gold(&example.reply, distractors, &mut self.rng);
            inputs.push(build_candidates(self.tok, &example, &cands, &opts)?);
            gold.push(g);
        }
        MultiTaskBatch::assemble(self.tok, &inputs, &gold)
    }

    pub fn step(&mut self) -> Result<StepReport> {
        let batch = self.next_batch()?;
        let (lm, cls) = (self.cfg.lm_coef, self.cfg.cls_coef);
        let report = train_step(&mut self.params, &mut self.state, &batch, self.step, &self.cfg, lm, cls, &mut self.rng)?;
        self.step += 1;
        Ok(report)
    }

    /// Runs until `total_steps`, passing every report to `on_step`.
    pub fn run(&mut self, mut on_step: impl FnMut(&StepReport)) -> Result<Vec<StepReport>> {
        let mut out = Vec::with_capacity(self.cfg.total_steps - self.step);
        while self.step < self.cfg.total_steps {
            let r = self.step()?;
            on_step(&r);
            out.push(r);
        }
        Ok(out)
    }
}

pub fn build_candidates(
    tok: &BpeModel,
    example: &DialogExample,
    candidates: &[String],
    opts: &BuildOptions,
) -> Result<Vec<TokenizedInput>> {
    candidates.iter().map(|c| input::build(tok, example, c, opts)).collect()
}

/// Language-model pre-training over random contiguous windows of `corpus`.
/// Each line is followed by EOS. Returns the per-step reports.
pub fn pretrain_lm<T: Scalar>(
    params: &mut ModelParams<T>,
    tok: &BpeModel,
    corpus: &[String],
    cfg: &TrainConfig,
    window: usize,
    mut on_step: impl FnMut(&StepReport),
) -> Result<Vec<StepReport>> {
    cfg.validate()?;
    if window == 0 || window > params.config.n_positions {
        return Err(Error::Config(format!(
            "window {window} must be in 1..={}",
            params.config.n_positions
        )));
    }
    let eos = tok.special(Special::Eos);
    let mut stream = Vec::new();
    for line in corpus {
        stream.extend(tok.encode(line));
        stream.push(eos);
    }
    if stream.len() < window + 1 {
        return Err(Error::Data(format!(
            "corpus has {} tokens, fewer than one window of {}",
            stream.len(),
            window + 1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(params);
    let mut reports = Vec::with_capacity(cfg.total_steps);
    for step in 0..cfg.total_steps {
        let starts: Vec<usize> =
            (0..cfg.batch_size).map(|_| rng.gen_range(0..=stream.len() - window - 1)).collect();
        let windows: Vec<&[u32]> = starts.iter().map(|&s| &stream[s..s + window + 1]).collect();
        let batch = MultiTaskBatch::lm_windows(&windows, tok.special(Special::Pad));
        let r = train_step(params, &mut state, &batch, step, cfg, 1.0, 0.0, &mut rng)?;
        on_step(&r);
        reports.push(r);
    }
    Ok(reports)
}
