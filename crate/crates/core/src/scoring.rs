//! Transformer-backed implementations of the decoder and evaluator scoring
//! traits.

use crate::autodiff::log_softmax;
use crate::decoder::StepScorer;
use crate::error::Result;
use crate::evaluator::DialogScorer;
use crate::input::{self, BuildOptions, DialogExample, DialogState, LmScope, Prompt, TokenizedContext, TokenizedInput};
use crate::model::{self, ModelParams, SequenceBatch};
use crate::scalar::Scalar;
use crate::tokenizer::{BpeModel, Special};

fn stack(tok: &BpeModel, rows: &[(Vec<u32>, Vec<u32>, Vec<u32>)]) -> SequenceBatch {
    let refs: Vec<(&[u32], &[u32], &[u32])> =
        rows.iter().map(|(w, p, s)| (w.as_slice(), p.as_slice(), s.as_slice())).collect();
    SequenceBatch::from_rows(&refs, tok.special(Special::Pad), DialogState::Neutral.id())
}

fn cls_of_inputs<T: Scalar>(params: &ModelParams<T>, tok: &BpeModel, inputs: &[TokenizedInput]) -> Result<Vec<f64>> {
    if inputs.is_empty() {
        return Ok(Vec::new());
    }
    let rows: Vec<_> =
        inputs.iter().map(|t| (t.word_ids.clone(), t.position_ids.clone(), t.state_ids.clone())).collect();
    let batch = stack(tok, &rows);
    let (mut g, p, hidden) = model::infer(params, &batch)?;
    let idx: Vec<usize> = inputs.iter().map(|t| t.cls_index).collect();
    let s = model::cls_score(&mut g, &p, hidden, &idx)?;
    Ok(g.value(s).data().iter().map(|x| x.as_f64()).collect())
}

/// Scores continuations of one fixed, already truncated context.
pub struct TransformerScorer<'a, T: Scalar> {
    params: &'a ModelParams<T>,
    tok: &'a BpeModel,
    ctx: TokenizedContext,
    prompt: Prompt,
    opts: BuildOptions,
}

impl<'a, T: Scalar> TransformerScorer<'a, T> {
    /// Fits the context of `example` so that `max_new_tokens` reply tokens plus
    /// EOS and CLS stay within the model's positions.
    pub fn new(params: &'a ModelParams<T>, tok: &'a BpeModel, example: &DialogExample, max_new_tokens: usize) -> Result<Self> {
        let opts = BuildOptions::new(params.config.n_positions);
        let ctx = TokenizedContext::from_example(tok, example)
            .windowed(opts.history_window)
            .fit(max_new_tokens, opts.max_len, opts.separators)?;
        let prompt = input::build_prompt(tok, &ctx, &opts);
        Ok(Self { params, tok, ctx, prompt, opts })
    }

    pub fn context_tokens(&self) -> usize {
        self.prompt.word_ids.len()
    }

    /// Persona sentences and history utterances of the untruncated example.
    pub fn forbidden_sources(&self, example: &DialogExample) -> Vec<Vec<u32>> {
        example
            .persona
            .iter()
            .map(String::as_str)
            .chain(example.history.iter().map(|u| u.text.as_str()))
            .map(|t| self.tok.encode(t))
            .collect()
    }
}

impl<T: Scalar> StepScorer for TransformerScorer<'_, T> {
    fn vocab_size(&self) -> usize {
        self.params.config.vocab_size
    }

    fn eos(&self) -> Option<u32> {
        Some(self.tok.special(Special::Eos))
    }

    fn is_generatable(&self, id: u32) -> bool {
        !self.tok.is_special(id)
    }

    fn next_log_probs(&self, prefixes: &[&[u32]]) -> Result<Vec<Vec<f64>>> {
        let rows: Vec<_> = prefixes.iter().map(|p| self.prompt.extended(p)).collect();
        let at: Vec<(usize, usize)> = rows.iter().enumerate().map(|(i, r)| (i, r.0.len() - 1)).collect();
        let batch = stack(self.tok, &rows);
        let (mut g, p, hidden) = model::infer(self.params, &batch)?;
        let h = model::select_positions(&mut g, hidden, &at)?;
        let logits = model::lm_logits(&mut g, &p, h)?;
        let t = g.value(logits);
        Ok((0..at.len()).map(|i| log_softmax(t.row(i))).collect())
    }

    fn cls_scores(&self, replies: &[&[u32]]) -> Result<Vec<f64>> {
        let inputs = replies
            .iter()
            .map(|r| input::build_ids(self.tok, &self.ctx, r, &self.opts))
            .collect::<Result<Vec<_>>>()?;
        cls_of_inputs(self.params, self.tok, &inputs)
    }
}

/// Whole-example scoring for the metrics.
pub struct ModelScorer<'a, T: Scalar> {
    params: &'a ModelParams<T>,
    tok: &'a BpeModel,
    opts: BuildOptions,
}

impl<'a, T: Scalar> ModelScorer<'a, T> {
    pub fn new(params: &'a ModelParams<T>, tok: &'a BpeModel) -> Self {
        let opts = BuildOptions { lm_scope: LmScope::Reply, ..BuildOptions::new(params.config.n_positions) };
        Self { params, tok, opts }
    }
}

impl<T: Scalar> DialogScorer for ModelScorer<'_, T> {
    fn reply_logits(&self, example: &DialogExample) -> Result<(Vec<Vec<f64>>, Vec<u32>)> {
        let inp = input::build(self.tok, example, &example.reply, &self.opts)?;
        let rows = [(inp.word_ids.clone(), inp.position_ids.clone(), inp.state_ids.clone())];
        let batch = stack(self.tok, &rows);
        let (mut g, p, hidden) = model::infer(self.params, &batch)?;
        let at: Vec<(usize, usize)> = inp.scored_positions().map(|i| (0, i)).collect();
        let targets = at.iter().map(|&(_, i)| inp.lm_target_ids[i]).collect();
        let h = model::select_positions(&mut g, hidden, &at)?;
        let logits = model::lm_logits(&mut g, &p, h)?;
        let t = g.value(logits);
        let rows = (0..at.len()).map(|i| t.row(i).iter().map(|x| x.as_f64()).collect()).collect();
        Ok((rows, targets))
    }

    fn candidate_scores(&self, example: &DialogExample, candidates: &[String]) -> Result<Vec<f64>> {
        let inputs = candidates
            .iter()
            .map(|c| input::build(self.tok, example, c, &self.opts))
            .collect::<Result<Vec<_>>>()?;
        cls_of_inputs(self.params, self.tok, &inputs)
    }
}
