//! Perplexity of gold replies, Hits@1 against sampled distractors, and
//! content-word F1 of generated replies.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::log_softmax;
use crate::data::Dataset;
use crate::decoder::{self, DecodeParams};
use crate::error::{Error, Result};
use crate::input::DialogExample;
use crate::model::ModelParams;
use crate::scalar::Scalar;
use crate::scoring::ModelScorer;
use crate::tokenizer::BpeModel;
use crate::trainer::{place_gold, sample_distractors, UtterancePool};

pub const HITS_DISTRACTORS: usize = 19;

/// Words dropped before computing F1.
pub const STOPWORDS: [&str; 50] = [
    "i", "me", "my", "we", "our", "you", "your", "he", "him", "his", "she", "her", "it", "its", "they", "them",
    "their", "what", "who", "this", "that", "am", "is", "are", "was", "were", "be", "been", "have", "has", "had",
    "do", "does", "did", "a", "an", "the", "and", "but", "or", "of", "at", "by", "for", "with", "to", "from", "in",
    "on", "so",
];

/// Model access needed by the metrics.
pub trait DialogScorer {
    /// Logit rows at each scored position of the gold reply (its tokens, then
    /// EOS) and the target ids.
    fn reply_logits(&self, example: &DialogExample) -> Result<(Vec<Vec<f64>>, Vec<u32>)>;

    /// Classifier score per candidate text.
    fn candidate_scores(&self, example: &DialogExample, candidates: &[String]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ppl: f64,
    pub hits_at_1: f64,
    pub f1: f64,
    pub n_examples: usize,
    pub n_scored_tokens: usize,
    pub seed: u64,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Summed NLL and token count over every gold reply.
pub fn reply_nll<S: DialogScorer + ?Sized>(scorer: &S, examples: &[DialogExample]) -> Result<(f64, usize)> {
    let mut total = 0.0;
    let mut count = 0;
    for ex in examples {
        let (rows, targets) = scorer.reply_logits(ex)?;
        for (row, &t) in rows.iter().zip(&targets) {
            let lp = log_softmax(row);
            total -= lp[t as usize];
            count += 1;
        }
    }
    Ok((total, count))
}

/// `exp(total NLL / scored tokens)` over the gold replies.
pub fn perplexity<S: DialogScorer + ?Sized>(scorer: &S, examples: &[DialogExample]) -> Result<f64> {
    let (nll, n) = reply_nll(scorer, examples)?;
    ppl_from(nll, n)
}

fn ppl_from(nll: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Contract("perplexity needs at least one scored token".into()));
    }
    Ok((nll / n as f64).exp())
}

/// True when `scores[gold]` is strictly greater than every other score.
pub fn is_hit(scores: &[f64], gold: usize) -> bool {
    scores.iter().enumerate().all(|(i, &s)| i == gold || s < scores[gold])
}

/// Fraction of examples whose gold reply strictly outscores
/// `n_distractors` replies sampled from other dialogs.
pub fn hits_at_1<S: DialogScorer + ?Sized>(scorer: &S, data: &Dataset, n_distractors: usize, seed: u64) -> Result<f64> {
    let pool = UtterancePool::from_dataset(data);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let examples = data.examples();
    if examples.is_empty() {
        return Err(Error::Contract("Hits@1 needs at least one example".into()));
    }
    let mut hits = 0usize;
    for ie in &examples {
        let distractors = sample_distractors(&pool, ie.dialog, &ie.example.reply, n_distractors, &mut rng)?;
        let (cands, gold) = place_gold(&ie.example.reply, distractors, &mut rng);
        let scores = scorer.candidate_scores(&ie.example, &cands)?;
        hits += usize::from(is_hit(&scores, gold));
    }
    Ok(hits as f64 / examples.len() as f64)
}

/// Lowercases, strips punctuation and drops stopwords.
pub fn content_words(text: &str) -> Vec<String> {
    let cleaned: String =
        text.to_lowercase().chars().filter(|c| !c.is_ascii_punctuation()).collect();
    cleaned.split_whitespace().filter(|w| !STOPWORDS.contains(w)).map(str::to_string).collect()
}

/// Multiset word-overlap F1 on content words; 0 when either side is empty.
pub fn f1(predicted: &str, gold: &str) -> f64 {
    let p = content_words(predicted);
    let g = content_words(gold);
    if p.is_empty() || g.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for w in &g {
        *counts.entry(w).or_default() += 1;
    }
    let mut overlap = 0;
    for w in &p {
        if let Some(c) = counts.get_mut(w.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / p.len() as f64;
    let recall = overlap as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Mean F1 of a persona-owner reply drawn at random from another dialog.
pub fn random_reply_f1(data: &Dataset, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let examples = data.examples();
    if examples.is_empty() {
        return Err(Error::Contract("F1 needs at least one example".into()));
    }
    let mut total = 0.0;
    for ie in &examples {
        let others: Vec<&str> =
            examples.iter().filter(|o| o.dialog != ie.dialog).map(|o| o.example.reply.as_str()).collect();
        if others.is_empty() {
            return Err(Error::Data("no replies from other dialogs".into()));
        }
        total += f1(others[rng.gen_range(0..others.len())], &ie.example.reply);
    }
    Ok(total / examples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub seed: u64,
    pub n_distractors: usize,
    pub decode: DecodeParams,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { seed: 0, n_distractors: HITS_DISTRACTORS, decode: DecodeParams::default() }
    }
}

/// All three metrics over every reply turn of `data`. Generation for F1 uses
/// `opts.decode` with the seed offset by the example index.
pub fn evaluate<T: Scalar>(params: &ModelParams<T>, tok: &BpeModel, data: &Dataset, opts: &EvalOptions) -> Result<EvalReport> {
    let scorer = ModelScorer::new(params, tok);
    let examples: Vec<DialogExample> = data.examples().into_iter().map(|ie| ie.example).collect();
    if examples.is_empty() {
        return Err(Error::Contract("evaluation dataset has no reply turns".into()));
    }
    let (nll, n_tokens) = reply_nll(&scorer, &examples)?;
    let ppl = ppl_from(nll, n_tokens)?;
    let hits = hits_at_1(&scorer, data, opts.n_distractors, opts.seed)?;
    let mut f1_sum = 0.0;
    for (i, ex) in examples.iter().enumerate() {
        let dp = DecodeParams { seed: opts.decode.seed.wrapping_add(i as u64), ..opts.decode };
        let best = match decoder::generate(params, tok, ex, &dp) {
            Ok(gens) => gens.into_iter().next().map(|g| g.text).unwrap_or_default(),
            Err(Error::DecodeExhausted) => String::new(),
            Err(e) => return Err(e),
        };
        f1_sum += f1(&best, &ex.reply);
    }
    Ok(EvalReport {
        ppl,
        hits_at_1: hits,
        f1: f1_sum / examples.len() as f64,
        n_examples: examples.len(),
        n_scored_tokens: n_tokens,
        seed: opts.seed,
    })
}
