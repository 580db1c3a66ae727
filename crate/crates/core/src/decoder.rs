//! Beam search with sampled expansions, n-gram copy blocking and re-ranking
//! by a mix of length-normalized log-probability and the classifier score.
//!
//! Each live hypothesis draws `min(beam_size, top_k)` successors without
//! replacement from its tempered top-k distribution (Gumbel top-k). The pooled
//! successors are pruned back to `beam_size` by cumulative log-probability,
//! which always uses the untempered distribution. With `temperature = 0` the
//! draw is the deterministic top-k, so the search reduces to plain beam search.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::input::DialogExample;
use crate::model::ModelParams;
use crate::scalar::Scalar;
use crate::scoring::TransformerScorer;
use crate::tokenizer::BpeModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeParams {
    pub beam_size: usize,
    pub top_k: usize,
    pub temperature: f64,
    pub max_new_tokens: usize,
    /// `None` disables n-gram blocking.
    pub ngram_block_n: Option<usize>,
    pub rank_lambda: f64,
    pub seed: u64,
    /// EOS is not allowed before this many tokens.
    pub min_new_tokens: usize,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            beam_size: 4,
            top_k: 40,
            temperature: 0.8,
            max_new_tokens: 20,
            ngram_block_n: Some(3),
            rank_lambda: 0.3,
            seed: 0,
            min_new_tokens: 1,
        }
    }
}

impl DecodeParams {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::Config("beam_size must be at least 1".into()));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        if self.max_new_tokens == 0 {
            return Err(Error::Config("max_new_tokens must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.rank_lambda) {
            return Err(Error::Config(format!("rank_lambda {} outside [0, 1]", self.rank_lambda)));
        }
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(Error::Config(format!("temperature {} must be finite and non-negative", self.temperature)));
        }
        if self.ngram_block_n == Some(0) {
            return Err(Error::Config("ngram_block_n must be at least 1".into()));
        }
        Ok(())
    }
}

/// Next-token distributions and classifier scores for candidate replies.
pub trait StepScorer {
    fn vocab_size(&self) -> usize;

    /// End-of-reply token; `None` means hypotheses only finish at the length
    /// limit.
    fn eos(&self) -> Option<u32>;

    /// Tokens other than EOS that may appear in a reply.
    fn is_generatable(&self, _id: u32) -> bool {
        true
    }

    /// Normalized natural-log next-token probabilities after each prefix.
    fn next_log_probs(&self, prefixes: &[&[u32]]) -> Result<Vec<Vec<f64>>>;

    /// Classifier score of each complete reply (EOS excluded).
    fn cls_scores(&self, replies: &[&[u32]]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamHypothesis {
    /// Reply tokens, EOS excluded.
    pub ids: Vec<u32>,
    pub log_prob: f64,
    pub finished: bool,
    pub ended_with_eos: bool,
    pub cls_score: Option<f64>,
    pub rank_score: Option<f64>,
}

impl BeamHypothesis {
    fn root() -> Self {
        Self { ids: Vec::new(), log_prob: 0.0, finished: false, ended_with_eos: false, cls_score: None, rank_score: None }
    }

    /// Scored tokens: the reply plus EOS when it was emitted.
    pub fn scored_len(&self) -> usize {
        self.ids.len() + usize::from(self.ended_with_eos)
    }

    pub fn lm_norm_score(&self) -> f64 {
        self.log_prob / self.scored_len().max(1) as f64
    }
}

/// Forbidden n-grams from fixed sources, keyed by their first `n − 1` tokens.
#[derive(Debug, Clone)]
pub struct NgramBlocker {
    n: usize,
    next: HashMap<Vec<u32>, HashSet<u32>>,
}

impl NgramBlocker {
    pub fn new(n: usize, sources: &[Vec<u32>]) -> Self {
        let mut next: HashMap<Vec<u32>, HashSet<u32>> = HashMap::new();
        for s in sources {
            for w in s.windows(n) {
                next.entry(w[..n - 1].to_vec()).or_default().insert(w[n - 1]);
            }
        }
        Self { n, next }
    }

    /// Tokens that would complete a forbidden trailing n-gram after
    /// `generated`, counting earlier n-grams of `generated` itself.
    pub fn blocked_after(&self, generated: &[u32]) -> HashSet<u32> {
        let k = self.n - 1;
        let mut out = HashSet::new();
        if generated.len() < k {
            return out;
        }
        let tail = &generated[generated.len() - k..];
        if let Some(s) = self.next.get(tail) {
            out.extend(s);
        }
        for w in generated.windows(self.n) {
            if &w[..k] == tail {
                out.insert(w[k]);
            }
        }
        out
    }
}

/// True when `candidate`'s trailing `n`-gram occurs in no source. Candidates
/// shorter than `n` are always allowed.
pub fn ngram_allowed(candidate: &[u32], sources: &[&[u32]], n: usize) -> bool {
    if n == 0 || candidate.len() < n {
        return true;
    }
    let tail = &candidate[candidate.len() - n..];
    !sources.iter().any(|s| s.windows(n).any(|w| w == tail))
}

/// Every n-gram of `ids` checked against the sources.
pub fn contains_forbidden_ngram(ids: &[u32], sources: &[&[u32]], n: usize) -> bool {
    ids.windows(n).any(|w| sources.iter().any(|s| s.windows(n).any(|x| x == w)))
}

fn rank_order(a: &BeamHypothesis, b: &BeamHypothesis) -> Ordering {
    let (ra, rb) = (a.rank_score.unwrap_or(f64::NEG_INFINITY), b.rank_score.unwrap_or(f64::NEG_INFINITY));
    rb.partial_cmp(&ra)
        .unwrap_or(Ordering::Equal)
        .then(a.scored_len().cmp(&b.scored_len()))
        .then_with(|| a.ids.cmp(&b.ids))
}

/// Sets `rank_score = (1 − λ)·logP/len + λ·cls` and sorts best first; ties
/// go to the shorter hypothesis, then to the smaller token sequence.
pub fn rank(mut finished: Vec<BeamHypothesis>, lambda: f64) -> Result<Vec<BeamHypothesis>> {
    for (i, h) in finished.iter_mut().enumerate() {
        let cls = match (h.finished, h.cls_score) {
            (true, Some(c)) => c,
            _ => return Err(Error::Contract(format!("hypothesis {i} is not finished with a classifier score"))),
        };
        h.rank_score = Some((1.0 - lambda) * h.lm_norm_score() + lambda * cls);
    }
    finished.sort_by(rank_order);
    Ok(finished)
}

fn by_log_prob(a: &BeamHypothesis, b: &BeamHypothesis) -> Ordering {
    b.log_prob
        .partial_cmp(&a.log_prob)
        .unwrap_or(Ordering::Equal)
        .then(a.ended_with_eos.cmp(&b.ended_with_eos).reverse())
        .then_with(|| a.ids.cmp(&b.ids))
}

/// Runs the search and returns finished hypotheses, ranked. `blocker`
/// carries the persona and history n-grams.
pub fn beam_search<S: StepScorer + ?Sized>(
    scorer: &S,
    blocker: Option<&NgramBlocker>,
    params: &DecodeParams,
) -> Result<Vec<BeamHypothesis>> {
    params.validate()?;
    let vocab = scorer.vocab_size();
    let eos = scorer.eos();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let gumbel = Gumbel::new(0.0, 1.0).expect("unit gumbel");
    let mut live = vec![BeamHypothesis::root()];
    let mut finished = Vec::new();

    for step in 0..params.max_new_tokens {
        let prefixes: Vec<&[u32]> = live.iter().map(|h| h.ids.as_slice()).collect();
        let dists = scorer.next_log_probs(&prefixes)?;
        if dists.len() != live.len() || dists.iter().any(|d| d.len() != vocab) {
            return Err(Error::Contract("scorer returned distributions of the wrong shape".into()));
        }
        let mut pool = Vec::new();
        for (h, lp) in live.iter().zip(&dists) {
            let blocked = blocker.map(|b| b.blocked_after(&h.ids)).unwrap_or_default();
            let mut allowed: Vec<u32> = (0..vocab as u32)
                .filter(|&t| lp[t as usize] > f64::NEG_INFINITY)
                .filter(|&t| {
                    if Some(t) == eos {
                        h.ids.len() >= params.min_new_tokens
                    } else {
                        scorer.is_generatable(t) && !blocked.contains(&t)
                    }
                })
                .collect();
            allowed.sort_by(|&a, &b| lp[b as usize].partial_cmp(&lp[a as usize]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
            allowed.truncate(params.top_k);
            let draws = params.beam_size.min(allowed.len());
            let mut keyed: Vec<(f64, u32)> = allowed
                .iter()
                .map(|&t| {
                    let key = if params.temperature == 0.0 {
                        lp[t as usize]
                    } else {
                        lp[t as usize] / params.temperature + gumbel.sample(&mut rng)
                    };
                    (key, t)
                })
                .collect();
            keyed.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
            for &(_, t) in &keyed[..draws] {
                let mut next = h.clone();
                next.log_prob += lp[t as usize];
                if Some(t) == eos {
                    next.finished = true;
                    next.ended_with_eos = true;
                } else {
                    next.ids.push(t);
                }
                pool.push(next);
            }
        }
        if pool.is_empty() {
            log::debug!("every expansion blocked at step {step}");
            break;
        }
        pool.sort_by(by_log_prob);
        pool.truncate(params.beam_size);
        let last = step + 1 == params.max_new_tokens;
        live.clear();
        for mut h in pool {
            if h.finished || last {
                h.finished = true;
                finished.push(h);
            } else {
                live.push(h);
            }
        }
        if live.is_empty() {
            break;
        }
    }

    if finished.is_empty() {
        return Err(Error::DecodeExhausted);
    }
    let replies: Vec<&[u32]> = finished.iter().map(|h| h.ids.as_slice()).collect();
    let cls = scorer.cls_scores(&replies)?;
    for (h, c) in finished.iter_mut().zip(cls) {
        h.cls_score = Some(c);
    }
    rank(finished, params.rank_lambda)
}

/// One ranked reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub text: String,
    #[serde(skip)]
    pub ids: Vec<u32>,
    pub lm_norm_score: f64,
    pub cls_score: f64,
    pub rank_score: f64,
}

/// Ranked replies for `example` (its `reply` field is ignored). The context
/// is truncated so that `max_new_tokens` plus EOS and CLS fit.
pub fn generate<T: Scalar>(
    params: &ModelParams<T>,
    tok: &BpeModel,
    example: &DialogExample,
    dp: &DecodeParams,
) -> Result<Vec<Generation>> {
    dp.validate()?;
    let scorer = TransformerScorer::new(params, tok, example, dp.max_new_tokens)?;
    let blocker = dp.ngram_block_n.map(|n| NgramBlocker::new(n, &scorer.forbidden_sources(example)));
    let ranked = beam_search(&scorer, blocker.as_ref(), dp)?;
    ranked
        .into_iter()
        .map(|h| {
            Ok(Generation {
                text: tok.decode(&h.ids, false)?,
                lm_norm_score: h.lm_norm_score(),
                cls_score: h.cls_score.unwrap_or(0.0),
                rank_score: h.rank_score.unwrap_or(0.0),
                ids: h.ids,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Log-probs depend only on the prefix length; cls prefers longer replies.
    struct Fixed {
        rows: Vec<Vec<f64>>,
        eos: Option<u32>,
    }

    impl StepScorer for Fixed {
        fn vocab_size(&self) -> usize {
            self.rows[0].len()
        }
        fn eos(&self) -> Option<u32> {
            self.eos
        }
        fn next_log_probs(&self, prefixes: &[&[u32]]) -> Result<Vec<Vec<f64>>> {
            Ok(prefixes.iter().map(|p| self.rows[p.len().min(self.rows.len() - 1)].clone()).collect())
        }
        fn cls_scores(&self, replies: &[&[u32]]) -> Result<Vec<f64>> {
            Ok(replies.iter().map(|r| r.len() as f64).collect())
        }
    }

    fn ln(ps: &[f64]) -> Vec<f64> {
        ps.iter().map(|p| p.ln()).collect()
    }

    fn hyp(ids: &[u32], log_prob: f64, cls: f64) -> BeamHypothesis {
        BeamHypothesis {
            ids: ids.to_vec(),
            log_prob,
            finished: true,
            ended_with_eos: false,
            cls_score: Some(cls),
            rank_score: None,
        }
    }

    #[test]
    fn rank_formula_and_ties() {
        let h1 = hyp(&[1, 1], -2.0, 2.0);
        let h2 = hyp(&[2, 2], -1.0, 0.0);
        let r = rank(vec![h2.clone(), h1.clone()], 0.5).unwrap();
        assert_eq!(r[0].ids, vec![1, 1]);
        assert!((r[0].rank_score.unwrap() - 0.5).abs() < 1e-12);
        assert!((r[1].rank_score.unwrap() + 0.25).abs() < 1e-12);

        let short = hyp(&[1, 2, 3], -3.0, 0.0);
        let long = hyp(&[1, 2, 3, 4, 5], -5.0, 0.0);
        let r = rank(vec![long, short], 0.0).unwrap();
        assert_eq!(r[0].ids.len(), 3);
    }

    #[test]
    fn rank_rejects_unfinished() {
        let mut h = hyp(&[1], -1.0, 0.0);
        h.cls_score = None;
        assert!(matches!(rank(vec![h], 0.3), Err(Error::Contract(_))));
    }

    #[test]
    fn ngram_examples() {
        let persona: &[u32] = &[7, 8, 9];
        assert!(!ngram_allowed(&[1, 7, 8, 9], &[persona], 3));
        assert!(ngram_allowed(&[7, 8], &[persona], 3));
        // "i like to ski" vs "i like tennis"
        let src: &[u32] = &[1, 2, 3, 4];
        assert!(ngram_allowed(&[1, 2, 5], &[src], 3));
    }

    #[test]
    fn blocker_covers_sources_and_self_repeats() {
        let b = NgramBlocker::new(3, &[vec![7, 8, 9]]);
        assert!(b.blocked_after(&[1, 7, 8]).contains(&9));
        assert!(b.blocked_after(&[8]).is_empty());
        let gen = [1, 2, 3, 1, 2];
        assert!(b.blocked_after(&gen).contains(&3));
    }

    #[test]
    fn eos_finishes_and_min_length_holds() {
        let s = Fixed { rows: vec![ln(&[0.7, 0.2, 0.1])], eos: Some(0) };
        let dp = DecodeParams { temperature: 0.0, ngram_block_n: None, max_new_tokens: 4, ..Default::default() };
        let out = beam_search(&s, None, &dp).unwrap();
        assert!(out.iter().all(|h| h.finished && !h.ids.is_empty()));
        let best_lp = out.iter().map(|h| h.log_prob).fold(f64::NEG_INFINITY, f64::max);
        assert!((best_lp - (0.2f64.ln() + 0.7f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn lambda_one_orders_by_cls() {
        let s = Fixed { rows: vec![ln(&[0.4, 0.35, 0.25])], eos: Some(0) };
        let dp = DecodeParams { rank_lambda: 1.0, ngram_block_n: None, max_new_tokens: 5, ..Default::default() };
        let out = beam_search(&s, None, &dp).unwrap();
        for w in out.windows(2) {
            assert!(w[0].cls_score.unwrap() >= w[1].cls_score.unwrap());
        }
    }

    #[test]
    fn fully_blocked_search_is_exhausted() {
        let s = Fixed { rows: vec![ln(&[0.5, 0.5])], eos: None };
        let b = NgramBlocker::new(1, &[vec![0, 1]]);
        let dp = DecodeParams { max_new_tokens: 2, ..Default::default() };
        assert!(matches!(beam_search(&s, Some(&b), &dp), Err(Error::DecodeExhausted)));
    }

    #[test]
    fn params_validation() {
        assert!(DecodeParams { beam_size: 0, ..Default::default() }.validate().is_err());
        assert!(DecodeParams { rank_lambda: 1.5, ..Default::default() }.validate().is_err());
        assert!(DecodeParams { max_new_tokens: 0, ..Default::default() }.validate().is_err());
        assert!(DecodeParams { temperature: -1.0, ..Default::default() }.validate().is_err());
        assert!(DecodeParams::default().validate().is_ok());
    }
}
