//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Tolerances are fixed here and never loosened to make a run pass.

use std::cell::RefCell;
use std::collections::HashMap;
use std::process::ExitCode;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use parley::autodiff::{log_softmax, Graph, Var};
use parley::checkpoint::Checkpoint;
use parley::data::Dataset;
use parley::decoder::{self, beam_search, contains_forbidden_ngram, DecodeParams, StepScorer};
use parley::evaluator::{self, DialogScorer, EvalOptions, HITS_DISTRACTORS};
use parley::gradcheck::check_gradients;
use parley::input::{self, BuildOptions, DialogExample, DialogState, Speaker, TokenizedContext, Utterance};
use parley::model::{self, BoundParams, ModelConfig, ModelParams, SequenceBatch};
use parley::scoring::ModelScorer;
use parley::synthetic::{gen_synthetic, SyntheticConfig};
use parley::tokenizer::{train_bpe, BpeModel, Special};
use parley::trainer::{self, MultiTaskBatch, TrainConfig, Trainer};

const GRAD_TOL: f64 = 1e-4;
const CAUSAL_TOL: f64 = 1e-10;
const LM_CALIBRATION_REL: f64 = 0.01;
const OVERFIT_MAX_STEPS: usize = 2000;
const OVERFIT_PPL: f64 = 1.5;
const GEN_STEPS: usize = 2000;
const GEN_MIN_HITS: f64 = 0.30;
const PPL_ORACLE_TOL: f64 = 1e-6;
const RANDOM_HITS_RANGE: (f64, f64) = (0.03, 0.07);
/// Learning rate for from-scratch desk runs.
const DESK_LR: f64 = 1e-3;
const MERGES: usize = 400;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(name: &'static str, pass: bool, detail: String) -> Outcome {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("{tag} {name}: {detail}");
    Outcome { name, pass, detail }
}

fn examples_of(ds: &Dataset) -> Vec<DialogExample> {
    ds.examples().into_iter().map(|e| e.example).collect()
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let config = ModelConfig {
        n_layers: 2,
        d_model: 16,
        n_heads: 2,
        d_ff: 64,
        vocab_size: 64,
        n_positions: 16,
        n_states: 4,
        dropout_rate: 0.0,
        activation: Default::default(),
    };
    let mut params = ModelParams::<f64>::init(&config, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    // Move off the small-std init, where query/key gradients sit below
    // finite-difference resolution.
    let noise = Normal::new(0.0, 0.3).unwrap();
    for t in params.tensors_mut() {
        t.data_mut().iter_mut().for_each(|x| *x += noise.sample(&mut rng));
    }
    let seq = 12;
    let rows: Vec<(Vec<u32>, Vec<u32>, Vec<u32>)> = (0..2)
        .map(|_| {
            let w = (0..seq).map(|_| rng.gen_range(0..64)).collect();
            let s = (0..seq).map(|_| rng.gen_range(0..4)).collect();
            (w, (0..seq as u32).collect(), s)
        })
        .collect();
    let refs: Vec<(&[u32], &[u32], &[u32])> =
        rows.iter().map(|(a, b, c)| (a.as_slice(), b.as_slice(), c.as_slice())).collect();
    let gold = 1;
    let batch = MultiTaskBatch {
        seqs: SequenceBatch::from_rows(&refs, 0, 3),
        n_examples: 1,
        n_candidates: 2,
        gold: vec![gold],
        lm_positions: (0..seq - 1).map(|p| (gold, p)).collect(),
        lm_targets: (0..seq - 1).map(|p| rows[gold].0[p + 1]).collect(),
        cls_index: vec![seq - 1; 2],
    };
    let f = |g: &mut Graph<f64>, vars: &[Var]| {
        let bound = BoundParams::from_vars(vars.to_vec(), &config);
        let mut r = ChaCha8Rng::seed_from_u64(0);
        Ok(trainer::multitask_loss(g, &bound, &config, &batch, 2.0, 1.0, &mut r)?.total)
    };
    let report = check_gradients(params.tensors(), &f, 1e-5, GRAD_TOL).unwrap();
    let worst = report.params.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error)).unwrap();
    outcome(
        "gradient check (2 layers, d=16, V=64, seq 12, f64, 2*LM + CLS)",
        report.passed(),
        format!(
            "max rel err {:.2e} at {} (tol {GRAD_TOL:.0e}), {} tensors / {} elements, {:.1}s",
            worst.max_rel_error,
            params.names()[worst.index],
            report.params.len(),
            params.param_count(),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn causality() -> Outcome {
    let config = ModelConfig { n_positions: 24, ..ModelConfig::tiny(64) };
    let params = ModelParams::<f64>::init(&config, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let logits = |w: &[u32], s: &[u32]| {
        let p: Vec<u32> = (0..w.len() as u32).collect();
        let batch = SequenceBatch::from_rows(&[(w, &p, s)], 0, 3);
        let (mut g, b, h) = model::infer(&params, &batch).unwrap();
        let l = model::lm_logits(&mut g, &b, h).unwrap();
        g.value(l).data().to_vec()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let len = rng.gen_range(2..=20);
        let w: Vec<u32> = (0..len).map(|_| rng.gen_range(0..64)).collect();
        let s: Vec<u32> = (0..len).map(|_| rng.gen_range(0..4)).collect();
        let t = rng.gen_range(0..len - 1);
        let mut w2 = w.clone();
        let mut s2 = s.clone();
        for i in t + 1..len {
            w2[i] = rng.gen_range(0..64);
            s2[i] = rng.gen_range(0..4);
        }
        let (a, b) = (logits(&w, &s), logits(&w2, &s2));
        let prefix = (t + 1) * 64;
        for (x, y) in a[..prefix].iter().zip(&b[..prefix]) {
            worst = worst.max((x - y).abs());
        }
    }
    outcome("causality (100 inputs)", worst <= CAUSAL_TOL, format!("max |delta| at earlier positions {worst:.1e} (tol {CAUSAL_TOL:.0e})"))
}

fn random_words(rng: &mut ChaCha8Rng, words: &[&str], lo: usize, hi: usize) -> String {
    let n = rng.gen_range(lo..=hi);
    (0..n).map(|_| *words.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn persona_invariance() -> Outcome {
    let words = ["i", "like", "cats", "dogs", "run", "blue", "my", "job", "is", "fun", "a", "pilot", "eat", "pizza"];
    let corpus: Vec<String> = vec![words.join(" ")];
    let tok = train_bpe(&corpus, 30).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let opts = BuildOptions::new(512);
    let persona_state = DialogState::Persona.id();
    let mut failures = 0;
    for _ in 0..1000 {
        let persona: Vec<String> = (0..rng.gen_range(1..=5)).map(|_| random_words(&mut rng, &words, 1, 6)).collect();
        let n_hist = rng.gen_range(0..4);
        let history: Vec<Utterance> = (0..n_hist)
            .map(|i| {
                let sp = if (n_hist - i) % 2 == 1 { Speaker::One } else { Speaker::Two };
                Utterance::new(sp, random_words(&mut rng, &words, 1, 5))
            })
            .collect();
        let ex = DialogExample { persona, history, reply: random_words(&mut rng, &words, 1, 5), candidates: vec![] };
        let shuffled = input::shuffle_persona(&ex, &mut rng);
        let triples = |e: &DialogExample| {
            let t = input::build(&tok, e, &e.reply, &opts).unwrap();
            let mut v: Vec<(u32, u32, u32)> = (1..t.len())
                .filter(|&i| t.state_ids[i] == persona_state)
                .map(|i| (t.word_ids[i], t.position_ids[i], t.state_ids[i]))
                .collect();
            v.sort_unstable();
            v
        };
        if triples(&ex) != triples(&shuffled) {
            failures += 1;
        }
    }
    outcome("persona permutation invariance (1000 examples)", failures == 0, format!("{failures} of 1000 multisets differ"))
}

fn desk_tokenizer(ds: &Dataset) -> BpeModel {
    train_bpe(&ds.texts(), MERGES).unwrap()
}

fn candidate_batch(tok: &BpeModel, ds: &Dataset, n_examples: usize, n_cands: usize, seed: u64) -> MultiTaskBatch {
    let pool = trainer::UtterancePool::from_dataset(ds);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = BuildOptions::new(256);
    let exs = ds.examples();
    let mut inputs = Vec::new();
    let mut gold = Vec::new();
    for ie in exs.iter().take(n_examples) {
        let d = trainer::sample_distractors(&pool, ie.dialog, &ie.example.reply, n_cands - 1, &mut rng).unwrap();
        let (cands, g) = trainer::place_gold(&ie.example.reply, d, &mut rng);
        inputs.push(trainer::build_candidates(tok, &ie.example, &cands, &opts).unwrap());
        gold.push(g);
    }
    MultiTaskBatch::assemble(tok, &inputs, &gold).unwrap()
}

fn loss_calibration() -> Outcome {
    let ds = gen_synthetic(21, &SyntheticConfig::new(40)).unwrap();
    let tok = desk_tokenizer(&ds);
    let v = tok.vocab_size();
    let n_cands = 4;
    let batch = candidate_batch(&tok, &ds, 2, n_cands, 0);
    let mut params = ModelParams::<f64>::init(&ModelConfig::desk(v), 0).unwrap();
    let lm = trainer::lm_loss(&params, &batch).unwrap();
    let lm_rel = (lm - (v as f64).ln()).abs() / (v as f64).ln();
    for name in ["cls.w", "cls.b"] {
        params.get_mut(name).unwrap().data_mut().iter_mut().for_each(|x| *x = 0.0);
    }
    let cls = trainer::cls_loss(&params, &batch).unwrap();
    let want = (n_cands as f64).ln();
    let pass = lm_rel <= LM_CALIBRATION_REL && cls == want;
    outcome(
        "loss calibration",
        pass,
        format!(
            "LM {lm:.4} vs ln({v}) = {:.4} (rel {lm_rel:.2e}, tol {LM_CALIBRATION_REL}); zeroed-head CLS {cls:.17} vs ln({n_cands}) = {want:.17}",
            (v as f64).ln()
        ),
    )
}

fn train_cfg(steps: usize, dropout: f64, seed: u64) -> TrainConfig {
    TrainConfig { lr: DESK_LR, total_steps: steps, batch_size: 2, dropout, seed, ..TrainConfig::default() }
}

fn overfit() -> Outcome {
    let start = Instant::now();
    let ds = gen_synthetic(31, &SyntheticConfig::new(8)).unwrap();
    let tok = desk_tokenizer(&ds);
    let params = ModelParams::<f32>::init(&ModelConfig::desk(tok.vocab_size()), 1).unwrap();
    let cfg = TrainConfig { n_distractors: 3, ..train_cfg(OVERFIT_MAX_STEPS, 0.0, 1) };
    let mut t = Trainer::new(&tok, params, &ds, cfg).unwrap();
    let exs = examples_of(&ds);
    let (mut ppl, mut hits) = (f64::INFINITY, 0.0);
    while t.step_index() < OVERFIT_MAX_STEPS {
        for _ in 0..250 {
            t.step().unwrap();
        }
        let s = ModelScorer::new(&t.params, &tok);
        ppl = evaluator::perplexity(&s, &exs).unwrap();
        hits = evaluator::hits_at_1(&s, &ds, HITS_DISTRACTORS, 0).unwrap();
        if ppl <= OVERFIT_PPL && hits == 1.0 {
            break;
        }
    }
    outcome(
        "overfit sanity (8 dialogs, 3 distractors)",
        ppl <= OVERFIT_PPL && hits == 1.0,
        format!(
            "train PPL {ppl:.4} (<= {OVERFIT_PPL}), train Hits@1 {hits:.3} (= 1.0) after {} steps (<= {OVERFIT_MAX_STEPS}), {:.0}s",
            t.step_index(),
            start.elapsed().as_secs_f64()
        ),
    )
}

struct Trained {
    tok: BpeModel,
    params: ModelParams<f32>,
    eval: Dataset,
}

fn generalization() -> (Outcome, Trained) {
    let start = Instant::now();
    let all = gen_synthetic(11, &SyntheticConfig::new(250)).unwrap();
    let train = Dataset { dialogs: all.dialogs[..200].to_vec() };
    let eval = Dataset { dialogs: all.dialogs[200..].to_vec() };
    let tok = desk_tokenizer(&train);
    let params = ModelParams::<f32>::init(&ModelConfig::desk(tok.vocab_size()), 1).unwrap();
    let mut t = Trainer::new(&tok, params, &train, train_cfg(GEN_STEPS, 0.1, 1)).unwrap();
    t.run(|_| {}).unwrap();
    let train_secs = start.elapsed().as_secs_f64();
    let report = evaluator::evaluate(&t.params, &tok, &eval, &EvalOptions::default()).unwrap();
    let baseline = evaluator::random_reply_f1(&eval, 0).unwrap();
    let pass = report.hits_at_1 >= GEN_MIN_HITS && report.f1 > baseline;
    let o = outcome(
        "generalization above chance (200 train / 50 eval dialogs, 2000 steps)",
        pass,
        format!(
            "eval Hits@1 {:.3} (>= {GEN_MIN_HITS}, chance 0.05), eval F1 {:.3} vs random-reply {:.3}, PPL {:.2}; train {train_secs:.0}s, total {:.0}s",
            report.hits_at_1,
            report.f1,
            baseline,
            report.ppl,
            start.elapsed().as_secs_f64()
        ),
    );
    let params = t.params;
    (o, Trained { tok, params, eval })
}

/// Next-token distributions drawn at random per prefix; classifier score 0.
struct Rigged {
    vocab: usize,
    seed: u64,
}

impl Rigged {
    fn dist(&self, prefix: &[u32]) -> Vec<f64> {
        let mut h = self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        for &t in prefix {
            h = (h ^ (t as u64 + 1)).wrapping_mul(0x1000_0000_01B3);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        let logits: Vec<f64> = (0..self.vocab).map(|_| rng.gen_range(-3.0..3.0)).collect();
        log_softmax(&logits)
    }
}

impl StepScorer for Rigged {
    fn vocab_size(&self) -> usize {
        self.vocab
    }
    fn eos(&self) -> Option<u32> {
        None
    }
    fn next_log_probs(&self, prefixes: &[&[u32]]) -> parley::Result<Vec<Vec<f64>>> {
        Ok(prefixes.iter().map(|p| self.dist(p)).collect())
    }
    fn cls_scores(&self, replies: &[&[u32]]) -> parley::Result<Vec<f64>> {
        Ok(vec![0.0; replies.len()])
    }
}

fn decoding_oracle() -> Outcome {
    let mut mismatches = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for m in 0..50 {
        let vocab = rng.gen_range(2..=5usize);
        let len = rng.gen_range(1..=3usize);
        let model = Rigged { vocab, seed: m };
        let mut best = (f64::NEG_INFINITY, Vec::new());
        for code in 0..vocab.pow(len as u32) {
            let seq: Vec<u32> = (0..len).map(|i| ((code / vocab.pow(i as u32)) % vocab) as u32).collect();
            let lp: f64 = (0..len).map(|i| model.dist(&seq[..i])[seq[i] as usize]).sum();
            if lp > best.0 {
                best = (lp, seq);
            }
        }
        let dp = DecodeParams {
            beam_size: vocab.pow(len as u32),
            top_k: vocab,
            temperature: 0.0,
            max_new_tokens: len,
            ngram_block_n: None,
            rank_lambda: 0.0,
            seed: m,
            min_new_tokens: 0,
        };
        let out = beam_search(&model, None, &dp).unwrap();
        if out[0].ids != best.1 {
            mismatches += 1;
        }
    }
    outcome("decoding oracle (50 rigged models, exhaustive argmax)", mismatches == 0, format!("{mismatches} of 50 top outputs differ"))
}

/// Argmax loop over the raw model, independent of the decoder.
fn greedy_reference(params: &ModelParams<f32>, tok: &BpeModel, ex: &DialogExample, max_new: usize) -> Vec<u32> {
    let opts = BuildOptions::new(params.config.n_positions);
    let ctx = TokenizedContext::from_example(tok, ex).windowed(opts.history_window).fit(max_new, opts.max_len, true).unwrap();
    let prompt = input::build_prompt(tok, &ctx, &opts);
    let eos = tok.special(Special::Eos);
    let mut out = Vec::new();
    while out.len() < max_new {
        let (w, p, s) = prompt.extended(&out);
        let batch = SequenceBatch::from_rows(&[(&w, &p, &s)], tok.special(Special::Pad), DialogState::Neutral.id());
        let (mut g, b, h) = model::infer(params, &batch).unwrap();
        let l = model::lm_logits(&mut g, &b, h).unwrap();
        let row = g.value(l).row(w.len() - 1).to_vec();
        let mut best: Option<(f32, u32)> = None;
        for (id, &x) in row.iter().enumerate() {
            let id = id as u32;
            let ok = if id == eos { !out.is_empty() } else { !tok.is_special(id) };
            if ok && best.is_none_or(|(bx, _)| x > bx) {
                best = Some((x, id));
            }
        }
        let (_, id) = best.unwrap();
        if id == eos {
            break;
        }
        out.push(id);
    }
    out
}

fn greedy_equivalence(m: &Trained) -> Outcome {
    let exs = examples_of(&m.eval);
    let mut differ = 0;
    let n = 20;
    for (i, ex) in exs.iter().take(n).enumerate() {
        let dp = DecodeParams { beam_size: 1, top_k: 1, rank_lambda: 0.0, ngram_block_n: None, max_new_tokens: 12, seed: i as u64, ..Default::default() };
        let got = decoder::generate(&m.params, &m.tok, ex, &dp).unwrap();
        if got[0].ids != greedy_reference(&m.params, &m.tok, ex, 12) {
            differ += 1;
        }
    }
    outcome("greedy degeneration (beam 1, top-k 1, lambda 0)", differ == 0, format!("{differ} of {n} outputs differ from the reference greedy loop"))
}

fn filter_guarantee(m: &Trained) -> Outcome {
    let start = Instant::now();
    let exs = examples_of(&m.eval);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut violations = 0;
    let mut outputs = 0;
    let total = 500;
    for i in 0..total {
        let mut ex = exs[i % exs.len()].clone();
        if i % 2 == 1 {
            // Ask the persona's own sentence back as a question to invite copying.
            let p = ex.persona[0].clone();
            ex.history.push(Utterance::new(Speaker::Two, "tell me more"));
            ex.history.push(Utterance::new(Speaker::One, p));
        }
        let dp = DecodeParams {
            beam_size: rng.gen_range(1..=4),
            top_k: rng.gen_range(1..=40),
            temperature: rng.gen_range(0.0..1.5),
            max_new_tokens: 8,
            ngram_block_n: Some(3),
            rank_lambda: 0.3,
            seed: i as u64,
            min_new_tokens: 1,
        };
        let sources: Vec<Vec<u32>> =
            ex.persona.iter().chain(ex.history.iter().map(|u| &u.text)).map(|t| m.tok.encode(t)).collect();
        let refs: Vec<&[u32]> = sources.iter().map(Vec::as_slice).collect();
        match decoder::generate(&m.params, &m.tok, &ex, &dp) {
            Ok(gens) => {
                for g in gens {
                    outputs += 1;
                    if contains_forbidden_ngram(&g.ids, &refs, 3) {
                        violations += 1;
                    }
                }
            }
            Err(parley::Error::DecodeExhausted) => {}
            Err(e) => panic!("generation failed: {e}"),
        }
    }
    outcome(
        "n-gram filter guarantee (500 generations, n = 3)",
        violations == 0,
        format!("{violations} violating outputs among {outputs} returned beams, {:.0}s", start.elapsed().as_secs_f64()),
    )
}

struct StubLogits(Vec<(Vec<f64>, u32)>);

impl DialogScorer for StubLogits {
    fn reply_logits(&self, _: &DialogExample) -> parley::Result<(Vec<Vec<f64>>, Vec<u32>)> {
        Ok((self.0.iter().map(|r| r.0.clone()).collect(), self.0.iter().map(|r| r.1).collect()))
    }
    fn candidate_scores(&self, _: &DialogExample, c: &[String]) -> parley::Result<Vec<f64>> {
        Ok(vec![0.0; c.len()])
    }
}

struct RandomScores(RefCell<ChaCha8Rng>);

impl DialogScorer for RandomScores {
    fn reply_logits(&self, _: &DialogExample) -> parley::Result<(Vec<Vec<f64>>, Vec<u32>)> {
        unreachable!()
    }
    fn candidate_scores(&self, _: &DialogExample, c: &[String]) -> parley::Result<Vec<f64>> {
        let mut r = self.0.borrow_mut();
        Ok(c.iter().map(|_| r.gen::<f64>()).collect())
    }
}

fn metric_oracles() -> Outcome {
    // Logit rows over 4 symbols whose softmax puts 0.5, 0.25, 0.125 on the target.
    let row = |p: f64, target: usize| {
        let rest = (1.0 - p) / 3.0;
        let v: Vec<f64> = (0..4).map(|i| if i == target { p.ln() } else { rest.ln() }).collect();
        (v, target as u32)
    };
    let stub = StubLogits(vec![row(0.5, 0), row(0.25, 2), row(0.125, 3)]);
    let ex = DialogExample { persona: vec![], history: vec![], reply: "x".into(), candidates: vec![] };
    let ppl = evaluator::perplexity(&stub, &[ex]).unwrap();
    let want = (0.5f64 * 0.25 * 0.125).powf(-1.0 / 3.0);
    let ppl_ok = (ppl - want).abs() <= PPL_ORACLE_TOL;

    let f1_cases = [("i love cats", "i love cats", 1.0), ("i love cats", "we hate dogs", 0.0), ("i love cats", "i love dogs", 0.5)];
    let f1_ok = f1_cases.iter().all(|&(p, g, v)| evaluator::f1(p, g) == v);

    let ds = gen_synthetic(41, &SyntheticConfig { exchanges: 1, ..SyntheticConfig::new(2000) }).unwrap();
    let hits = evaluator::hits_at_1(&RandomScores(RefCell::new(ChaCha8Rng::seed_from_u64(9))), &ds, HITS_DISTRACTORS, 9).unwrap();
    let hits_ok = (RANDOM_HITS_RANGE.0..=RANDOM_HITS_RANGE.1).contains(&hits);
    outcome(
        "metric oracles",
        ppl_ok && f1_ok && hits_ok,
        format!(
            "PPL {ppl:.9} vs {want:.9} (tol {PPL_ORACLE_TOL:.0e}); F1 cases {}; random Hits@1 {hits:.4} over {} trials (range {:?})",
            if f1_ok { "exact" } else { "WRONG" },
            ds.examples().len(),
            RANDOM_HITS_RANGE
        ),
    )
}

fn small_eval_opts() -> EvalOptions {
    EvalOptions { decode: DecodeParams { max_new_tokens: 8, ..DecodeParams::default() }, ..EvalOptions::default() }
}

fn determinism() -> Outcome {
    let ds = gen_synthetic(51, &SyntheticConfig::new(30)).unwrap();
    let tok = desk_tokenizer(&ds);
    let eval = Dataset { dialogs: ds.dialogs[..10].to_vec() };
    let run = || {
        let params = ModelParams::<f32>::init(&ModelConfig::desk(tok.vocab_size()), 7).unwrap();
        let mut t = Trainer::new(&tok, params, &ds, train_cfg(50, 0.1, 7)).unwrap();
        let mut log = String::new();
        t.run(|r| {
            log.push_str(&r.to_json_line());
            log.push('\n');
        })
        .unwrap();
        let report = evaluator::evaluate(&t.params, &tok, &eval, &small_eval_opts()).unwrap();
        let ck = Checkpoint { params: t.params, tokenizer: tok.clone(), step: 50, optimizer: Some(t.state) };
        (ck.to_bytes(), log, report.to_json())
    };
    let a = run();
    let b = run();
    outcome(
        "determinism (fine-tune 50 steps, eval)",
        a == b,
        format!(
            "checkpoint bytes {}, metrics log {}, eval report {}",
            if a.0 == b.0 { "identical" } else { "DIFFER" },
            if a.1 == b.1 { "identical" } else { "DIFFER" },
            if a.2 == b.2 { "identical" } else { "DIFFER" }
        ),
    )
}

fn persistence(m: &Trained) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let ck = Checkpoint::new(m.params.clone(), m.tok.clone());
    ck.save(&path).unwrap();
    let back = Checkpoint::<f32>::load(&path).unwrap();
    let bits = |p: &ModelParams<f32>| p.tensors().iter().flat_map(|t| t.data().iter().map(|x| x.to_bits())).collect::<Vec<_>>();
    let exact = bits(&back.params) == bits(&m.params) && back.tokenizer == m.tok;
    let sub = Dataset { dialogs: m.eval.dialogs[..10].to_vec() };
    let before = evaluator::evaluate(&m.params, &m.tok, &sub, &small_eval_opts()).unwrap();
    let after = evaluator::evaluate(&back.params, &back.tokenizer, &sub, &small_eval_opts()).unwrap();
    outcome(
        "persistence (save, load, re-evaluate)",
        exact && before == after,
        format!(
            "tensors {}, eval report {}",
            if exact { "bit-identical" } else { "DIFFER" },
            if before == after { "identical" } else { "DIFFERS" }
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut results = vec![gradient_check(), causality(), persona_invariance(), loss_calibration(), metric_oracles(), decoding_oracle()];
    results.push(overfit());
    let (gen, trained) = generalization();
    results.push(gen);
    results.push(greedy_equivalence(&trained));
    results.push(filter_guarantee(&trained));
    results.push(determinism());
    results.push(persistence(&trained));
    let failed: Vec<&Outcome> = results.iter().filter(|o| !o.pass).collect();
    println!(
        "acceptance: {} passed, {} failed, {:.0}s",
        results.len() - failed.len(),
        failed.len(),
        start.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        let mut by_name: HashMap<&str, &str> = HashMap::new();
        for o in &failed {
            by_name.insert(o.name, &o.detail);
        }
        for (name, detail) in by_name {
            eprintln!("failed: {name}: {detail}");
        }
        ExitCode::FAILURE
    }
}
