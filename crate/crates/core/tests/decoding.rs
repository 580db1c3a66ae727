use parley::decoder::{self, beam_search, contains_forbidden_ngram, BeamHypothesis, DecodeParams, NgramBlocker, StepScorer};
use parley::input::{DialogExample, Speaker, Utterance};
use parley::model::{ModelConfig, ModelParams};
use parley::scoring::TransformerScorer;
use parley::tokenizer::{train_bpe, BpeModel};

fn setup() -> (BpeModel, ModelParams<f32>, DialogExample) {
    let corpus = ["i like to ski in the winter", "my dog is named rex", "what do you do for fun", "i read books all day"];
    let tok = train_bpe(&corpus, 40).unwrap();
    let config = ModelConfig { n_positions: 96, ..ModelConfig::tiny(tok.vocab_size()) };
    let params = ModelParams::init(&config, 3).unwrap();
    let ex = DialogExample {
        persona: vec!["i like to ski in the winter".into(), "my dog is named rex".into()],
        history: vec![Utterance::new(Speaker::One, "what do you do for fun")],
        ..Default::default()
    };
    (tok, params, ex)
}

fn params(beam: usize, lambda: f64, seed: u64) -> DecodeParams {
    DecodeParams { beam_size: beam, max_new_tokens: 6, rank_lambda: lambda, seed, ..Default::default() }
}

fn search(lambda: f64, seed: u64) -> Vec<BeamHypothesis> {
    let (tok, p, ex) = setup();
    let scorer = TransformerScorer::new(&p, &tok, &ex, 6).unwrap();
    let blocker = NgramBlocker::new(3, &scorer.forbidden_sources(&ex));
    beam_search(&scorer, Some(&blocker), &params(4, lambda, seed)).unwrap()
}

#[test]
fn cumulative_log_prob_matches_rescoring() {
    let (tok, p, ex) = setup();
    let scorer = TransformerScorer::new(&p, &tok, &ex, 6).unwrap();
    let eos = scorer.eos().unwrap();
    for h in search(0.3, 5) {
        let mut total = 0.0;
        for i in 0..h.ids.len() {
            total += scorer.next_log_probs(&[&h.ids[..i]]).unwrap()[0][h.ids[i] as usize];
        }
        if h.ended_with_eos {
            total += scorer.next_log_probs(&[&h.ids]).unwrap()[0][eos as usize];
        }
        assert!((total - h.log_prob).abs() < 1e-6, "{total} vs {}", h.log_prob);
    }
}

#[test]
fn ranking_follows_lambda() {
    let lm = search(0.0, 5);
    assert!(lm.windows(2).all(|w| w[0].lm_norm_score() >= w[1].lm_norm_score()));
    let cls = search(1.0, 5);
    assert!(cls.windows(2).all(|w| w[0].cls_score.unwrap() >= w[1].cls_score.unwrap()));
    for h in search(0.4, 5) {
        let want = 0.6 * h.lm_norm_score() + 0.4 * h.cls_score.unwrap();
        assert!((h.rank_score.unwrap() - want).abs() < 1e-12);
    }
}

#[test]
fn same_seed_same_output() {
    assert_eq!(search(0.3, 9), search(0.3, 9));
}

#[test]
fn generated_replies_avoid_context_trigrams() {
    let (tok, p, ex) = setup();
    let sources: Vec<Vec<u32>> = ex.persona.iter().chain(ex.history.iter().map(|u| &u.text)).map(|t| tok.encode(t)).collect();
    let refs: Vec<&[u32]> = sources.iter().map(Vec::as_slice).collect();
    for seed in 0..20 {
        let dp = DecodeParams { temperature: 1.5, ..params(3, 0.3, seed) };
        for g in decoder::generate(&p, &tok, &ex, &dp).unwrap() {
            assert!(!contains_forbidden_ngram(&g.ids, &refs, 3), "{:?}", g.text);
        }
    }
}

#[test]
fn generation_never_emits_special_tokens() {
    let (tok, p, ex) = setup();
    for seed in 0..10 {
        for g in decoder::generate(&p, &tok, &ex, &params(4, 0.3, seed)).unwrap() {
            assert!(g.ids.iter().all(|&id| !tok.is_special(id)));
            assert!(!g.ids.is_empty());
        }
    }
}
