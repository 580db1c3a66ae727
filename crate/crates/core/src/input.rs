//! Builds model inputs from a dialog: persona sentences, recent history and a
//! candidate reply, laid out as
//!
//! ```text
//! [BOS] persona_1 .. persona_k [SEP] u_1 [SEP] u_2 .. [SEP] candidate [EOS] [CLS]
//! ```
//!
//! with one word id, position id and dialog-state id per token. Every persona
//! sentence restarts its positions at the same base, so the persona block's
//! embeddings do not depend on sentence order. History and candidate positions
//! continue after the longest persona sentence.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::IGNORE;
use crate::error::{Error, Result};
use crate::tokenizer::{BpeModel, Special};

/// Number of dialog-state embeddings the builder can emit.
pub const N_STATES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DialogState {
    Persona = 0,
    Speaker1 = 1,
    Speaker2 = 2,
    /// Padding and unannotated (pre-training) text.
    Neutral = 3,
}

impl DialogState {
    pub fn id(self) -> u32 {
        self as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Speaker {
    One,
    Two,
}

impl Speaker {
    pub fn other(self) -> Speaker {
        match self {
            Speaker::One => Speaker::Two,
            Speaker::Two => Speaker::One,
        }
    }

    pub fn state(self) -> DialogState {
        match self {
            Speaker::One => DialogState::Speaker1,
            Speaker::Two => DialogState::Speaker2,
        }
    }
}

impl TryFrom<u8> for Speaker {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Speaker::One),
            2 => Ok(Speaker::Two),
            other => Err(format!("speaker must be 1 or 2, got {other}")),
        }
    }
}

impl From<Speaker> for u8 {
    fn from(s: Speaker) -> u8 {
        match s {
            Speaker::One => 1,
            Speaker::Two => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
}

impl Utterance {
    pub fn new(speaker: Speaker, text: impl Into<String>) -> Self {
        Self { speaker, text: text.into() }
    }
}

/// One reply-prediction case: the replying speaker's persona, the dialog so
/// far, the gold reply and optional distractor replies.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DialogExample {
    pub persona: Vec<String>,
    pub history: Vec<Utterance>,
    pub reply: String,
    pub candidates: Vec<String>,
}

impl DialogExample {
    /// The persona owner: whoever did not speak last, speaker 2 on an empty
    /// history.
    pub fn reply_speaker(&self) -> Speaker {
        self.history.last().map(|u| u.speaker.other()).unwrap_or(Speaker::Two)
    }

    pub fn check_alternation(&self) -> Result<()> {
        for (i, w) in self.history.windows(2).enumerate() {
            if w[0].speaker == w[1].speaker {
                return Err(Error::Input {
                    position: i + 1,
                    message: "history speakers must alternate".into(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LmScope {
    /// Only the candidate (and its EOS) is scored.
    #[default]
    Reply,
    /// Every next-token prediction in the sequence is scored.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub max_len: usize,
    pub separators: bool,
    pub lm_scope: LmScope,
    pub persona_base: u32,
    pub history_window: usize,
}

impl BuildOptions {
    pub fn new(max_len: usize) -> Self {
        Self { max_len, separators: true, lm_scope: LmScope::Reply, persona_base: 1, history_window: 5 }
    }
}

/// Parallel id sequences for one (context, candidate) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedInput {
    pub word_ids: Vec<u32>,
    pub position_ids: Vec<u32>,
    pub state_ids: Vec<u32>,
    /// `word_ids[i + 1]` inside the scored region, [`IGNORE`] elsewhere.
    pub lm_target_ids: Vec<u32>,
    pub cls_index: usize,
    /// Half-open token range of the candidate (EOS excluded).
    pub reply_span: (usize, usize),
}

impl TokenizedInput {
    pub fn len(&self) -> usize {
        self.word_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_ids.is_empty()
    }

    pub fn scored_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.lm_target_ids.iter().enumerate().filter(|(_, &t)| t != IGNORE).map(|(i, _)| i)
    }
}

/// Context already split into token ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TokenizedContext {
    pub persona: Vec<Vec<u32>>,
    pub history: Vec<(Speaker, Vec<u32>)>,
    pub reply_speaker: Option<Speaker>,
}

impl TokenizedContext {
    pub fn from_example(tok: &BpeModel, ex: &DialogExample) -> Self {
        Self {
            persona: ex.persona.iter().map(|p| tok.encode(p)).collect(),
            history: ex.history.iter().map(|u| (u.speaker, tok.encode(&u.text))).collect(),
            reply_speaker: Some(ex.reply_speaker()),
        }
    }

    fn speaker(&self) -> Speaker {
        self.reply_speaker
            .unwrap_or_else(|| self.history.last().map(|h| h.0.other()).unwrap_or(Speaker::Two))
    }

    /// Keeps the `window` most recent utterances.
    pub fn windowed(mut self, window: usize) -> Self {
        if self.history.len() > window {
            self.history.drain(..self.history.len() - window);
        }
        self
    }

    fn length_with(&self, candidate_len: usize, sep: usize) -> usize {
        1 + self.persona.iter().map(Vec::len).sum::<usize>()
            + self.history.iter().map(|(_, u)| sep + u.len()).sum::<usize>()
            + sep
            + candidate_len
            + 2
    }

    /// Drops whole oldest utterances, then whole persona sentences from the
    /// end, until a candidate of `candidate_len` tokens fits in `budget`.
    pub fn fit(mut self, candidate_len: usize, budget: usize, separators: bool) -> Result<Self> {
        let sep = usize::from(separators);
        let minimum = 1 + sep + candidate_len + 2;
        if minimum > budget {
            return Err(Error::InputTooLong { needed: minimum, max_len: budget });
        }
        let speaker = self.speaker();
        self.reply_speaker = Some(speaker);
        while self.length_with(candidate_len, sep) > budget {
            if !self.history.is_empty() {
                self.history.remove(0);
            } else {
                self.persona.pop();
            }
        }
        Ok(self)
    }
}

/// Prefix shared by every candidate: everything up to and including the
/// separator before the reply.
#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub word_ids: Vec<u32>,
    pub position_ids: Vec<u32>,
    pub state_ids: Vec<u32>,
    pub next_position: u32,
    pub reply_state: u32,
}

impl Prompt {
    /// Appends `tokens` as reply tokens.
    pub fn extended(&self, tokens: &[u32]) -> (Vec<u32>, Vec<u32>, Vec<u32>) {
        let mut w = self.word_ids.clone();
        let mut p = self.position_ids.clone();
        let mut s = self.state_ids.clone();
        for (i, &t) in tokens.iter().enumerate() {
            w.push(t);
            p.push(self.next_position + i as u32);
            s.push(self.reply_state);
        }
        (w, p, s)
    }
}

pub fn build_prompt(tok: &BpeModel, ctx: &TokenizedContext, opts: &BuildOptions) -> Prompt {
    let sep = tok.special(Special::Sep);
    let reply_state = ctx.speaker().state().id();
    let mut w = vec![tok.special(Special::Bos)];
    let mut p = vec![0u32];
    let mut s = vec![DialogState::Persona.id()];
    let base = opts.persona_base;
    let mut persona_end = base;
    for sentence in &ctx.persona {
        for (i, &t) in sentence.iter().enumerate() {
            w.push(t);
            p.push(base + i as u32);
            s.push(DialogState::Persona.id());
        }
        persona_end = persona_end.max(base + sentence.len() as u32);
    }
    let mut pos = persona_end;
    let mut push = |w: &mut Vec<u32>, p: &mut Vec<u32>, s: &mut Vec<u32>, t: u32, state: u32| {
        w.push(t);
        p.push(pos);
        s.push(state);
        pos += 1;
    };
    for (speaker, utt) in &ctx.history {
        let state = speaker.state().id();
        if opts.separators {
            push(&mut w, &mut p, &mut s, sep, state);
        }
        for &t in utt {
            push(&mut w, &mut p, &mut s, t, state);
        }
    }
    if opts.separators {
        push(&mut w, &mut p, &mut s, sep, reply_state);
    }
    Prompt { word_ids: w, position_ids: p, state_ids: s, next_position: pos, reply_state }
}

/// Lays out a fitted context with `candidate` token ids, appending EOS and
/// CLS. Fails when the result exceeds `opts.max_len`.
pub fn build_ids(
    tok: &BpeModel,
    ctx: &TokenizedContext,
    candidate: &[u32],
    opts: &BuildOptions,
) -> Result<TokenizedInput> {
    let prompt = build_prompt(tok, ctx, opts);
    let start = prompt.word_ids.len();
    let mut tail = candidate.to_vec();
    tail.push(tok.special(Special::Eos));
    tail.push(tok.special(Special::Cls));
    let (word_ids, position_ids, state_ids) = prompt.extended(&tail);
    let len = word_ids.len();
    if len > opts.max_len {
        return Err(Error::InputTooLong { needed: len, max_len: opts.max_len });
    }
    let eos = len - 2;
    let scored = match opts.lm_scope {
        LmScope::Reply => start.saturating_sub(1)..eos,
        LmScope::Full => 0..len - 1,
    };
    let lm_target_ids = (0..len)
        .map(|i| if scored.contains(&i) { word_ids[i + 1] } else { IGNORE })
        .collect();
    Ok(TokenizedInput {
        word_ids,
        position_ids,
        state_ids,
        lm_target_ids,
        cls_index: len - 1,
        reply_span: (start, eos),
    })
}

/// Tokenizes, windows and fits `example`, then builds it with
/// `candidate_text` as the reply.
pub fn build(
    tok: &BpeModel,
    example: &DialogExample,
    candidate_text: &str,
    opts: &BuildOptions,
) -> Result<TokenizedInput> {
    if candidate_text.trim().is_empty() {
        return Err(Error::Contract("candidate text must be non-empty".into()));
    }
    let candidate = tok.encode(candidate_text);
    let ctx = TokenizedContext::from_example(tok, example)
        .windowed(opts.history_window)
        .fit(candidate.len(), opts.max_len, opts.separators)?;
    build_ids(tok, &ctx, &candidate, opts)
}

/// Text-level truncation of `example` so that its own reply fits `budget`.
pub fn truncate(tok: &BpeModel, example: &DialogExample, budget: usize, separators: bool) -> Result<DialogExample> {
    let reply_len = tok.encode(&example.reply).len();
    let ctx = TokenizedContext::from_example(tok, example);
    let fitted = ctx.fit(reply_len, budget, separators)?;
    let dropped_history = example.history.len() - fitted.history.len();
    Ok(DialogExample {
        persona: example.persona[..fitted.persona.len()].to_vec(),
        history: example.history[dropped_history..].to_vec(),
        reply: example.reply.clone(),
        candidates: example.candidates.clone(),
    })
}

/// Copy of `example` with its persona sentences uniformly permuted.
pub fn shuffle_persona<R: Rng + ?Sized>(example: &DialogExample, rng: &mut R) -> DialogExample {
    let mut out = example.clone();
    out.persona.shuffle(rng);
    out
}
