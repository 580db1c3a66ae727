//! Byte-pair-encoding tokenizer.
//!
//! Words are whitespace-split and lowercased. The final character of each word
//! carries an end-of-word marker (`e</w>`), so merges never cross word
//! boundaries and decoding can restore spaces. Special tokens live in a
//! separate id range at the start of the id space.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const END_OF_WORD: &str = "</w>";

/// Reserved tokens, in id order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Special {
    Bos,
    Eos,
    Cls,
    Sep,
    Pad,
    Persona,
    Speaker1,
    Speaker2,
    Unk,
}

impl Special {
    pub const ALL: [Special; 9] = [
        Special::Bos,
        Special::Eos,
        Special::Cls,
        Special::Sep,
        Special::Pad,
        Special::Persona,
        Special::Speaker1,
        Special::Speaker2,
        Special::Unk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Special::Bos => "BOS",
            Special::Eos => "EOS",
            Special::Cls => "CLS",
            Special::Sep => "SEP",
            Special::Pad => "PAD",
            Special::Persona => "PERSONA",
            Special::Speaker1 => "SPEAKER1",
            Special::Speaker2 => "SPEAKER2",
            Special::Unk => "UNK",
        }
    }

    fn rendered(self) -> String {
        format!("<{}>", self.name().to_lowercase())
    }
}

#[derive(Serialize, Deserialize)]
struct BpeFile {
    merges: Vec<(String, String)>,
    vocab: BTreeMap<String, u32>,
    specials: BTreeMap<String, u32>,
}

/// Trained merge list, symbol vocabulary and special-token registry.
#[derive(Debug, Clone)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    vocab: BTreeMap<String, u32>,
    specials: BTreeMap<String, u32>,
    id_to_symbol: Vec<Option<String>>,
    special_ids: HashMap<u32, Special>,
    merge_table: HashMap<(u32, u32), (usize, u32)>,
    special_lookup: [u32; 9],
}

impl PartialEq for BpeModel {
    fn eq(&self, other: &Self) -> bool {
        self.merges == other.merges && self.vocab == other.vocab && self.specials == other.specials
    }
}

fn normalize(text: &str) -> Vec<String> {
    text.split_whitespace().map(|w| w.to_lowercase()).collect()
}

fn word_symbols(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let last = chars.len().saturating_sub(1);
    chars
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if i == last {
                format!("{c}{END_OF_WORD}")
            } else {
                c.to_string()
            }
        })
        .collect()
}

/// Learns `num_merges` merges from `corpus`.
///
/// A pair is learnable when it occurs at least once and its concatenation is
/// not already a vocabulary symbol. Ties on frequency go to the
/// lexicographically smallest pair.
pub fn train_bpe<S: AsRef<str>>(corpus: &[S], num_merges: usize) -> Result<BpeModel> {
    if corpus.iter().all(|l| l.as_ref().trim().is_empty()) {
        return Err(Error::Config("cannot train BPE on an empty corpus".into()));
    }
    let mut word_freq: BTreeMap<String, usize> = BTreeMap::new();
    for line in corpus {
        for w in normalize(line.as_ref()) {
            *word_freq.entry(w).or_default() += 1;
        }
    }

    let mut chars = BTreeSet::new();
    for w in word_freq.keys() {
        chars.extend(w.chars());
    }
    let mut base: Vec<String> = Vec::with_capacity(chars.len() * 2);
    for c in &chars {
        base.push(c.to_string());
        base.push(format!("{c}{END_OF_WORD}"));
    }
    base.sort();

    let mut symbols: BTreeSet<String> = base.iter().cloned().collect();
    let mut words: Vec<(Vec<String>, usize)> =
        word_freq.iter().map(|(w, &f)| (word_symbols(w), f)).collect();

    let mut merges = Vec::new();
    while merges.len() < num_merges {
        let mut counts: HashMap<(&str, &str), usize> = HashMap::new();
        for (syms, f) in &words {
            for pair in syms.windows(2) {
                *counts.entry((pair[0].as_str(), pair[1].as_str())).or_default() += f;
            }
        }
        let best = counts
            .into_iter()
            .filter(|((l, r), _)| !symbols.contains(&format!("{l}{r}")))
            .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)))
            .map(|((l, r), _)| (l.to_string(), r.to_string()));
        let Some((left, right)) = best else { break };
        let merged = format!("{left}{right}");
        for (syms, _) in words.iter_mut() {
            apply_merge(syms, &left, &right, &merged);
        }
        symbols.insert(merged);
        merges.push((left, right));
    }

    let mut vocab = BTreeMap::new();
    let mut next = Special::ALL.len() as u32;
    for s in base {
        vocab.insert(s, next);
        next += 1;
    }
    for (l, r) in &merges {
        vocab.insert(format!("{l}{r}"), next);
        next += 1;
    }
    let specials = Special::ALL
        .iter()
        .enumerate()
        .map(|(i, s)| (s.name().to_string(), i as u32))
        .collect();
    BpeModel::from_parts(merges, vocab, specials)
}

fn apply_merge(syms: &mut Vec<String>, left: &str, right: &str, merged: &str) {
    let mut i = 0;
    while i + 1 < syms.len() {
        if syms[i] == left && syms[i + 1] == right {
            syms[i] = merged.to_string();
            syms.remove(i + 1);
        }
        i += 1;
    }
}

impl BpeModel {
    fn from_parts(
        merges: Vec<(String, String)>,
        vocab: BTreeMap<String, u32>,
        specials: BTreeMap<String, u32>,
    ) -> Result<Self> {
        let mut special_lookup = [0u32; 9];
        let mut special_ids = HashMap::new();
        for (slot, s) in Special::ALL.iter().enumerate() {
            let id = *specials
                .get(s.name())
                .ok_or_else(|| Error::Parse { line: None, message: format!("missing special {}", s.name()) })?;
            special_lookup[slot] = id;
            special_ids.insert(id, *s);
        }
        let max_id = vocab.values().chain(specials.values()).copied().max().unwrap_or(0);
        let mut id_to_symbol: Vec<Option<String>> = vec![None; max_id as usize + 1];
        for (sym, &id) in &vocab {
            if special_ids.contains_key(&id) {
                return Err(Error::Parse {
                    line: None,
                    message: format!("symbol {sym:?} reuses special id {id}"),
                });
            }
            if id_to_symbol[id as usize].is_some() {
                return Err(Error::Parse { line: None, message: format!("duplicate id {id}") });
            }
            id_to_symbol[id as usize] = Some(sym.clone());
        }
        let mut merge_table = HashMap::new();
        for (rank, (l, r)) in merges.iter().enumerate() {
            let lookup = |s: &str| {
                vocab.get(s).copied().ok_or_else(|| Error::Parse {
                    line: None,
                    message: format!("merge references unknown symbol {s:?}"),
                })
            };
            let key = (lookup(l)?, lookup(r)?);
            let out = lookup(&format!("{l}{r}"))?;
            merge_table.entry(key).or_insert((rank, out));
        }
        Ok(Self { merges, vocab, specials, id_to_symbol, special_ids, merge_table, special_lookup })
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn vocab(&self) -> &BTreeMap<String, u32> {
        &self.vocab
    }

    pub fn specials(&self) -> &BTreeMap<String, u32> {
        &self.specials
    }

    /// Total id space (symbols plus specials).
    pub fn vocab_size(&self) -> usize {
        self.id_to_symbol.len()
    }

    pub fn special(&self, s: Special) -> u32 {
        let slot = Special::ALL.iter().position(|x| *x == s).expect("listed special");
        self.special_lookup[slot]
    }

    pub fn is_special(&self, id: u32) -> bool {
        self.special_ids.contains_key(&id)
    }

    pub fn id_of(&self, symbol: &str) -> Option<u32> {
        self.vocab.get(symbol).copied()
    }

    /// Applies merges greedily by rank, word by word. Unknown characters map
    /// to the UNK id.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let unk = self.special(Special::Unk);
        let mut out = Vec::new();
        for word in normalize(text) {
            let mut ids: Vec<u32> = word_symbols(&word)
                .iter()
                .map(|s| self.vocab.get(s).copied().unwrap_or(unk))
                .collect();
            loop {
                let best = ids
                    .windows(2)
                    .filter_map(|p| self.merge_table.get(&(p[0], p[1])).map(|&(rank, out)| (rank, p[0], p[1], out)))
                    .min_by_key(|&(rank, ..)| rank);
                let Some((_, l, r, merged)) = best else { break };
                let mut next = Vec::with_capacity(ids.len());
                let mut i = 0;
                while i < ids.len() {
                    if i + 1 < ids.len() && ids[i] == l && ids[i + 1] == r {
                        next.push(merged);
                        i += 2;
                    } else {
                        next.push(ids[i]);
                        i += 1;
                    }
                }
                ids = next;
            }
            out.extend(ids);
        }
        out
    }

    /// Joins symbols back into text. Special tokens are dropped unless
    /// `render_specials`, in which case they appear as `<name>` words.
    pub fn decode(&self, ids: &[u32], render_specials: bool) -> Result<String> {
        let mut text = String::new();
        for (position, &id) in ids.iter().enumerate() {
            if let Some(s) = self.special_ids.get(&id) {
                if render_specials {
                    if !text.is_empty() && !text.ends_with(' ') {
                        text.push(' ');
                    }
                    text.push_str(&s.rendered());
                    text.push(' ');
                }
                continue;
            }
            let sym = self
                .id_to_symbol
                .get(id as usize)
                .and_then(|s| s.as_deref())
                .ok_or(Error::Decode { position, id })?;
            match sym.strip_suffix(END_OF_WORD) {
                Some(stem) => {
                    text.push_str(stem);
                    text.push(' ');
                }
                None => text.push_str(sym),
            }
        }
        Ok(text.trim_end().to_string())
    }

    pub fn to_json(&self) -> String {
        let file = BpeFile {
            merges: self.merges.clone(),
            vocab: self.vocab.clone(),
            specials: self.specials.clone(),
        };
        serde_json::to_string(&file).expect("tokenizer serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: BpeFile = serde_json::from_str(s).map_err(|e| Error::Parse {
            line: Some(e.line()),
            message: e.to_string(),
        })?;
        Self::from_parts(file.merges, file.vocab, file.specials)
    }

    /// SHA-256 of the serialized model, hex encoded.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::data::write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
