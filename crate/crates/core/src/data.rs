//! Dialog datasets in JSONL form, one dialog per line:
//!
//! ```json
//! {"persona": ["..."], "turns": [{"speaker": 1, "text": "..."}],
//!  "eval_candidates": [["..." x 20]] | null, "gold_index": [0] | null}
//! ```
//!
//! The persona belongs to speaker 2, whose turns are the reply targets.
//! `eval_candidates[i]` is the candidate set for the i-th speaker-2 turn and
//! `gold_index[i]` points at that turn's text inside it.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::input::{DialogExample, Speaker, Utterance};

/// Speaker whose persona conditions the replies.
pub const PERSONA_OWNER: Speaker = Speaker::Two;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialog {
    pub persona: Vec<String>,
    pub turns: Vec<Utterance>,
    #[serde(default)]
    pub eval_candidates: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub gold_index: Option<Vec<usize>>,
}

impl Dialog {
    pub fn new(persona: Vec<String>, turns: Vec<Utterance>) -> Self {
        Self { persona, turns, eval_candidates: None, gold_index: None }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.turns.is_empty() {
            return Err("dialog has no turns".into());
        }
        for (i, w) in self.turns.windows(2).enumerate() {
            if w[0].speaker == w[1].speaker {
                return Err(format!("turns {} and {} have the same speaker", i, i + 1));
            }
        }
        let replies = self.reply_turns().count();
        match (&self.eval_candidates, &self.gold_index) {
            (None, None) => {}
            (Some(_), None) => return Err("eval_candidates without gold_index".into()),
            (None, Some(_)) => return Err("gold_index without eval_candidates".into()),
            (Some(sets), Some(gold)) => {
                if sets.len() != replies || gold.len() != replies {
                    return Err(format!(
                        "expected {replies} candidate sets and gold indices, got {} and {}",
                        sets.len(),
                        gold.len()
                    ));
                }
                for (k, ((set, &g), turn)) in sets.iter().zip(gold).zip(self.reply_turns()).enumerate() {
                    if g >= set.len() {
                        return Err(format!("gold_index[{k}] = {g} outside candidate set of {}", set.len()));
                    }
                    if set[g] != self.turns[turn].text {
                        return Err(format!("gold_index[{k}] does not point at the reply text"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Indices of the persona owner's turns.
    pub fn reply_turns(&self) -> impl Iterator<Item = usize> + '_ {
        self.turns.iter().enumerate().filter(|(_, t)| t.speaker == PERSONA_OWNER).map(|(i, _)| i)
    }

    /// One example per persona-owner turn, with the full preceding history.
    pub fn examples(&self) -> Vec<DialogExample> {
        self.reply_turns()
            .enumerate()
            .map(|(k, t)| {
                let candidates = match (&self.eval_candidates, &self.gold_index) {
                    (Some(sets), Some(gold)) => sets[k]
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| *i != gold[k])
                        .map(|(_, c)| c.clone())
                        .collect(),
                    _ => Vec::new(),
                };
                DialogExample {
                    persona: self.persona.clone(),
                    history: self.turns[..t].to_vec(),
                    reply: self.turns[t].text.clone(),
                    candidates,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub dialogs: Vec<Dialog>,
}

/// An example plus the dialog it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexedExample {
    pub dialog: usize,
    pub example: DialogExample,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.dialogs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogs.is_empty()
    }

    pub fn examples(&self) -> Vec<IndexedExample> {
        self.dialogs
            .iter()
            .enumerate()
            .flat_map(|(d, dialog)| dialog.examples().into_iter().map(move |example| IndexedExample { dialog: d, example }))
            .collect()
    }

    /// Every utterance text, tagged with its dialog index.
    pub fn utterances(&self) -> Vec<(usize, &str)> {
        self.dialogs
            .iter()
            .enumerate()
            .flat_map(|(d, dialog)| dialog.turns.iter().map(move |t| (d, t.text.as_str())))
            .collect()
    }

    /// Persona sentences and turns, one line each, for tokenizer training.
    pub fn texts(&self) -> Vec<String> {
        let mut out = Vec::new();
        for d in &self.dialogs {
            out.extend(d.persona.iter().cloned());
            out.extend(d.turns.iter().map(|t| t.text.clone()));
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for d in &self.dialogs {
            s.push_str(&serde_json::to_string(d).expect("dialog serializes"));
            s.push('\n');
        }
        s
    }

    pub fn parse_jsonl(text: &str) -> Result<Self> {
        let mut dialogs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let dialog: Dialog = serde_json::from_str(line)
                .map_err(|e| Error::Parse { line: Some(line_no), message: e.to_string() })?;
            dialog
                .validate()
                .map_err(|message| Error::Parse { line: Some(line_no), message })?;
            dialogs.push(dialog);
        }
        Ok(Self { dialogs })
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let ds = Dataset::parse_jsonl(&text)?;
    if ds.is_empty() {
        log::warn!("dataset {} contains no dialogs", path.display());
    }
    Ok(ds)
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    write_atomic(path, ds.to_jsonl().as_bytes())
}

/// Writes to a sibling temp file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::Io(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
