//! Templated persona dialogs. Each persona sentence states a value for a
//! theme; speaker 1 asks about persona themes and speaker 2 answers with the
//! persona's value, so replies are predictable from the persona alone.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Dialog};
use crate::error::{Error, Result};
use crate::input::{Speaker, Utterance};

pub struct Theme {
    pub name: &'static str,
    pub persona: &'static str,
    pub questions: &'static [&'static str],
    pub replies: &'static [&'static str],
    pub values: &'static [&'static str],
}

/// `{}` in templates is replaced by the value. Reply templates share no
/// three-word run with their persona template.
pub const THEMES: &[Theme] = &[
    Theme {
        name: "food",
        persona: "i love eating {}",
        questions: &["what is your favorite food ?", "what do you like to eat ?"],
        replies: &["{} is the best food ever", "mostly {} , every single day"],
        values: &["pizza", "sushi", "pasta", "tacos", "salad", "burgers", "noodles", "curry", "soup", "steak"],
    },
    Theme {
        name: "pet",
        persona: "i have a pet {}",
        questions: &["do you have any pets ?", "any animals at home ?"],
        replies: &["yes , my {} is great", "just one {} at home"],
        values: &["dog", "cat", "rabbit", "parrot", "hamster", "turtle", "snake", "goldfish", "horse", "lizard"],
    },
    Theme {
        name: "color",
        persona: "my favorite color is {}",
        questions: &["what color do you like ?", "which color is the best ?"],
        replies: &["definitely {} , always", "{} looks nice to me"],
        values: &["red", "blue", "green", "yellow", "purple", "orange", "black", "white", "pink", "brown"],
    },
    Theme {
        name: "job",
        persona: "i work as a {}",
        questions: &["what do you do for work ?", "what is your job ?"],
        replies: &["i am a {} , it pays well", "being a {} keeps me busy"],
        values: &["teacher", "nurse", "doctor", "chef", "pilot", "farmer", "lawyer", "baker", "driver", "painter"],
    },
    Theme {
        name: "sport",
        persona: "i play {} on weekends",
        questions: &["do you play any sports ?", "what sport do you like ?"],
        replies: &["{} with my friends", "lots of {} , it is fun"],
        values: &["soccer", "tennis", "golf", "hockey", "baseball", "basketball", "volleyball", "rugby", "cricket", "chess"],
    },
    Theme {
        name: "music",
        persona: "i listen to {} music",
        questions: &["what music do you like ?", "what do you listen to ?"],
        replies: &["mostly {} , all day", "{} songs make me happy"],
        values: &["rock", "jazz", "pop", "country", "blues", "metal", "classical", "reggae", "disco", "folk"],
    },
    Theme {
        name: "home",
        persona: "i live in {}",
        questions: &["where do you live ?", "where are you from ?"],
        replies: &["{} , it is lovely there", "my home is {}"],
        values: &["paris", "london", "tokyo", "texas", "ohio", "canada", "mexico", "spain", "berlin", "boston"],
    },
    Theme {
        name: "hobby",
        persona: "i enjoy {} in my free time",
        questions: &["what do you do for fun ?", "any hobbies ?"],
        replies: &["{} relaxes me a lot", "mostly {} after work"],
        values: &["reading", "hiking", "cooking", "gardening", "dancing", "fishing", "painting", "swimming", "camping", "knitting"],
    },
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub n_dialogs: usize,
    pub persona_size: usize,
    /// Question/answer exchanges per dialog, at most `persona_size`.
    pub exchanges: usize,
    /// Number of themes drawn from [`THEMES`].
    pub n_themes: usize,
}

impl SyntheticConfig {
    pub fn new(n_dialogs: usize) -> Self {
        Self { n_dialogs, persona_size: 4, exchanges: 3, n_themes: THEMES.len() }
    }
}

fn fill(template: &str, value: &str) -> String {
    template.replace("{}", value)
}

pub fn gen_synthetic(seed: u64, cfg: &SyntheticConfig) -> Result<Dataset> {
    if cfg.n_dialogs == 0 {
        return Err(Error::Config("n_dialogs must be at least 1".into()));
    }
    if cfg.n_themes == 0 || cfg.n_themes > THEMES.len() || cfg.persona_size > cfg.n_themes {
        return Err(Error::Config(format!(
            "need 1 <= persona_size ({}) <= n_themes ({}) <= {}",
            cfg.persona_size,
            cfg.n_themes,
            THEMES.len()
        )));
    }
    if cfg.exchanges == 0 || cfg.exchanges > cfg.persona_size {
        return Err(Error::Config("exchanges must be in 1..=persona_size".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let themes = &THEMES[..cfg.n_themes];
    let mut dialogs = Vec::with_capacity(cfg.n_dialogs);
    for _ in 0..cfg.n_dialogs {
        let chosen: Vec<(&Theme, &str)> = rand::seq::index::sample(&mut rng, themes.len(), cfg.persona_size)
            .into_iter()
            .map(|i| {
                let t = &themes[i];
                (t, *t.values.choose(&mut rng).expect("values"))
            })
            .collect();
        let persona = chosen.iter().map(|(t, v)| fill(t.persona, v)).collect();
        let mut asked: Vec<usize> = (0..chosen.len()).collect();
        asked.shuffle(&mut rng);
        let mut turns = Vec::with_capacity(2 * cfg.exchanges);
        for &i in &asked[..cfg.exchanges] {
            let (t, v) = chosen[i];
            let q = t.questions[rng.gen_range(0..t.questions.len())];
            let r = t.replies[rng.gen_range(0..t.replies.len())];
            turns.push(Utterance::new(Speaker::One, q));
            turns.push(Utterance::new(Speaker::Two, fill(r, v)));
        }
        dialogs.push(Dialog::new(persona, turns));
    }
    Ok(Dataset { dialogs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluator::content_words;

    #[test]
    fn deterministic_and_valid() {
        let a = gen_synthetic(7, &SyntheticConfig::new(20)).unwrap();
        let b = gen_synthetic(7, &SyntheticConfig::new(20)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_synthetic(8, &SyntheticConfig::new(20)).unwrap());
        for d in &a.dialogs {
            d.validate().unwrap();
        }
        let parsed = Dataset::parse_jsonl(&a.to_jsonl()).unwrap();
        assert_eq!(parsed, a);
    }

    #[test]
    fn replies_share_content_words_with_persona() {
        let ds = gen_synthetic(3, &SyntheticConfig::new(200)).unwrap();
        let mut total = 0;
        let mut shared = 0;
        for d in &ds.dialogs {
            let persona: Vec<String> = d.persona.iter().flat_map(|p| content_words(p)).collect();
            for t in d.reply_turns() {
                total += 1;
                if content_words(&d.turns[t].text).iter().any(|w| persona.contains(w)) {
                    shared += 1;
                }
            }
        }
        assert!(shared as f64 >= 0.9 * total as f64, "{shared}/{total}");
    }

    #[test]
    fn replies_never_copy_persona_trigrams() {
        for t in THEMES {
            for v in t.values {
                let p: Vec<String> = fill(t.persona, v).split(' ').map(str::to_string).collect();
                for r in t.replies {
                    let r: Vec<String> = fill(r, v).split(' ').map(str::to_string).collect();
                    for w in r.windows(3) {
                        assert!(!p.windows(3).any(|x| x == w), "{} / {:?}", t.name, w);
                    }
                }
            }
        }
    }

    #[test]
    fn bad_configs() {
        assert!(gen_synthetic(0, &SyntheticConfig::new(0)).is_err());
        let c = SyntheticConfig { exchanges: 5, ..SyntheticConfig::new(3) };
        assert!(gen_synthetic(0, &c).is_err());
    }
}
