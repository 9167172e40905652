//! Lexicon-driven multi-label classification of free-form face
//! descriptions onto the 40 CelebA attributes.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attributes::{celeba_index, CELEBA_ATTRIBUTES};
use crate::error::{Error, Result};
use crate::linalg::AttributeVector;
use crate::steering::TextEmbedding;

/// The lexicon shipped with the crate.
pub const DEFAULT_LEXICON: &str = include_str!("../assets/lexicon.toml");

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LexiconFile {
    version: String,
    negation_window: usize,
    negations: Vec<String>,
    attributes: BTreeMap<String, CueLists>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CueLists {
    #[serde(default)]
    positive: Vec<String>,
    #[serde(default)]
    negative: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Cue {
    tokens: Vec<String>,
    attribute: usize,
    positive: bool,
}

#[derive(Debug, Clone)]
pub struct AttributeLexicon {
    version: String,
    negation_window: usize,
    negations: HashSet<String>,
    /// Cues keyed by first token, longest first.
    cues: HashMap<String, Vec<Cue>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Word(String),
    Boundary,
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut Vec<Token>| {
        let w = word.trim_matches('\'');
        if !w.is_empty() {
            out.push(Token::Word(w.to_string()));
        }
        word.clear();
    };
    for ch in text.chars() {
        let ch = if matches!(ch, '\u{2019}' | '\u{2018}') {
            '\''
        } else {
            ch
        };
        if ch.is_alphanumeric() || ch == '\'' {
            word.extend(ch.to_lowercase());
        } else {
            flush(&mut word, &mut out);
            if matches!(ch, '.' | ',' | ';' | ':' | '!' | '?' | '(' | ')') {
                out.push(Token::Boundary);
            }
        }
    }
    flush(&mut word, &mut out);
    out
}

fn phrase_tokens(phrase: &str) -> Vec<String> {
    tokenize(phrase)
        .into_iter()
        .filter_map(|t| match t {
            Token::Word(w) => Some(w),
            Token::Boundary => None,
        })
        .collect()
}

impl AttributeLexicon {
    pub fn parse(source: &str) -> Result<Self> {
        let file: LexiconFile = toml::from_str(source).map_err(|e| Error::InvalidLexicon(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let source = std::fs::read_to_string(path)?;
        Self::parse(&source).map_err(|e| match e {
            Error::InvalidLexicon(msg) => Error::InvalidLexicon(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn default_lexicon() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }

    fn from_file(file: LexiconFile) -> Result<Self> {
        let invalid = |m: String| Err(Error::InvalidLexicon(m));
        for name in file.attributes.keys() {
            if celeba_index(name).is_none() {
                return invalid(format!("unknown attribute section `{name}`"));
            }
        }
        let missing: Vec<&str> = CELEBA_ATTRIBUTES
            .iter()
            .copied()
            .filter(|n| !file.attributes.contains_key(*n))
            .collect();
        if !missing.is_empty() {
            return invalid(format!("missing attribute sections: {}", missing.join(", ")));
        }

        let mut owner: HashMap<(Vec<String>, bool), usize> = HashMap::new();
        let mut cues: HashMap<String, Vec<Cue>> = HashMap::new();
        for (name, lists) in &file.attributes {
            let attribute = celeba_index(name).expect("checked above");
            let polarised = lists
                .positive
                .iter()
                .map(|p| (p, true))
                .chain(lists.negative.iter().map(|p| (p, false)));
            for (phrase, positive) in polarised {
                let tokens = phrase_tokens(phrase);
                if tokens.is_empty() {
                    return invalid(format!("empty cue phrase in `{name}`"));
                }
                if let Some(&prev) = owner.get(&(tokens.clone(), !positive)) {
                    if prev == attribute {
                        return invalid(format!("`{phrase}` is both a positive and a negative cue for `{name}`"));
                    }
                }
                match owner.insert((tokens.clone(), positive), attribute) {
                    Some(prev) if prev != attribute => {
                        return invalid(format!(
                            "cue `{phrase}` maps to both `{}` and `{name}` with the same polarity",
                            CELEBA_ATTRIBUTES[prev]
                        ));
                    }
                    Some(_) => continue,
                    None => {}
                }
                cues.entry(tokens[0].clone()).or_default().push(Cue {
                    tokens,
                    attribute,
                    positive,
                });
            }
        }
        for list in cues.values_mut() {
            list.sort_by(|a, b| b.tokens.len().cmp(&a.tokens.len()).then(a.attribute.cmp(&b.attribute)));
        }
        let negations = file.negations.iter().flat_map(|n| phrase_tokens(n)).collect();
        Ok(Self {
            version: file.version,
            negation_window: file.negation_window,
            negations,
            cues,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn negation_window(&self) -> usize {
        self.negation_window
    }

    /// Longest cues matching at `pos` (several when a phrase serves more
    /// than one attribute) and their length in tokens.
    fn match_at(&self, tokens: &[Token], pos: usize) -> Option<(usize, Vec<&Cue>)> {
        let Token::Word(first) = &tokens[pos] else {
            return None;
        };
        let candidates = self.cues.get(first)?;
        let fits = |cue: &Cue| {
            cue.tokens.len() <= tokens.len() - pos
                && cue
                    .tokens
                    .iter()
                    .zip(&tokens[pos..])
                    .all(|(c, t)| matches!(t, Token::Word(w) if w == c))
        };
        let best = candidates.iter().find(|c| fits(c))?;
        let len = best.tokens.len();
        let all = candidates.iter().filter(|c| c.tokens.len() == len && fits(c)).collect();
        Some((len, all))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mention {
    pub attribute: usize,
    pub value: f64,
    pub token: usize,
    pub negated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub embedding: TextEmbedding,
    pub mentions: Vec<Mention>,
    pub warnings: Vec<String>,
}

/// Maps a description to target values and a specified mask.
///
/// Cues are matched longest first. A negation word among the
/// `negation_window` tokens before a cue flips it once; the window stops
/// at punctuation and at the end of the previous cue. Later mentions of an
/// attribute override earlier ones.
pub fn classify_text(text: &str, lexicon: &AttributeLexicon) -> Classification {
    let tokens = tokenize(text);
    let n = CELEBA_ATTRIBUTES.len();
    let mut values = vec![0.0; n];
    let mut mask = vec![false; n];
    let mut mentions = Vec::new();
    let mut warnings = Vec::new();

    let mut pos = 0;
    let mut last_cue_end = 0;
    while pos < tokens.len() {
        let Some((len, cues)) = lexicon.match_at(&tokens, pos) else {
            pos += 1;
            continue;
        };
        let window_start = pos.saturating_sub(lexicon.negation_window).max(last_cue_end);
        let negated = tokens[window_start..pos]
            .iter()
            .rev()
            .take_while(|t| **t != Token::Boundary)
            .any(|t| matches!(t, Token::Word(w) if lexicon.negations.contains(w)));
        for cue in cues {
            let value = if cue.positive != negated { 1.0 } else { 0.0 };
            let a = cue.attribute;
            if mask[a] && values[a] != value {
                warnings.push(format!(
                    "conflicting mentions of {}; keeping the later one (value {value})",
                    CELEBA_ATTRIBUTES[a]
                ));
            }
            values[a] = value;
            mask[a] = true;
            mentions.push(Mention {
                attribute: a,
                value,
                token: pos,
                negated,
            });
        }
        pos += len;
        last_cue_end = pos;
    }

    let embedding = TextEmbedding::new(AttributeVector::new(values).expect("values are 0 or 1"), mask)
        .expect("unspecified entries are zero");
    Classification {
        embedding,
        mentions,
        warnings,
    }
}

/// JSON shape used by the CLI: attribute name → `{value, specified}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributeEntry {
    pub value: f64,
    pub specified: bool,
}

pub fn embedding_to_map(embedding: &TextEmbedding, names: &[String]) -> BTreeMap<String, AttributeEntry> {
    names
        .iter()
        .zip(embedding.values().iter().zip(embedding.mask()))
        .map(|(n, (&value, &specified))| (n.clone(), AttributeEntry { value, specified }))
        .collect()
}

/// Builds a full 40-attribute embedding from a name map; absent names are
/// unspecified.
pub fn embedding_from_map(map: &BTreeMap<String, AttributeEntry>) -> Result<TextEmbedding> {
    let n = CELEBA_ATTRIBUTES.len();
    let mut values = vec![0.0; n];
    let mut mask = vec![false; n];
    for (name, entry) in map {
        let i = celeba_index(name).ok_or_else(|| Error::UnknownAttributeName(name.clone()))?;
        if entry.specified {
            values[i] = entry.value;
            mask[i] = true;
        } else if entry.value != 0.0 {
            return Err(Error::InvalidConfig(format!(
                "unspecified attribute `{name}` must have value 0"
            )));
        }
    }
    TextEmbedding::new(AttributeVector::new(values)?, mask)
}
