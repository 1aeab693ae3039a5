//! Tweet-aware tokenization and the token vocabulary.
//!
//! At each position the scanner tries every rule and takes the longest
//! match, with earlier rules winning ties:
//!
//! 1. URLs: `http://`, `https://` or `www.` up to the next whitespace,
//!    minus trailing punctuation;
//! 2. mentions: `@` followed by word characters;
//! 3. hashtags: `#` followed by word characters;
//! 4. a fixed list of emoticons, case preserved;
//! 5. runs of letters, digits and apostrophes, lowercased;
//! 6. any other non-whitespace character on its own.
//!
//! Only rule 5 lowercases.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::corpus::Example;
use crate::error::{io_err, Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const MAX_LEN: usize = 64;
pub const DEFAULT_MIN_FREQ: usize = 2;

pub const EMOTICONS: [&str; 10] = [":)", ":(", ":D", ";)", ":-)", ":-(", ":P", "<3", ":/", ":'("];

/// Characters dropped from the end of a URL match, so that sentence
/// punctuation after a link is tokenized separately.
const URL_TRAILING: &[char] = &['.', ',', '!', '?', ';', ':', '\'', '"', ')', ']', '}', '>'];

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn is_run_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\''
}

/// Length in bytes of the prefix of `s` whose chars satisfy `pred`.
fn prefix_len(s: &str, pred: impl Fn(char) -> bool) -> usize {
    s.char_indices()
        .find(|&(_, c)| !pred(c))
        .map_or(s.len(), |(i, _)| i)
}

fn match_url(s: &str) -> usize {
    let lower_starts = |p: &str| s.len() >= p.len() && s.is_char_boundary(p.len()) && s[..p.len()].eq_ignore_ascii_case(p);
    let scheme = ["https://", "http://", "www."].into_iter().find(|p| lower_starts(p));
    let Some(scheme) = scheme else { return 0 };
    let end = prefix_len(s, |c| !c.is_whitespace());
    let trimmed = s[..end].trim_end_matches(URL_TRAILING);
    if trimmed.len() <= scheme.len() {
        0
    } else {
        trimmed.len()
    }
}

fn match_prefixed(s: &str, sigil: char) -> usize {
    match s.strip_prefix(sigil) {
        Some(rest) => match prefix_len(rest, is_word_char) {
            0 => 0,
            n => sigil.len_utf8() + n,
        },
        None => 0,
    }
}

fn match_emoticon(s: &str) -> usize {
    EMOTICONS.iter().filter(|e| s.starts_with(**e)).map(|e| e.len()).max().unwrap_or(0)
}

/// Splits a tweet into tokens. Deterministic and total: every
/// non-whitespace character ends up in exactly one token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut rest = text;
    loop {
        rest = rest.trim_start();
        let Some(first) = rest.chars().next() else { break };
        // (length, lowercase) per rule; `max_by_key` keeps the last maximum,
        // so iterate in reverse rule order to let earlier rules win ties.
        let candidates = [
            (match_url(rest), false),
            (match_prefixed(rest, '@'), false),
            (match_prefixed(rest, '#'), false),
            (match_emoticon(rest), false),
            (prefix_len(rest, is_run_char), true),
            (first.len_utf8(), false),
        ];
        let (len, lower) = candidates
            .into_iter()
            .rev()
            .max_by_key(|&(len, _)| len)
            .expect("the single-character rule always matches");
        let token = &rest[..len];
        tokens.push(if lower { token.to_lowercase() } else { token.to_string() });
        rest = &rest[len..];
    }
    tokens
}

/// Fixed-length encoding of one text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Encoded {
    pub ids: Vec<usize>,
    /// Number of real tokens; positions from here on are padding.
    pub length: usize,
}

impl Encoded {
    pub fn mask(&self) -> Vec<bool> {
        (0..self.ids.len()).map(|i| i < self.length).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    min_freq: usize,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>, min_freq: usize) -> Result<Self> {
        if tokens.len() < 2 || tokens[PAD] != PAD_TOKEN || tokens[UNK] != UNK_TOKEN {
            return Err(Error::Data(format!(
                "vocabulary must start with {PAD_TOKEN} and {UNK_TOKEN}"
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), id).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self {
            tokens,
            index,
            min_freq,
        })
    }

    /// Keeps tokens seen at least `min_freq` times in `corpus`. Ids are
    /// assigned by descending frequency, ties in lexicographic order.
    pub fn build(corpus: &[Example], min_freq: usize) -> Result<Self> {
        if min_freq == 0 {
            return Err(Error::Config("min_freq must be at least 1".into()));
        }
        if corpus.is_empty() {
            return Err(Error::Data("cannot build a vocabulary from no examples".into()));
        }
        let mut freq: HashMap<String, usize> = HashMap::new();
        for ex in corpus {
            for t in tokenize(&ex.text) {
                *freq.entry(t).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = freq.into_iter().filter(|&(_, n)| n >= min_freq).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = [PAD_TOKEN.to_string(), UNK_TOKEN.to_string()]
            .into_iter()
            .chain(kept.into_iter().map(|(t, _)| t))
            .collect();
        Self::from_tokens(tokens, min_freq)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Threshold used when built; 0 when loaded from a file.
    pub fn min_freq(&self) -> usize {
        self.min_freq
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Tokenizes `text`, keeps the first `max_len` tokens and pads to
    /// `max_len` with PAD.
    pub fn encode(&self, text: &str, max_len: usize) -> Encoded {
        let mut ids: Vec<usize> = tokenize(text).iter().take(max_len).map(|t| self.id(t)).collect();
        let length = ids.len();
        ids.resize(max_len, PAD);
        Encoded { ids, length }
    }

    /// One token per line; the line number is the id.
    pub fn to_file_string(&self) -> String {
        let mut out = self.tokens.join("\n");
        out.push('\n');
        out
    }

    /// SHA-256 of the file form, hex encoded. Checkpoints record it so a
    /// model is never paired with a different id assignment.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_file_string().as_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_file_string()).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let tokens = text.lines().map(str::to_string).collect();
        Self::from_tokens(tokens, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tweet_example() {
        assert_eq!(toks("@user I LOVE #nyc :)"), ["@user", "i", "love", "#nyc", ":)"]);
    }

    #[test]
    fn url_drops_trailing_punctuation() {
        assert_eq!(toks("check https://t.co/abc!!"), ["check", "https://t.co/abc", "!", "!"]);
        assert_eq!(toks("see www.example.com/a_b."), ["see", "www.example.com/a_b", "."]);
    }

    #[test]
    fn empty_and_whitespace() {
        assert!(toks("").is_empty());
        assert!(toks(" \t\n ").is_empty());
    }

    #[test]
    fn emoticons_keep_case_and_prefer_longest() {
        assert_eq!(toks(":-) :P :'( <3"), [":-)", ":P", ":'(", "<3"]);
        assert_eq!(toks(":-D"), [":", "-", "d"]);
    }

    #[test]
    fn apostrophes_stay_in_words() {
        assert_eq!(toks("Don't STOP"), ["don't", "stop"]);
    }

    #[test]
    fn bare_sigils_are_single_characters() {
        assert_eq!(toks("@ # x"), ["@", "#", "x"]);
        assert_eq!(toks("#Love_It!"), ["#Love_It", "!"]);
    }

    #[test]
    fn build_respects_min_freq() {
        let corpus = [Example::new("a a a b", 0)];
        let v = Vocabulary::build(&corpus, 2).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("a"), 2);
        assert_eq!(v.id("b"), UNK);
        let v1 = Vocabulary::build(&corpus, 1).unwrap();
        assert_eq!(v1.id("b"), 3);
        assert!(Vocabulary::build(&corpus, 0).is_err());
    }

    #[test]
    fn frequency_ties_are_lexicographic() {
        let corpus = [Example::new("zeta alpha mid mid", 0)];
        let v = Vocabulary::build(&corpus, 1).unwrap();
        assert_eq!(v.token(2), Some("mid"));
        assert_eq!(v.token(3), Some("alpha"));
        assert_eq!(v.token(4), Some("zeta"));
        assert_eq!(v, Vocabulary::build(&corpus, 1).unwrap());
    }

    #[test]
    fn encode_pads_truncates_and_maps_unknowns() {
        let corpus = [Example::new("one two three one two three", 0)];
        let v = Vocabulary::build(&corpus, 2).unwrap();
        let e = v.encode("one two three", MAX_LEN);
        assert_eq!(e.length, 3);
        assert_eq!(e.ids.len(), MAX_LEN);
        assert!(e.ids[3..].iter().all(|&i| i == PAD));
        assert_eq!(e.mask().iter().filter(|&&m| m).count(), 3);
        assert_eq!(v.encode("one four", MAX_LEN).ids[1], UNK);

        let long = vec!["one"; 70].join(" ");
        let e = v.encode(&long, MAX_LEN);
        assert_eq!(e.length, 64);
        assert!(e.mask().iter().all(|&m| m));
    }
}
