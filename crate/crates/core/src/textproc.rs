//! Tokenization, vocabulary and clause segmentation.
//!
//! Everything here is pure and deterministic; the other modules rely on
//! `tokenize` as the single definition of a "normalized" text.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Characters that are always split off as standalone tokens.
pub const PUNCTUATION: [char; 7] = ['.', ',', ';', ':', '!', '?', '—'];

/// Punctuation after which a clause boundary opens.
pub const CLAUSE_PUNCTUATION: [&str; 4] = [",", ";", ":", "."];

/// Default coordinating conjunctions that open a new clause.
pub const DEFAULT_CONJUNCTIONS: [&str; 5] = ["and", "but", "or", "because", "so"];

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TextError {
    #[error("empty input")]
    EmptyInput,
}

/// A lowercase text unit: a word or a single punctuation mark.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(String);

impl Token {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_punctuation(&self) -> bool {
        let mut chars = self.0.chars();
        matches!((chars.next(), chars.next()), (Some(c), None) if is_punct(c))
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for Token {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn is_punct(c: char) -> bool {
    PUNCTUATION.contains(&c)
}

/// Tokenizes `text`, returning each token with its byte range in the original string.
pub fn tokenize_with_spans(text: &str) -> Vec<(Token, Range<usize>)> {
    let mut out = Vec::new();
    let mut word_start: Option<usize> = None;

    let flush = |out: &mut Vec<(Token, Range<usize>)>, start: &mut Option<usize>, end: usize| {
        if let Some(s) = start.take() {
            out.push((Token(text[s..end].to_lowercase()), s..end));
        }
    };

    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            flush(&mut out, &mut word_start, i);
        } else if is_punct(c) {
            flush(&mut out, &mut word_start, i);
            out.push((Token(c.to_string()), i..i + c.len_utf8()));
        } else if word_start.is_none() {
            word_start = Some(i);
        }
    }
    flush(&mut out, &mut word_start, text.len());
    out
}

/// Lowercases, splits on whitespace and detaches punctuation marks.
pub fn tokenize(text: &str) -> Vec<Token> {
    tokenize_with_spans(text).into_iter().map(|(t, _)| t).collect()
}

/// Joins tokens with single spaces.
pub fn join<T: AsRef<str>>(tokens: &[T]) -> String {
    let mut s = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        s.push_str(t.as_ref());
    }
    s
}

/// Canonical form used for uniqueness and table lookups: tokenize then join.
pub fn normalize(text: &str) -> String {
    join(&tokenize(text))
}

/// Token-to-id mapping with reserved `PAD` and `UNK` entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    id_of: BTreeMap<String, u32>,
    token_of: Vec<String>,
    min_count: usize,
}

impl Vocab {
    /// Builds a vocabulary; ids are assigned by descending frequency with a
    /// lexicographic tie-break.
    pub fn build<'a, I, S>(corpus: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let min_count = min_count.max(1);
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for seq in corpus {
            for tok in seq {
                *counts.entry(tok.as_ref()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_count && t != PAD && t != UNK)
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let token_of: Vec<String> = [PAD, UNK]
            .into_iter()
            .chain(ranked.into_iter().map(|(t, _)| t))
            .map(str::to_owned)
            .collect();
        Self::from_tokens_with_min_count(token_of, min_count)
    }

    fn from_tokens_with_min_count(token_of: Vec<String>, min_count: usize) -> Self {
        let id_of = token_of
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            id_of,
            token_of,
            min_count,
        }
    }

    /// Rebuilds a vocabulary from an ordered token list (as stored in a checkpoint).
    ///
    /// Returns `None` when the reserved entries are missing or tokens repeat.
    pub fn from_tokens(token_of: Vec<String>) -> Option<Self> {
        if token_of.len() < 2 || token_of[0] != PAD || token_of[1] != UNK {
            return None;
        }
        let unique: BTreeSet<&String> = token_of.iter().collect();
        if unique.len() != token_of.len() {
            return None;
        }
        Some(Self::from_tokens_with_min_count(token_of, 1))
    }

    pub fn len(&self) -> usize {
        self.token_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_of.is_empty()
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn id(&self, token: &str) -> u32 {
        self.id_of.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.token_of.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.token_of
    }

    /// Maps tokens to ids; unknown tokens become `UNK`.
    pub fn encode_ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }
}

/// A contiguous run of tokens within a message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clause {
    pub tokens: Vec<Token>,
    /// Half-open token index range into the parent sequence.
    pub source_span: (usize, usize),
}

impl Clause {
    pub fn text(&self) -> String {
        join(&self.tokens)
    }
}

/// Rule-based clause splitter: boundaries after `, ; : .` and before a
/// conjunction that is not the first token.
#[derive(Debug, Clone)]
pub struct ClauseSplitter {
    conjunctions: BTreeSet<String>,
}

impl Default for ClauseSplitter {
    fn default() -> Self {
        Self::new(DEFAULT_CONJUNCTIONS)
    }
}

impl ClauseSplitter {
    pub fn new<I, S>(conjunctions: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            conjunctions: conjunctions
                .into_iter()
                .map(|c| c.as_ref().to_lowercase())
                .collect(),
        }
    }

    pub fn conjunctions(&self) -> impl Iterator<Item = &str> {
        self.conjunctions.iter().map(String::as_str)
    }

    pub fn segment(&self, tokens: &[Token]) -> Result<Vec<Clause>, TextError> {
        if tokens.is_empty() {
            return Err(TextError::EmptyInput);
        }
        let mut clauses = Vec::new();
        let mut start = 0;
        for i in 0..tokens.len() {
            let before_conj = i > start && self.conjunctions.contains(tokens[i].as_str());
            if before_conj {
                clauses.push(make_clause(tokens, start, i));
                start = i;
            }
            if CLAUSE_PUNCTUATION.contains(&tokens[i].as_str()) {
                clauses.push(make_clause(tokens, start, i + 1));
                start = i + 1;
            }
        }
        if start < tokens.len() {
            clauses.push(make_clause(tokens, start, tokens.len()));
        }
        Ok(clauses)
    }
}

fn make_clause(tokens: &[Token], start: usize, end: usize) -> Clause {
    Clause {
        tokens: tokens[start..end].to_vec(),
        source_span: (start, end),
    }
}

/// Segments with the default conjunction set.
pub fn segment_clauses(tokens: &[Token]) -> Result<Vec<Clause>, TextError> {
    ClauseSplitter::default().segment(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strs(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(Token::as_str).collect()
    }

    fn toks(words: &[&str]) -> Vec<Token> {
        words.iter().map(|w| Token(w.to_string())).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(strs(&tokenize("Hello, World!")), ["hello", ",", "world", "!"]);
        assert!(tokenize("").is_empty());
        assert_eq!(strs(&tokenize("chai पसंद है")), ["chai", "पसंद", "है"]);
        assert_eq!(strs(&tokenize("wait—what?")), ["wait", "—", "what", "?"]);
    }

    #[test]
    fn spans_point_into_source() {
        let text = "  Hi there,friend ";
        for (tok, span) in tokenize_with_spans(text) {
            assert_eq!(text[span].to_lowercase(), tok.as_str());
        }
    }

    #[test]
    fn vocab_examples() {
        let corpus = [toks(&["a", "b"]), toks(&["a"])];
        let v = Vocab::build(corpus.iter().map(|s| s.as_slice()), 1);
        assert_eq!(v.tokens(), [PAD, UNK, "a", "b"]);
        assert_eq!(v.encode_ids(&["a", "zzz"]), [2, 1]);
        assert_eq!(v.encode_ids(&["a", "b", "a"]), [2, 3, 2]);
        assert!(v.encode_ids::<&str>(&[]).is_empty());

        let v2 = Vocab::build(corpus.iter().map(|s| s.as_slice()), 2);
        assert_eq!(v2.tokens(), [PAD, UNK, "a"]);
        assert_eq!(v2.id("b"), UNK_ID);

        let empty: [Vec<Token>; 0] = [];
        assert_eq!(Vocab::build(empty.iter().map(|s| s.as_slice()), 1).len(), 2);
    }

    #[test]
    fn vocab_from_tokens_rejects_bad_lists() {
        assert!(Vocab::from_tokens(vec!["x".into()]).is_none());
        assert!(Vocab::from_tokens(vec![PAD.into(), UNK.into(), "a".into(), "a".into()]).is_none());
        assert!(Vocab::from_tokens(vec![PAD.into(), UNK.into(), "a".into()]).is_some());
    }

    #[test]
    fn segment_examples() {
        let c = segment_clauses(&toks(&["i", "am", "tired", ",", "but", "i", "will", "come"])).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].text(), "i am tired ,");
        assert_eq!(c[1].text(), "but i will come");
        assert_eq!(c[1].source_span, (4, 8));

        let c = segment_clauses(&toks(&["hello"])).unwrap();
        assert_eq!(c.len(), 1);

        assert_eq!(segment_clauses(&[]), Err(TextError::EmptyInput));
    }

    #[test]
    fn leading_conjunction_does_not_split() {
        let c = segment_clauses(&toks(&["and", "then", "so", "what"])).unwrap();
        assert_eq!(c.iter().map(Clause::text).collect::<Vec<_>>(), ["and then", "so what"]);
    }

    #[test]
    fn custom_conjunctions() {
        let splitter = ClauseSplitter::new(["aur"]);
        let c = splitter.segment(&toks(&["chai", "aur", "samosa", "but", "no"])).unwrap();
        assert_eq!(c.iter().map(Clause::text).collect::<Vec<_>>(), ["chai", "aur samosa but no"]);
    }
}
