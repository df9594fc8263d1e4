//! Code-switched corpus synthesis by clause substitution.
//!
//! English message–reply pairs are segmented into clauses; each clause is
//! independently replaced by its second-language rendering from a static
//! phrase table with probability `p_switch`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textproc::{join, tokenize, tokenize_with_spans, Clause, ClauseSplitter, Token};

#[derive(Debug, Error)]
pub enum CodeSwitchError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed phrase table row at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("malformed corpus record at line {line}: {source}")]
    Record {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid switch config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    En,
    Cs,
    L2,
}

/// The seven Topical Chat sentiment labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sentiment {
    Angry,
    #[serde(rename = "Curious to Dive Deeper")]
    CuriousToDiveDeeper,
    #[serde(alias = "Disguised")]
    Disgusted,
    Fearful,
    Happy,
    Sad,
    Surprised,
}

impl Sentiment {
    pub const ALL: [Sentiment; 7] = [
        Sentiment::Angry,
        Sentiment::CuriousToDiveDeeper,
        Sentiment::Disgusted,
        Sentiment::Fearful,
        Sentiment::Happy,
        Sentiment::Sad,
        Sentiment::Surprised,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One message–reply example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MRPair {
    pub id: String,
    pub message: String,
    pub reply: String,
    pub lang: Lang,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message_translation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply_translation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentiment: Option<Sentiment>,
}

impl MRPair {
    pub fn en(id: impl Into<String>, message: impl Into<String>, reply: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            message: message.into(),
            reply: reply.into(),
            lang: Lang::En,
            message_translation: None,
            reply_translation: None,
            sentiment: None,
        }
    }
}

/// Offline bilingual mapping at clause and word granularity.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PhraseTable {
    pub clause_map: BTreeMap<String, String>,
    pub word_map: BTreeMap<String, String>,
}

/// Strips punctuation tokens and joins the rest; `None` if nothing remains.
fn table_key(text: &str) -> Option<String> {
    let words: Vec<Token> = tokenize(text)
        .into_iter()
        .filter(|t| !t.is_punctuation())
        .collect();
    (!words.is_empty()).then(|| join(&words))
}

impl PhraseTable {
    /// Inserts a mapping. Only one-token to one-token rows go to the word
    /// map, so word-level substitution never changes a token count.
    /// Returns `true` if an existing key was overridden.
    pub fn insert(&mut self, english: &str, second: &str) -> bool {
        let Some(key) = table_key(english) else {
            return false;
        };
        let value_tokens = tokenize(second);
        if value_tokens.is_empty() {
            return false;
        }
        let value = join(&value_tokens);
        let (map, other) = if key.contains(' ') || value_tokens.len() > 1 {
            (&mut self.clause_map, &mut self.word_map)
        } else {
            (&mut self.word_map, &mut self.clause_map)
        };
        let moved = other.remove(&key).is_some();
        map.insert(key, value).is_some() || moved
    }

    pub fn parse(text: &str) -> Result<(Self, usize), CodeSwitchError> {
        let mut table = Self::default();
        let mut overridden = 0;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 2 {
                return Err(CodeSwitchError::Parse {
                    line: line_no,
                    reason: format!("expected 2 tab-separated columns, found {}", cols.len()),
                });
            }
            if table_key(cols[0]).is_none() || tokenize(cols[1]).is_empty() {
                return Err(CodeSwitchError::Parse {
                    line: line_no,
                    reason: "empty key or value".into(),
                });
            }
            if table.insert(cols[0], cols[1]) {
                overridden += 1;
            }
        }
        Ok((table, overridden))
    }

    /// Loads a two-column TSV. Returns the table and the number of duplicate
    /// keys that were overridden (last row wins).
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, usize), CodeSwitchError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn is_empty(&self) -> bool {
        self.clause_map.is_empty() && self.word_map.is_empty()
    }
}

/// Convenience wrapper over [`PhraseTable::load`].
pub fn load_phrase_table(path: impl AsRef<Path>) -> Result<(PhraseTable, usize), CodeSwitchError> {
    PhraseTable::load(path)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchConfig {
    pub p_switch: f64,
    pub rng_seed: u64,
}

impl Default for SwitchConfig {
    fn default() -> Self {
        Self {
            p_switch: 0.3,
            rng_seed: 42,
        }
    }
}

impl SwitchConfig {
    pub fn validate(&self) -> Result<(), CodeSwitchError> {
        if !(0.0..=1.0).contains(&self.p_switch) {
            return Err(CodeSwitchError::Config(format!(
                "p_switch must lie in [0, 1], got {}",
                self.p_switch
            )));
        }
        Ok(())
    }
}

/// Substitutes one clause: whole-clause match first, word-by-word otherwise.
pub fn substitute_clause(clause: &Clause, table: &PhraseTable) -> (String, bool) {
    let n_trailing = clause
        .tokens
        .iter()
        .rev()
        .take_while(|t| t.is_punctuation())
        .count();
    let body = &clause.tokens[..clause.tokens.len() - n_trailing];
    let words: Vec<&Token> = body.iter().filter(|t| !t.is_punctuation()).collect();

    if !words.is_empty() {
        if let Some(mapped) = table.clause_map.get(&join(&words)) {
            let mut out = mapped.clone();
            for p in &clause.tokens[clause.tokens.len() - n_trailing..] {
                out.push(' ');
                out.push_str(p.as_str());
            }
            return (out, true);
        }
    }

    let mut switched = false;
    let rendered: Vec<&str> = clause
        .tokens
        .iter()
        .map(|t| match table.word_map.get(t.as_str()) {
            Some(w) if w != t.as_str() => {
                switched = true;
                w.as_str()
            }
            _ => t.as_str(),
        })
        .collect();
    (join(&rendered), switched)
}

/// Clause counters for a single text.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClauseCounts {
    pub clauses: usize,
    pub selected: usize,
    pub switched: usize,
}

impl std::ops::AddAssign for ClauseCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.clauses += rhs.clauses;
        self.selected += rhs.selected;
        self.switched += rhs.switched;
    }
}

/// Rewrites `text` clause by clause. `select` is consulted once per clause
/// in order. Unselected or unmatched clauses are copied verbatim from the
/// source, together with all inter-clause whitespace.
fn rewrite_text(
    text: &str,
    table: &PhraseTable,
    splitter: &ClauseSplitter,
    mut select: impl FnMut() -> bool,
) -> (String, ClauseCounts) {
    let spanned = tokenize_with_spans(text);
    let tokens: Vec<Token> = spanned.iter().map(|(t, _)| t.clone()).collect();
    let Ok(clauses) = splitter.segment(&tokens) else {
        return (text.to_owned(), ClauseCounts::default());
    };

    let mut counts = ClauseCounts::default();
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for clause in &clauses {
        counts.clauses += 1;
        let (first, last) = (clause.source_span.0, clause.source_span.1 - 1);
        let (start, end) = (spanned[first].1.start, spanned[last].1.end);
        out.push_str(&text[cursor..start]);
        let mut replaced = None;
        if select() {
            counts.selected += 1;
            let (new_text, switched) = substitute_clause(clause, table);
            if switched {
                counts.switched += 1;
                replaced = Some(new_text);
            }
        }
        match replaced {
            Some(s) => out.push_str(&s),
            None => out.push_str(&text[start..end]),
        }
        cursor = end;
    }
    out.push_str(&text[cursor..]);
    (out, counts)
}

/// Full second-language rendering: every clause substituted where the table allows.
pub fn render_second_language(text: &str, table: &PhraseTable, splitter: &ClauseSplitter) -> String {
    rewrite_text(text, table, splitter, || true).0
}

/// Produces the code-switched variant of an English pair.
///
/// One Bernoulli(`p_switch`) draw is taken per clause, message clauses
/// first, then reply clauses.
pub fn synthesize_pair<R: Rng>(
    pair: &MRPair,
    table: &PhraseTable,
    splitter: &ClauseSplitter,
    p_switch: f64,
    rng: &mut R,
) -> (MRPair, ClauseCounts) {
    debug_assert_eq!(pair.lang, Lang::En);
    let mut draw = || rng.gen::<f64>() < p_switch;
    let (message, mut counts) = rewrite_text(&pair.message, table, splitter, &mut draw);
    let (reply, reply_counts) = rewrite_text(&pair.reply, table, splitter, &mut draw);
    counts += reply_counts;
    let out = MRPair {
        id: format!("{}-cs", pair.id),
        message,
        reply,
        lang: Lang::Cs,
        message_translation: pair.message_translation.clone(),
        reply_translation: pair.reply_translation.clone(),
        sentiment: pair.sentiment,
    };
    (out, counts)
}

/// Aggregate counters for one synthesis run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthesisStats {
    pub input_pairs: usize,
    pub output_records: usize,
    /// Non-English input records copied through untouched.
    pub passed_through: usize,
    pub clauses: usize,
    pub clauses_selected: usize,
    pub clauses_switched: usize,
    /// `clauses_switched / clauses`, or 0 when there were no clauses.
    pub switch_rate: f64,
}

/// Streams pairs through the synthesizer, writing the EN original followed
/// by its CS variant as JSON lines. English records without translations get
/// a full phrase-table rendering attached.
pub fn synthesize_stream<I, W>(
    input: I,
    out: &mut W,
    table: &PhraseTable,
    splitter: &ClauseSplitter,
    cfg: SwitchConfig,
) -> Result<SynthesisStats, CodeSwitchError>
where
    I: IntoIterator<Item = Result<MRPair, CodeSwitchError>>,
    W: Write,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut stats = SynthesisStats::default();
    let mut counts = ClauseCounts::default();

    for pair in input {
        let mut pair = pair?;
        stats.input_pairs += 1;
        if pair.lang != Lang::En {
            write_record(out, &pair)?;
            stats.output_records += 1;
            stats.passed_through += 1;
            continue;
        }
        if pair.message_translation.is_none() {
            pair.message_translation = Some(render_second_language(&pair.message, table, splitter));
        }
        if pair.reply_translation.is_none() {
            pair.reply_translation = Some(render_second_language(&pair.reply, table, splitter));
        }
        let (cs, c) = synthesize_pair(&pair, table, splitter, cfg.p_switch, &mut rng);
        counts += c;
        write_record(out, &pair)?;
        write_record(out, &cs)?;
        stats.output_records += 2;
    }

    stats.clauses = counts.clauses;
    stats.clauses_selected = counts.selected;
    stats.clauses_switched = counts.switched;
    if counts.clauses > 0 {
        stats.switch_rate = counts.switched as f64 / counts.clauses as f64;
    }
    out.flush()?;
    Ok(stats)
}

/// File-to-file synthesis.
pub fn synthesize_corpus(
    input: impl AsRef<Path>,
    output: impl AsRef<Path>,
    table: &PhraseTable,
    splitter: &ClauseSplitter,
    cfg: SwitchConfig,
) -> Result<SynthesisStats, CodeSwitchError> {
    let reader = CorpusReader::open(input)?;
    let mut writer = io::BufWriter::new(File::create(output)?);
    synthesize_stream(reader, &mut writer, table, splitter, cfg)
}

pub fn write_record<W: Write>(out: &mut W, pair: &MRPair) -> io::Result<()> {
    serde_json::to_writer(&mut *out, pair)?;
    out.write_all(b"\n")
}

/// Line-by-line JSONL corpus reader. Blank lines are skipped.
pub struct CorpusReader<R> {
    lines: io::Lines<R>,
    line_no: usize,
}

impl CorpusReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CodeSwitchError> {
        Ok(Self::new(BufReader::new(File::open(path)?)))
    }
}

impl<R: BufRead> CorpusReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            lines: reader.lines(),
            line_no: 0,
        }
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<MRPair, CodeSwitchError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(
                serde_json::from_str(&line).map_err(|source| CodeSwitchError::Record {
                    line: self.line_no,
                    source,
                }),
            );
        }
    }
}

/// Reads a whole corpus file into memory.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<MRPair>, CodeSwitchError> {
    CorpusReader::open(path)?.collect()
}
