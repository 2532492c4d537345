//! Corpus, lexicon and score-file input/output.
//!
//! Every text format here is UTF-8 with LF line endings. Lines beginning
//! with `#` are comments and are skipped by the readers, which is how run
//! provenance lines travel inside data files.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::textfile::{data_lines, format_significant, read_to_string, write_string};

/// One normalized sentence keyed by a corpus-unique id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub id: String,
    pub text: String,
    /// Set when some token carries a digit. Numbers are not expanded, so
    /// such tokens usually end up out of vocabulary.
    pub has_digits: bool,
}

impl Utterance {
    /// Builds an utterance from raw text, applying [`normalize`].
    pub fn new(id: impl Into<String>, raw_text: &str) -> Self {
        let text = normalize(raw_text);
        let has_digits = text.chars().any(|c| c.is_numeric());
        Utterance {
            id: id.into(),
            text,
            has_digits,
        }
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.text.split(' ').filter(|w| !w.is_empty())
    }
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Uppercases, keeps apostrophes only between two alphanumeric characters,
/// turns every other non-alphanumeric character into a space and collapses
/// whitespace.
pub fn normalize(text: &str) -> String {
    let upper: Vec<char> = text.chars().flat_map(char::to_uppercase).collect();
    let mut out = String::with_capacity(upper.len());
    let mut pending_space = false;
    for (i, &c) in upper.iter().enumerate() {
        let keep = if c.is_alphanumeric() {
            Some(c)
        } else if is_apostrophe(c) {
            let before = i > 0 && upper[i - 1].is_alphanumeric();
            let after = upper.get(i + 1).is_some_and(|n| n.is_alphanumeric());
            (before && after).then_some('\'')
        } else {
            None
        };
        match keep {
            Some(c) => {
                if pending_space && !out.is_empty() {
                    out.push(' ');
                }
                pending_space = false;
                out.push(c);
            }
            None => pending_space = true,
        }
    }
    out
}

/// Reads an `id<TAB>text` corpus, normalizing every sentence.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Utterance>> {
    let path = path.as_ref();
    let content = read_to_string(path)?;
    parse_corpus(path, &content)
}

pub fn parse_corpus(path: &Path, content: &str) -> Result<Vec<Utterance>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line_no, line) in data_lines(content) {
        let (id, text) = split_id(path, line_no, line)?;
        if !seen.insert(id.to_string()) {
            return Err(Error::DuplicateId {
                path: path.to_path_buf(),
                id: id.to_string(),
                line: line_no,
            });
        }
        out.push(Utterance::new(id, text));
    }
    Ok(out)
}

/// Splits `id<TAB>rest`, rejecting missing tabs and empty ids.
pub(crate) fn split_id<'a>(
    path: &Path,
    line_no: usize,
    line: &'a str,
) -> Result<(&'a str, &'a str)> {
    match line.split_once('\t') {
        Some((id, rest)) if !id.is_empty() && !id.contains(char::is_whitespace) => Ok((id, rest)),
        Some(_) => Err(Error::parse(
            path,
            line_no,
            "empty or whitespace-bearing id",
        )),
        None => Err(Error::parse(path, line_no, "expected `id<TAB>...`")),
    }
}

/// Writes utterances back out in corpus format.
pub fn corpus_to_string<'a>(utterances: impl IntoIterator<Item = &'a Utterance>) -> String {
    let mut out = String::new();
    for u in utterances {
        let _ = writeln!(out, "{}\t{}", u.id, u.text);
    }
    out
}

/// Pronunciation lexicon with one canonical, stress-free pronunciation per word.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<String>>,
    alphabet: BTreeSet<String>,
}

impl Lexicon {
    /// Builds a lexicon from `(word, phonemes)` pairs. Later duplicates of a
    /// word are ignored.
    pub fn from_entries<W, P, S>(entries: impl IntoIterator<Item = (W, P)>) -> Result<Self>
    where
        W: Into<String>,
        P: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut lex = Lexicon::default();
        for (word, phonemes) in entries {
            let word = word.into();
            let phonemes: Vec<String> = phonemes.into_iter().map(Into::into).collect();
            if phonemes.is_empty() {
                return Err(Error::InvalidData(format!("word `{word}` has no phonemes")));
            }
            for p in &phonemes {
                check_phoneme(p).map_err(Error::InvalidData)?;
            }
            lex.insert(word, phonemes);
        }
        Ok(lex)
    }

    fn insert(&mut self, word: String, phonemes: Vec<String>) {
        if self.entries.contains_key(&word) {
            return;
        }
        self.alphabet.extend(phonemes.iter().cloned());
        self.entries.insert(word, phonemes);
    }

    pub fn get(&self, word: &str) -> Option<&[String]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Every phoneme symbol used by at least one entry.
    pub fn alphabet(&self) -> &BTreeSet<String> {
        &self.alphabet
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.entries.iter().map(|(w, p)| (w.as_str(), p.as_slice()))
    }
}

fn check_phoneme(p: &str) -> std::result::Result<(), String> {
    if p.is_empty()
        || p == crate::phonemize::UNK
        || p.contains(['+', '|', '<', '>'])
        || p.contains(char::is_whitespace)
    {
        Err(format!("invalid phoneme symbol `{p}`"))
    } else {
        Ok(())
    }
}

/// Reads a CMUdict-style lexicon.
///
/// `WORD(n)` variants are dropped, the first pronunciation of a word wins,
/// stress digits are stripped (`AH0` becomes `AH`) and words are uppercased
/// so they match [`normalize`]d text. `;;;` lines and anything after a
/// standalone `#` are comments.
pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon> {
    let path = path.as_ref();
    let content = read_to_string(path)?;
    parse_lexicon(path, &content)
}

pub fn parse_lexicon(path: &Path, content: &str) -> Result<Lexicon> {
    let mut lex = Lexicon::default();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        if line.starts_with(";;;") || line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace().take_while(|f| *f != "#");
        let word = fields.next().expect("non-blank line has a field");
        if is_variant(word) {
            continue;
        }
        let mut phonemes = Vec::new();
        for raw in fields {
            let p = raw.trim_end_matches(|c: char| c.is_ascii_digit());
            check_phoneme(p).map_err(|m| Error::parse(path, line_no, m))?;
            phonemes.push(p.to_string());
        }
        if phonemes.is_empty() {
            return Err(Error::parse(
                path,
                line_no,
                format!("`{word}` has no phonemes"),
            ));
        }
        lex.insert(word.to_uppercase(), phonemes);
    }
    Ok(lex)
}

fn is_variant(word: &str) -> bool {
    word.strip_suffix(')')
        .and_then(|w| w.rfind('(').map(|i| &w[i + 1..]))
        .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
}

/// A sentence's perplexity under a language model.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSentence {
    pub id: String,
    pub perplexity: f64,
    pub token_count: usize,
}

/// Significant digits used for every real number written to a TSV file.
pub const SCORE_DIGITS: usize = 9;

pub fn scores_to_string(scores: &[ScoredSentence]) -> String {
    let mut out = String::with_capacity(scores.len() * 32);
    for s in scores {
        let _ = writeln!(
            out,
            "{}\t{}\t{}",
            s.id,
            format_significant(s.perplexity, SCORE_DIGITS),
            s.token_count
        );
    }
    out
}

/// Writes `id<TAB>perplexity<TAB>token_count` lines.
pub fn write_scores(scores: &[ScoredSentence], path: impl AsRef<Path>) -> Result<()> {
    write_string(path.as_ref(), &scores_to_string(scores))
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<ScoredSentence>> {
    let path = path.as_ref();
    let content = read_to_string(path)?;
    parse_scores(path, &content)
}

pub fn parse_scores(path: &Path, content: &str) -> Result<Vec<ScoredSentence>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line_no, line) in data_lines(content) {
        let (id, rest) = split_id(path, line_no, line)?;
        let (ppl, count) = rest.split_once('\t').ok_or_else(|| {
            Error::parse(
                path,
                line_no,
                "expected `id<TAB>perplexity<TAB>token_count`",
            )
        })?;
        let perplexity: f64 = ppl
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("bad perplexity `{ppl}`")))?;
        if !(perplexity.is_finite() && perplexity > 0.0) {
            return Err(Error::parse(
                path,
                line_no,
                "perplexity must be positive and finite",
            ));
        }
        let token_count: usize = count
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::parse(path, line_no, format!("bad token count `{count}`")))?;
        if !seen.insert(id.to_string()) {
            return Err(Error::DuplicateId {
                path: path.to_path_buf(),
                id: id.to_string(),
                line: line_no,
            });
        }
        out.push(ScoredSentence {
            id: id.to_string(),
            perplexity,
            token_count,
        });
    }
    Ok(out)
}
