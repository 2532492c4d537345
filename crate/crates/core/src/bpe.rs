//! Byte-pair encoding over per-word phoneme sequences.
//!
//! Every word starts as its phoneme list with [`WORD_END`] glued to the
//! last phoneme, so `K AE T` begins as `K AE T</w>`. A merge joins two
//! adjacent symbols of the same word with [`JOINER`]; merges never cross
//! word boundaries. The vocabulary size of a table is the number of distinct
//! initial symbols plus the number of merges.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::split_id;
use crate::error::{Error, Result};
use crate::phonemize::{PhonemeSequence, PhonemizedUtterance};
use crate::textfile::{data_lines, read_to_string, write_string};

/// Marks the symbol that contains a word's final phoneme.
pub const WORD_END: &str = "</w>";
/// Separates the constituent phonemes of a merged symbol.
pub const JOINER: char = '+';

const HEADER_PREFIX: &str = "#phoneme-bpe v1";

/// Ordered merge rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeTable {
    merges: Vec<(String, String)>,
    alphabet_size: usize,
}

impl MergeTable {
    /// Validates and wraps a merge list. Each operand must be a base symbol
    /// (no joiner) or the product of an earlier merge, and no pair may repeat.
    pub fn new(merges: Vec<(String, String)>, alphabet_size: usize) -> Result<Self> {
        let mut produced = HashSet::new();
        let mut pairs = HashSet::new();
        for (i, (left, right)) in merges.iter().enumerate() {
            for operand in [left, right] {
                let ok = is_well_formed(operand)
                    && (!operand.contains(JOINER) || produced.contains(operand));
                if !ok {
                    return Err(Error::InvalidData(format!(
                        "merge {}: unknown operand `{operand}`",
                        i + 1
                    )));
                }
            }
            if left.ends_with(WORD_END) {
                return Err(Error::InvalidData(format!(
                    "merge {}: left operand ends a word",
                    i + 1
                )));
            }
            if !pairs.insert((left.as_str(), right.as_str())) {
                return Err(Error::InvalidData(format!(
                    "merge {}: duplicate pair {left} {right}",
                    i + 1
                )));
            }
            produced.insert(merged_symbol(left, right));
        }
        Ok(MergeTable {
            merges,
            alphabet_size,
        })
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn vocab_size(&self) -> usize {
        self.alphabet_size + self.merges.len()
    }

    /// A table holding only the first `n` merges.
    pub fn truncated(&self, n: usize) -> MergeTable {
        MergeTable {
            merges: self.merges[..n.min(self.merges.len())].to_vec(),
            alphabet_size: self.alphabet_size,
        }
    }

    /// Segments one word. Each merge is applied left to right over the
    /// whole word before moving on to the next one.
    pub fn encode(&self, word: &[String]) -> Vec<String> {
        let mut symbols = initial_symbols(word);
        for (left, right) in &self.merges {
            if symbols.len() < 2 {
                break;
            }
            apply_merge(&mut symbols, left, right, |l, r| merged_symbol(l, r));
        }
        symbols
    }

    pub fn to_file_string(&self) -> String {
        let mut out = format!(
            "{HEADER_PREFIX} vocab={} alphabet={}\n",
            self.vocab_size(),
            self.alphabet_size
        );
        for (l, r) in &self.merges {
            let _ = writeln!(out, "{l} {r}");
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_string(path.as_ref(), &self.to_file_string())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(path, &read_to_string(path)?)
    }

    pub fn parse(path: &Path, content: &str) -> Result<Self> {
        let header = content.lines().next().unwrap_or_default();
        let (vocab, alphabet) = parse_header(header).ok_or_else(|| {
            Error::parse(
                path,
                1,
                format!("expected `{HEADER_PREFIX} vocab=<n> alphabet=<m>` header"),
            )
        })?;
        let mut merges = Vec::new();
        for (line_no, line) in data_lines(content).filter(|(n, _)| *n > 1) {
            let (l, r) = line
                .split_once(' ')
                .filter(|(l, r)| !l.is_empty() && !r.is_empty() && !r.contains(' '))
                .ok_or_else(|| Error::parse(path, line_no, "expected `LEFT RIGHT`"))?;
            merges.push((l.to_string(), r.to_string()));
        }
        if alphabet + merges.len() != vocab {
            return Err(Error::parse(
                path,
                1,
                format!(
                    "header says vocab={vocab} but alphabet {alphabet} + {} merges",
                    merges.len()
                ),
            ));
        }
        MergeTable::new(merges, alphabet).map_err(|e| Error::parse(path, 1, e.to_string()))
    }
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let rest = line.strip_prefix(HEADER_PREFIX)?.strip_prefix(' ')?;
    let (v, a) = rest.split_once(' ')?;
    Some((
        v.strip_prefix("vocab=")?.parse().ok()?,
        a.strip_prefix("alphabet=")?.parse().ok()?,
    ))
}

fn merged_symbol(left: &str, right: &str) -> String {
    let mut s = String::with_capacity(left.len() + right.len() + 1);
    s.push_str(left);
    s.push(JOINER);
    s.push_str(right);
    s
}

fn apply_merge<S: PartialEq + Clone>(
    symbols: &mut Vec<S>,
    left: &S,
    right: &S,
    join: impl Fn(&S, &S) -> S,
) {
    let mut i = 0;
    let mut out = Vec::with_capacity(symbols.len());
    let mut changed = false;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == *left && symbols[i + 1] == *right {
            out.push(join(&symbols[i], &symbols[i + 1]));
            i += 2;
            changed = true;
        } else {
            out.push(symbols[i].clone());
            i += 1;
        }
    }
    if changed {
        *symbols = out;
    }
}

fn is_well_formed(symbol: &str) -> bool {
    let body = symbol.strip_suffix(WORD_END).unwrap_or(symbol);
    !body.is_empty()
        && !body.contains(char::is_whitespace)
        && body
            .split(JOINER)
            .all(|p| !p.is_empty() && !p.contains(['<', '>', '|']))
}

/// The starting segmentation of a word: its phonemes with the word-end
/// marker on the last one.
pub fn initial_symbols(word: &[String]) -> Vec<String> {
    let mut symbols = word.to_vec();
    if let Some(last) = symbols.last_mut() {
        last.push_str(WORD_END);
    }
    symbols
}

/// Recovers the phoneme list of one word from its subword tokens.
pub fn decode<S: AsRef<str>>(tokens: &[S]) -> Result<PhonemeSequence> {
    let mut out = Vec::new();
    for (i, token) in tokens.iter().enumerate() {
        let token = token.as_ref();
        let body = match token.strip_suffix(WORD_END) {
            Some(b) if i + 1 == tokens.len() => b,
            Some(_) => {
                return Err(Error::InvalidData(format!(
                    "word-end marker inside word at `{token}`"
                )))
            }
            None => token,
        };
        if !is_well_formed(token) {
            return Err(Error::InvalidData(format!(
                "malformed subword token `{token}`"
            )));
        }
        out.extend(body.split(JOINER).map(str::to_string));
    }
    Ok(out)
}

/// Splits a flat token stream into words at each word-end marker.
pub fn split_words<S: AsRef<str>>(tokens: &[S]) -> Vec<&[S]> {
    let mut words = Vec::new();
    let mut start = 0;
    for (i, t) in tokens.iter().enumerate() {
        if t.as_ref().ends_with(WORD_END) {
            words.push(&tokens[start..=i]);
            start = i + 1;
        }
    }
    if start < tokens.len() {
        words.push(&tokens[start..]);
    }
    words
}

/// Learns a merge table reaching `vocab_size` symbols if the data allows.
///
/// At each step the most frequent adjacent pair wins; equal counts go to the
/// lexicographically smallest `(left, right)`. Training stops early, with a
/// warning, once no pair occurs at least twice.
pub fn train(corpus: &[PhonemizedUtterance], vocab_size: usize) -> Result<MergeTable> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot train BPE on an empty corpus".into(),
        ));
    }

    let mut word_freq: HashMap<&[String], u64> = HashMap::new();
    for utt in corpus {
        for word in &utt.words {
            *word_freq.entry(word.as_slice()).or_default() += 1;
        }
    }

    let mut interner = Interner::default();
    let mut words: Vec<(Vec<u32>, u64)> = word_freq
        .into_iter()
        .filter(|(w, _)| !w.is_empty())
        .map(|(w, f)| {
            (
                initial_symbols(w)
                    .iter()
                    .map(|s| interner.intern(s))
                    .collect(),
                f,
            )
        })
        .collect();
    let alphabet_size = interner.symbols.len();
    if vocab_size <= alphabet_size {
        return Err(Error::InvalidArgument(format!(
            "vocab size {vocab_size} must exceed the initial alphabet size {alphabet_size}"
        )));
    }

    let mut merges = Vec::new();
    while alphabet_size + merges.len() < vocab_size {
        let counts = count_pairs(&words);
        let best = counts
            .into_iter()
            .filter(|&(_, c)| c >= 2)
            .max_by(|(a, ca), (b, cb)| {
                ca.cmp(cb).then_with(|| {
                    let ka = (interner.get(a.0), interner.get(a.1));
                    let kb = (interner.get(b.0), interner.get(b.1));
                    kb.cmp(&ka)
                })
            });
        let Some(((left, right), _)) = best else {
            log::warn!(
                "BPE stopped early: no pair occurs twice; vocabulary size {} of requested {vocab_size}",
                alphabet_size + merges.len()
            );
            break;
        };
        let joined = merged_symbol(interner.get(left), interner.get(right));
        let new_id = interner.intern(&joined);
        words
            .par_iter_mut()
            .for_each(|(syms, _)| apply_merge(syms, &left, &right, |_, _| new_id));
        merges.push((
            interner.get(left).to_string(),
            interner.get(right).to_string(),
        ));
    }
    MergeTable::new(merges, alphabet_size)
}

fn count_pairs(words: &[(Vec<u32>, u64)]) -> HashMap<(u32, u32), u64> {
    let mut counts = HashMap::new();
    for (syms, freq) in words {
        for pair in syms.windows(2) {
            *counts.entry((pair[0], pair[1])).or_default() += freq;
        }
    }
    counts
}

#[derive(Default)]
struct Interner {
    symbols: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        let id = self.symbols.len() as u32;
        self.symbols.push(s.to_string());
        self.ids.insert(s.to_string(), id);
        id
    }

    fn get(&self, id: u32) -> &str {
        &self.symbols[id as usize]
    }
}

/// An utterance as a flat sequence of subword tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedUtterance {
    pub id: String,
    pub tokens: Vec<String>,
}

/// Encodes a corpus, segmenting each distinct word once.
pub fn encode_corpus(corpus: &[PhonemizedUtterance], table: &MergeTable) -> Vec<EncodedUtterance> {
    let mut distinct: BTreeMap<&[String], Vec<String>> = BTreeMap::new();
    for utt in corpus {
        for w in &utt.words {
            distinct.entry(w.as_slice()).or_default();
        }
    }
    let keys: Vec<&[String]> = distinct.keys().copied().collect();
    let encoded: Vec<Vec<String>> = keys.par_iter().map(|w| table.encode(w)).collect();
    for (k, e) in keys.into_iter().zip(encoded) {
        distinct.insert(k, e);
    }
    corpus
        .iter()
        .map(|utt| EncodedUtterance {
            id: utt.id.clone(),
            tokens: utt
                .words
                .iter()
                .flat_map(|w| distinct[w.as_slice()].iter().cloned())
                .collect(),
        })
        .collect()
}

pub fn encoded_to_string(corpus: &[EncodedUtterance]) -> String {
    let mut out = String::new();
    for u in corpus {
        let _ = writeln!(out, "{}\t{}", u.id, u.tokens.join(" "));
    }
    out
}

pub fn load_encoded(path: impl AsRef<Path>) -> Result<Vec<EncodedUtterance>> {
    let path = path.as_ref();
    parse_encoded(path, &read_to_string(path)?)
}

pub fn parse_encoded(path: &Path, content: &str) -> Result<Vec<EncodedUtterance>> {
    let mut out = Vec::new();
    for (line_no, line) in data_lines(content) {
        let (id, rest) = split_id(path, line_no, line)?;
        let tokens: Vec<String> = rest.split(' ').map(str::to_string).collect();
        if tokens.iter().any(String::is_empty) {
            return Err(Error::parse(path, line_no, "empty token"));
        }
        out.push(EncodedUtterance {
            id: id.to_string(),
            tokens,
        });
    }
    Ok(out)
}
