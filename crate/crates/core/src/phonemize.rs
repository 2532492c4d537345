//! Lexicon lookup from normalized words to per-word phoneme sequences.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::corpus::{split_id, Lexicon, Utterance};
use crate::error::{Error, Result};
use crate::textfile::{data_lines, read_to_string};

/// Symbol standing in for a word missing from the lexicon.
pub const UNK: &str = "UNK";

/// Phoneme symbols of a single word, never empty.
pub type PhonemeSequence = Vec<String>;

/// What to do with words that are not in the lexicon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OovPolicy {
    /// Replace the word by the single symbol [`UNK`].
    #[default]
    Unk,
    /// Leave the word out.
    SkipWord,
    /// Leave the whole utterance out.
    DropUtterance,
}

impl OovPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            OovPolicy::Unk => "unk",
            OovPolicy::SkipWord => "skip-word",
            OovPolicy::DropUtterance => "drop-utterance",
        }
    }
}

impl fmt::Display for OovPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OovPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unk" => Ok(OovPolicy::Unk),
            "skip-word" => Ok(OovPolicy::SkipWord),
            "drop-utterance" => Ok(OovPolicy::DropUtterance),
            _ => Err(Error::InvalidArgument(format!(
                "unknown OOV policy `{s}` (expected unk, skip-word or drop-utterance)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemizedUtterance {
    pub id: String,
    pub words: Vec<PhonemeSequence>,
    pub oov_count: usize,
}

/// Result of phonemizing one utterance. Both variants carry the OOV words
/// in text order for the report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Phonemized {
    Kept {
        utterance: PhonemizedUtterance,
        oov_words: Vec<String>,
    },
    Dropped {
        id: String,
        oov_words: Vec<String>,
    },
}

impl Phonemized {
    pub fn id(&self) -> &str {
        match self {
            Phonemized::Kept { utterance, .. } => &utterance.id,
            Phonemized::Dropped { id, .. } => id,
        }
    }

    pub fn oov_words(&self) -> &[String] {
        match self {
            Phonemized::Kept { oov_words, .. } | Phonemized::Dropped { oov_words, .. } => oov_words,
        }
    }

    pub fn kept(self) -> Option<PhonemizedUtterance> {
        match self {
            Phonemized::Kept { utterance, .. } => Some(utterance),
            Phonemized::Dropped { .. } => None,
        }
    }
}

/// Maps every word of a normalized utterance to its pronunciation.
///
/// Utterances left without any word (empty text, or all words skipped)
/// are dropped regardless of policy.
pub fn phonemize(utterance: &Utterance, lexicon: &Lexicon, policy: OovPolicy) -> Phonemized {
    let mut words = Vec::new();
    let mut oov_words = Vec::new();
    for word in utterance.words() {
        match lexicon.get(word) {
            Some(phonemes) => words.push(phonemes.to_vec()),
            None => {
                oov_words.push(word.to_string());
                if policy == OovPolicy::Unk {
                    words.push(vec![UNK.to_string()]);
                }
            }
        }
    }
    let id = utterance.id.clone();
    if words.is_empty() || (policy == OovPolicy::DropUtterance && !oov_words.is_empty()) {
        return Phonemized::Dropped { id, oov_words };
    }
    Phonemized::Kept {
        utterance: PhonemizedUtterance {
            id,
            words,
            oov_count: oov_words.len(),
        },
        oov_words,
    }
}

/// Phonemizes a corpus in parallel; output order follows input order.
pub fn phonemize_corpus(
    utterances: &[Utterance],
    lexicon: &Lexicon,
    policy: OovPolicy,
) -> Vec<Phonemized> {
    utterances
        .par_iter()
        .map(|u| phonemize(u, lexicon, policy))
        .collect()
}

/// `id<TAB>oov_words` lines for every utterance that hit an OOV word or was
/// dropped.
pub fn oov_report_to_string(results: &[Phonemized]) -> String {
    let mut out = String::new();
    for r in results {
        if !r.oov_words().is_empty() || matches!(r, Phonemized::Dropped { .. }) {
            let _ = writeln!(out, "{}\t{}", r.id(), r.oov_words().join(" "));
        }
    }
    out
}

/// Serializes as `id<TAB>ph ph|ph ph ...`.
pub fn phonemized_to_string<'a>(
    utterances: impl IntoIterator<Item = &'a PhonemizedUtterance>,
) -> String {
    let mut out = String::new();
    for u in utterances {
        out.push_str(&u.id);
        out.push('\t');
        for (i, word) in u.words.iter().enumerate() {
            if i > 0 {
                out.push('|');
            }
            out.push_str(&word.join(" "));
        }
        out.push('\n');
    }
    out
}

pub fn load_phonemized(path: impl AsRef<Path>) -> Result<Vec<PhonemizedUtterance>> {
    let path = path.as_ref();
    let content = read_to_string(path)?;
    parse_phonemized(path, &content)
}

/// Parses the phonemized corpus format. `oov_count` is recovered as the
/// number of [`UNK`] words.
pub fn parse_phonemized(path: &Path, content: &str) -> Result<Vec<PhonemizedUtterance>> {
    let mut out = Vec::new();
    for (line_no, line) in data_lines(content) {
        let (id, rest) = split_id(path, line_no, line)?;
        let mut words = Vec::new();
        for word in rest.split('|') {
            let phonemes: Vec<String> = word.split(' ').map(str::to_string).collect();
            if phonemes.iter().any(|p| p.is_empty()) {
                return Err(Error::parse(path, line_no, "empty word or phoneme"));
            }
            words.push(phonemes);
        }
        let oov_count = words.iter().filter(|w| w.len() == 1 && w[0] == UNK).count();
        out.push(PhonemizedUtterance {
            id: id.to_string(),
            words,
            oov_count,
        });
    }
    Ok(out)
}
