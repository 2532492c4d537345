//! Bigram language model with interpolated absolute discounting.
//!
//! Each sentence is scored as `<s> t1 ... tn </s>`. With `c(h)` the number
//! of bigrams starting in `h`, `N1+(h)` the number of distinct words seen
//! after `h` and `d` the discount,
//!
//! ```text
//! p(w | h) = max(c(h, w) - d, 0) / c(h) + d * N1+(h) / c(h) * p_uni(w)
//! ```
//!
//! and `p(w | h) = p_uni(w)` when `c(h) = 0`. The backoff `p_uni` is an
//! add-one unigram over every vocabulary token except `<s>`, which is never
//! predicted:
//!
//! ```text
//! p_uni(w) = (c(w) + 1) / (N + V)
//! ```
//!
//! where `N` is the count of all predicted training tokens (`</s>`
//! included) and `V` the number of predictable tokens. All logarithms are
//! natural; perplexity is `exp(-mean ln p)` over the `n + 1` predicted
//! tokens.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::bpe::EncodedUtterance;
use crate::corpus::ScoredSentence;
use crate::error::{Error, Result};
use crate::textfile::{read_to_string, write_string};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

pub const DEFAULT_DISCOUNT: f64 = 0.75;

const HEADER_PREFIX: &str = "#bigram-lm";
const VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perplexity {
    pub value: f64,
    /// Predicted tokens, i.e. sentence length plus the end marker.
    pub token_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BigramModel {
    discount: f64,
    /// Sorted vocabulary; ids index into it.
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    unigram_counts: Vec<u64>,
    bigram_counts: HashMap<(u32, u32), u64>,
    context_totals: Vec<u64>,
    continuations: Vec<u64>,
    predicted_total: u64,
    bos: u32,
    eos: u32,
    unk: u32,
}

impl BigramModel {
    /// Counts unigrams and bigrams over `sentences`.
    pub fn train<I, T, S>(sentences: I, discount: f64) -> Result<Self>
    where
        I: IntoIterator<Item = T>,
        T: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut unigrams: BTreeMap<String, u64> = BTreeMap::new();
        let mut bigrams: BTreeMap<(String, String), u64> = BTreeMap::new();
        let mut sentence_count = 0usize;
        for sentence in sentences {
            sentence_count += 1;
            let mut prev = BOS.to_string();
            *unigrams.entry(prev.clone()).or_default() += 1;
            let tokens = sentence.into_iter().map(|t| t.as_ref().to_string());
            for tok in tokens.chain(std::iter::once(EOS.to_string())) {
                *unigrams.entry(tok.clone()).or_default() += 1;
                *bigrams.entry((prev, tok.clone())).or_default() += 1;
                prev = tok;
            }
        }
        if sentence_count == 0 {
            return Err(Error::InvalidArgument(
                "cannot train a language model on an empty corpus".into(),
            ));
        }
        if unigrams[BOS] != sentence_count as u64 || unigrams[EOS] != sentence_count as u64 {
            return Err(Error::InvalidData(format!(
                "training data contains reserved token {BOS} or {EOS}"
            )));
        }
        Self::from_counts(unigrams, bigrams, discount)
    }

    /// A model that has seen no data: every context backs off to a uniform
    /// unigram over `tokens` plus `</s>` and `<unk>`.
    pub fn untrained<S: AsRef<str>>(
        tokens: impl IntoIterator<Item = S>,
        discount: f64,
    ) -> Result<Self> {
        let unigrams = tokens
            .into_iter()
            .map(|t| (t.as_ref().to_string(), 0))
            .collect();
        Self::from_counts(unigrams, BTreeMap::new(), discount)
    }

    /// Builds a model from raw counts, checking that they are consistent.
    pub fn from_counts(
        mut unigrams: BTreeMap<String, u64>,
        bigrams: BTreeMap<(String, String), u64>,
        discount: f64,
    ) -> Result<Self> {
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "discount {discount} must lie in (0, 1)"
            )));
        }
        for reserved in [BOS, EOS, UNK] {
            unigrams.entry(reserved.to_string()).or_default();
        }
        let tokens: Vec<String> = unigrams.keys().cloned().collect();
        let ids: HashMap<String, u32> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let unigram_counts: Vec<u64> = unigrams.values().copied().collect();
        let (bos, eos, unk) = (ids[BOS], ids[EOS], ids[UNK]);

        let mut context_totals = vec![0u64; tokens.len()];
        let mut continuations = vec![0u64; tokens.len()];
        let mut bigram_counts = HashMap::with_capacity(bigrams.len());
        for ((h, w), count) in bigrams {
            let (Some(&hi), Some(&wi)) = (ids.get(&h), ids.get(&w)) else {
                return Err(Error::InvalidData(format!(
                    "bigram ({h}, {w}) uses a token outside the vocabulary"
                )));
            };
            if wi == bos || hi == eos {
                return Err(Error::InvalidData(format!("impossible bigram ({h}, {w})")));
            }
            if count == 0 {
                continue;
            }
            context_totals[hi as usize] += count;
            continuations[hi as usize] += 1;
            bigram_counts.insert((hi, wi), count);
        }
        for (i, tok) in tokens.iter().enumerate() {
            if i as u32 != eos && context_totals[i] != unigram_counts[i] {
                return Err(Error::InvalidData(format!(
                    "bigrams after `{tok}` sum to {} but its unigram count is {}",
                    context_totals[i], unigram_counts[i]
                )));
            }
        }
        let predicted_total = unigram_counts
            .iter()
            .enumerate()
            .filter(|&(i, _)| i as u32 != bos)
            .map(|(_, &c)| c)
            .sum();

        Ok(BigramModel {
            discount,
            tokens,
            ids,
            unigram_counts,
            bigram_counts,
            context_totals,
            continuations,
            predicted_total,
            bos,
            eos,
            unk,
        })
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// All tokens, `<s>`, `</s>` and `<unk>` included, in byte order.
    pub fn vocab(&self) -> &[String] {
        &self.tokens
    }

    /// Number of tokens the model can predict (the vocabulary minus `<s>`).
    pub fn support_size(&self) -> usize {
        self.tokens.len() - 1
    }

    /// Predicted training tokens, `</s>` included.
    pub fn total_tokens(&self) -> u64 {
        self.predicted_total
    }

    pub fn unigram_count(&self, token: &str) -> u64 {
        self.ids
            .get(token)
            .map_or(0, |&i| self.unigram_counts[i as usize])
    }

    pub fn bigram_count(&self, context: &str, word: &str) -> u64 {
        match (self.ids.get(context), self.ids.get(word)) {
            (Some(&h), Some(&w)) => self.bigram_counts.get(&(h, w)).copied().unwrap_or(0),
            _ => 0,
        }
    }

    fn id_or_unk(&self, token: &str) -> u32 {
        match self.ids.get(token) {
            Some(&i) if i != self.bos && i != self.eos => i,
            _ => self.unk,
        }
    }

    fn unigram_prob_id(&self, w: u32) -> f64 {
        if w == self.bos {
            return 0.0;
        }
        (self.unigram_counts[w as usize] + 1) as f64
            / (self.predicted_total + self.support_size() as u64) as f64
    }

    fn prob_id(&self, h: u32, w: u32) -> f64 {
        let backoff = self.unigram_prob_id(w);
        let total = self.context_totals[h as usize];
        if total == 0 || w == self.bos {
            return backoff;
        }
        let total = total as f64;
        let seen = self.bigram_counts.get(&(h, w)).copied().unwrap_or(0) as f64;
        let gamma = self.discount * self.continuations[h as usize] as f64 / total;
        (seen - self.discount).max(0.0) / total + gamma * backoff
    }

    /// Backoff probability of `word`; unknown words count as `<unk>`.
    pub fn unigram_prob(&self, word: &str) -> f64 {
        match self.ids.get(word) {
            Some(&i) => self.unigram_prob_id(i),
            None => self.unigram_prob_id(self.unk),
        }
    }

    /// `p(word | context)`; tokens outside the vocabulary count as `<unk>`.
    pub fn prob(&self, context: &str, word: &str) -> f64 {
        let h = self.ids.get(context).copied().unwrap_or(self.unk);
        let w = self.ids.get(word).copied().unwrap_or(self.unk);
        self.prob_id(h, w)
    }

    /// Perplexity of one sentence (without `<s>`/`</s>`).
    pub fn perplexity<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Perplexity> {
        if tokens.is_empty() {
            return Err(Error::InvalidArgument(
                "cannot score an empty token sequence".into(),
            ));
        }
        let mut prev = self.bos;
        let mut log_sum = 0.0;
        for tok in tokens {
            let cur = self.id_or_unk(tok.as_ref());
            log_sum += self.prob_id(prev, cur).ln();
            prev = cur;
        }
        log_sum += self.prob_id(prev, self.eos).ln();
        let token_count = tokens.len() + 1;
        Ok(Perplexity {
            value: (-log_sum / token_count as f64).exp(),
            token_count,
        })
    }

    pub fn to_file_string(&self) -> String {
        let mut out = format!(
            "{HEADER_PREFIX} {VERSION} discount={} vocab={}\n",
            self.discount,
            self.tokens.len()
        );
        out.push_str("[unigrams]\n");
        for (tok, count) in self.tokens.iter().zip(&self.unigram_counts) {
            let _ = writeln!(out, "{tok}\t{count}");
        }
        out.push_str("[bigrams]\n");
        let mut bigrams: Vec<_> = self.bigram_counts.iter().collect();
        // ids follow byte order, so sorting ids sorts the strings
        bigrams.sort_unstable();
        for (&(h, w), count) in bigrams {
            let _ = writeln!(
                out,
                "{}\t{}\t{count}",
                self.tokens[h as usize], self.tokens[w as usize]
            );
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
        #[derive(PartialEq)]
        enum Section {
            Preamble,
            Unigrams,
            Bigrams,
        }
        let mut lines = content.lines().enumerate().map(|(i, l)| (i + 1, l));
        let header = lines.next().map(|(_, l)| l).unwrap_or_default();
        let (discount, vocab_size) = parse_header(path, header)?;

        let mut section = Section::Preamble;
        let mut unigrams = BTreeMap::new();
        let mut bigrams = BTreeMap::new();
        for (line_no, line) in lines {
            if line.starts_with('#') {
                continue;
            }
            match line {
                "[unigrams]" if section == Section::Preamble => section = Section::Unigrams,
                "[bigrams]" if section == Section::Unigrams => section = Section::Bigrams,
                _ => {
                    let fields: Vec<&str> = line.split('\t').collect();
                    let count = |s: &str| {
                        s.parse::<u64>()
                            .map_err(|_| Error::parse(path, line_no, format!("bad count `{s}`")))
                    };
                    match (&section, fields.as_slice()) {
                        (Section::Unigrams, [tok, c]) if !tok.is_empty() => {
                            if unigrams.insert(tok.to_string(), count(c)?).is_some() {
                                return Err(Error::parse(
                                    path,
                                    line_no,
                                    format!("duplicate unigram `{tok}`"),
                                ));
                            }
                        }
                        (Section::Bigrams, [h, w, c]) if !h.is_empty() && !w.is_empty() => {
                            if bigrams
                                .insert((h.to_string(), w.to_string()), count(c)?)
                                .is_some()
                            {
                                return Err(Error::parse(
                                    path,
                                    line_no,
                                    format!("duplicate bigram `{h} {w}`"),
                                ));
                            }
                        }
                        _ => return Err(Error::parse(path, line_no, "unexpected line")),
                    }
                }
            }
        }
        if section != Section::Bigrams {
            return Err(Error::parse(
                path,
                1,
                "missing [unigrams] or [bigrams] section",
            ));
        }
        if unigrams.len() != vocab_size
            || ![BOS, EOS, UNK].iter().all(|t| unigrams.contains_key(*t))
        {
            return Err(Error::parse(
                path,
                1,
                format!("vocabulary does not match header vocab={vocab_size}"),
            ));
        }
        Self::from_counts(unigrams, bigrams, discount)
            .map_err(|e| Error::parse(path, 1, e.to_string()))
    }
}

fn parse_header(path: &Path, line: &str) -> Result<(f64, usize)> {
    let bad = |m: &str| Error::parse(path, 1, m.to_string());
    let mut fields = line.split(' ');
    if fields.next() != Some(HEADER_PREFIX) {
        return Err(bad("not a bigram model file"));
    }
    match fields.next() {
        Some(VERSION) => {}
        Some(v) => return Err(bad(&format!("unsupported model version `{v}`"))),
        None => return Err(bad("missing version")),
    }
    let discount = fields
        .next()
        .and_then(|f| f.strip_prefix("discount="))
        .and_then(|d| d.parse().ok())
        .ok_or_else(|| bad("missing discount"))?;
    let vocab = fields
        .next()
        .and_then(|f| f.strip_prefix("vocab="))
        .and_then(|d| d.parse().ok())
        .ok_or_else(|| bad("missing vocab"))?;
    if fields.next().is_some() {
        return Err(bad("trailing header fields"));
    }
    Ok((discount, vocab))
}

/// Scores every utterance in parallel, keeping input order.
pub fn score_corpus(
    model: &BigramModel,
    corpus: &[EncodedUtterance],
) -> Result<Vec<ScoredSentence>> {
    corpus
        .par_iter()
        .map(|u| {
            let ppl = model
                .perplexity(&u.tokens)
                .map_err(|e| Error::InvalidData(format!("utterance `{}`: {e}", u.id)))?;
            Ok(ScoredSentence {
                id: u.id.clone(),
                perplexity: ppl.value,
                token_count: ppl.token_count,
            })
        })
        .collect()
}
