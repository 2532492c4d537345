//! Top-k selection by perplexity or centroid distance, and the three
//! stratified test sets.
//!
//! Every ranking is a total order: the score first, then ascending id.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::corpus::{split_id, ScoredSentence, Utterance, SCORE_DIGITS};
use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::textfile::{format_significant, read_to_string};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    LowestPerplexity,
    HighestPerplexity,
    Random,
    NearestCentroid,
}

impl Criterion {
    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::LowestPerplexity => "lowest-ppl",
            Criterion::HighestPerplexity => "highest-ppl",
            Criterion::Random => "random",
            Criterion::NearestCentroid => "nearest-centroid",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Criterion::LowestPerplexity,
            Criterion::HighestPerplexity,
            Criterion::Random,
            Criterion::NearestCentroid,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown criterion `{s}`")))
    }
}

/// Direction of a perplexity ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Lowest,
    Highest,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lowest" => Ok(Mode::Lowest),
            "highest" => Ok(Mode::Highest),
            _ => Err(Error::InvalidArgument(format!(
                "unknown mode `{s}` (expected lowest or highest)"
            ))),
        }
    }
}

/// An ordered, id-unique selection with the score that ranked each member.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionManifest {
    pub name: String,
    pub criterion: Criterion,
    pub seed: Option<u64>,
    pub members: Vec<(String, f64)>,
}

impl SelectionManifest {
    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.members.iter().map(|(id, _)| id.as_str())
    }

    pub fn header(&self) -> String {
        let seed = self
            .seed
            .map_or_else(|| "none".to_string(), |s| s.to_string());
        format!(
            "# selection name={} criterion={} k={} seed={seed}",
            self.name,
            self.criterion,
            self.members.len()
        )
    }

    pub fn to_tsv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for (id, score) in &self.members {
            let _ = writeln!(out, "{id}\t{}", format_significant(*score, SCORE_DIGITS));
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(path, &read_to_string(path)?)
    }

    pub fn parse(path: &Path, content: &str) -> Result<Self> {
        let mut lines = content.lines().enumerate().map(|(i, l)| (i + 1, l));
        let header = lines.next().map(|(_, l)| l).unwrap_or_default();
        let fields: HashMap<&str, &str> = header
            .strip_prefix("# selection ")
            .ok_or_else(|| Error::parse(path, 1, "expected `# selection ...` header"))?
            .split(' ')
            .filter_map(|f| f.split_once('='))
            .collect();
        let field = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::parse(path, 1, format!("missing `{k}`")))
        };
        let name = field("name")?.to_string();
        let criterion: Criterion = field("criterion")?
            .parse()
            .map_err(|e: Error| Error::parse(path, 1, e.to_string()))?;
        let k: usize = field("k")?
            .parse()
            .map_err(|_| Error::parse(path, 1, "bad k"))?;
        let seed = match field("seed")? {
            "none" => None,
            s => Some(s.parse().map_err(|_| Error::parse(path, 1, "bad seed"))?),
        };
        let mut members = Vec::new();
        for (line_no, line) in lines.filter(|(_, l)| !l.starts_with('#')) {
            let (id, score) = split_id(path, line_no, line)?;
            let score = score
                .parse()
                .map_err(|_| Error::parse(path, line_no, format!("bad score `{score}`")))?;
            members.push((id.to_string(), score));
        }
        if members.len() != k {
            return Err(Error::parse(
                path,
                1,
                format!("header says k={k} but found {} members", members.len()),
            ));
        }
        Ok(SelectionManifest {
            name,
            criterion,
            seed,
            members,
        })
    }
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::InvalidData(format!("duplicate id `{id}`")));
        }
    }
    Ok(())
}

/// Indices of the `k` smallest items under `cmp`, in order.
fn top_k_by<F>(n: usize, k: usize, cmp: F) -> Vec<usize>
where
    F: Fn(usize, usize) -> Ordering,
{
    let mut idx: Vec<usize> = (0..n).collect();
    if k == 0 {
        return Vec::new();
    }
    if k < n {
        idx.select_nth_unstable_by(k - 1, |&a, &b| cmp(a, b));
        idx.truncate(k);
    }
    idx.sort_unstable_by(|&a, &b| cmp(a, b));
    idx
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {n} available items"
        )));
    }
    if k == 0 {
        log::warn!("k = 0: the selection is empty");
    }
    Ok(())
}

/// The `k` sentences with the lowest (or highest) perplexity.
pub fn select_by_perplexity(
    scores: &[ScoredSentence],
    k: usize,
    mode: Mode,
) -> Result<SelectionManifest> {
    check_unique(scores.iter().map(|s| s.id.as_str()))?;
    check_k(k, scores.len())?;
    let order = |a: usize, b: usize| {
        let (sa, sb) = (&scores[a], &scores[b]);
        let by_score = match mode {
            Mode::Lowest => sa.perplexity.total_cmp(&sb.perplexity),
            Mode::Highest => sb.perplexity.total_cmp(&sa.perplexity),
        };
        by_score.then_with(|| sa.id.cmp(&sb.id))
    };
    let criterion = match mode {
        Mode::Lowest => Criterion::LowestPerplexity,
        Mode::Highest => Criterion::HighestPerplexity,
    };
    Ok(SelectionManifest {
        name: criterion.as_str().to_string(),
        criterion,
        seed: None,
        members: top_k_by(scores.len(), k, order)
            .into_iter()
            .map(|i| (scores[i].id.clone(), scores[i].perplexity))
            .collect(),
    })
}

/// The similar, dissimilar and random test sets.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSets {
    pub similar: SelectionManifest,
    pub different: SelectionManifest,
    pub random: SelectionManifest,
}

/// Builds T-SIM (lowest perplexity), T-DIFF (highest) and T-RAN (uniform
/// sample), each of `size` sentences.
///
/// T-RAN is drawn from the sentences in neither of the other two sets
/// unless `allow_overlap` is set, in which case it is drawn from all of
/// them. Candidates are put in id order before sampling, so the draw does
/// not depend on input order.
pub fn make_testsets(
    scores: &[ScoredSentence],
    size: usize,
    seed: u64,
    allow_overlap: bool,
) -> Result<TestSets> {
    if scores.len() < size.saturating_mul(3) {
        return Err(Error::InvalidArgument(format!(
            "{} scores cannot supply three disjoint sets of {size}",
            scores.len()
        )));
    }
    let similar = select_by_perplexity(scores, size, Mode::Lowest)?.named("T-SIM");
    let different = select_by_perplexity(scores, size, Mode::Highest)?.named("T-DIFF");

    let taken: HashSet<&str> = if allow_overlap {
        HashSet::new()
    } else {
        similar.ids().chain(different.ids()).collect()
    };
    let mut candidates: Vec<&ScoredSentence> = scores
        .iter()
        .filter(|s| !taken.contains(s.id.as_str()))
        .collect();
    candidates.sort_unstable_by(|a, b| a.id.cmp(&b.id));
    let mut rng = SplitMix64::new(seed);
    let members = rng
        .sample_indices(candidates.len(), size)
        .into_iter()
        .map(|i| (candidates[i].id.clone(), candidates[i].perplexity))
        .collect();
    let random = SelectionManifest {
        name: "T-RAN".into(),
        criterion: Criterion::Random,
        seed: Some(seed),
        members,
    };
    Ok(TestSets {
        similar,
        different,
        random,
    })
}

/// Per-dimension mean of a set of vectors.
pub fn centroid(embeddings: &EmbeddingSet) -> Result<Vec<f64>> {
    if embeddings.is_empty() {
        return Err(Error::InvalidArgument(
            "centroid of an empty embedding set".into(),
        ));
    }
    let mut sum = vec![0.0f64; embeddings.dim()];
    for (_, v) in embeddings.rows() {
        for (acc, &x) in sum.iter_mut().zip(v) {
            *acc += x as f64;
        }
    }
    let n = embeddings.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

fn squared_distance(v: &[f32], center: &[f64]) -> f64 {
    v.iter()
        .zip(center)
        .map(|(&x, &c)| (x as f64 - c) * (x as f64 - c))
        .sum()
}

/// The `k` pool vectors closest to `center` in Euclidean distance; each
/// member's score is its distance.
pub fn select_by_centroid(
    pool: &EmbeddingSet,
    center: &[f64],
    k: usize,
) -> Result<SelectionManifest> {
    if center.len() != pool.dim() {
        return Err(Error::InvalidArgument(format!(
            "centroid has dimension {}, pool has {}",
            center.len(),
            pool.dim()
        )));
    }
    check_k(k, pool.len())?;
    let rows = pool.rows();
    let dist: Vec<f64> = rows
        .par_iter()
        .map(|(_, v)| squared_distance(v, center))
        .collect();
    let order = |a: usize, b: usize| {
        dist[a]
            .total_cmp(&dist[b])
            .then_with(|| rows[a].0.cmp(&rows[b].0))
    };
    Ok(SelectionManifest {
        name: Criterion::NearestCentroid.as_str().to_string(),
        criterion: Criterion::NearestCentroid,
        seed: None,
        members: top_k_by(rows.len(), k, order)
            .into_iter()
            .map(|i| (rows[i].0.clone(), dist[i].sqrt()))
            .collect(),
    })
}

/// The utterances named by a manifest, in manifest order.
pub fn subset_corpus(manifest: &SelectionManifest, corpus: &[Utterance]) -> Result<Vec<Utterance>> {
    let by_id: HashMap<&str, &Utterance> = corpus.iter().map(|u| (u.id.as_str(), u)).collect();
    manifest
        .ids()
        .map(|id| {
            by_id.get(id).map(|u| (*u).clone()).ok_or_else(|| {
                Error::InvalidData(format!("selected id `{id}` is not in the corpus"))
            })
        })
        .collect()
}
