//! Acceptance checks, one line each. Run with
//! `cargo test -p phonsel-cli --test acceptance`.

mod common;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use phonsel::bpe::{self, EncodedUtterance, MergeTable};
use phonsel::corpus::{load_lexicon, Lexicon, ScoredSentence, Utterance};
use phonsel::embedding::EmbeddingSet;
use phonsel::lm::{score_corpus, BigramModel, BOS, EOS, UNK};
use phonsel::phonemize::{phonemize, OovPolicy, PhonemizedUtterance};
use phonsel::rng::SplitMix64;
use phonsel::select::{make_testsets, select_by_centroid, select_by_perplexity, Mode};

type Outcome = Result<String, String>;
type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> Result<(), String> {
    ensure(elapsed <= Duration::from_secs(limit_secs), || {
        format!("took {:.2}s, limit {limit_secs}s", elapsed.as_secs_f64())
    })
}

fn toy_corpus(rng: &mut SplitMix64, vocab: u64, sentences: usize) -> Vec<Vec<String>> {
    (0..sentences)
        .map(|_| {
            let len = 1 + rng.below(10) as usize;
            (0..len).map(|_| format!("t{}", rng.below(vocab))).collect()
        })
        .collect()
}

fn lm_normalization() -> Outcome {
    let start = Instant::now();
    let mut rng = SplitMix64::new(101);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let vocab = 1 + rng.below(30);
        let n = 1 + rng.below(40) as usize;
        let d = 0.05 + 0.9 * rng.next_f64();
        let model =
            BigramModel::train(toy_corpus(&mut rng, vocab, n), d).map_err(|e| e.to_string())?;
        let predictable: Vec<&String> = model.vocab().iter().filter(|t| *t != BOS).collect();
        for h in model.vocab() {
            let sum: f64 = predictable.iter().map(|w| model.prob(h, w)).sum();
            worst = worst.max((sum - 1.0).abs());
        }
    }
    ensure(worst <= 1e-9, || {
        format!("distribution sums off by {worst:e}")
    })?;
    within(start.elapsed(), 5)?;
    Ok(format!("100 models, max |sum-1| = {worst:.1e}"))
}

/// Textbook interpolated absolute discounting, counted from scratch.
struct Oracle {
    uni: HashMap<String, f64>,
    bi: HashMap<(String, String), f64>,
    support: f64,
    d: f64,
}

impl Oracle {
    fn new(corpus: &[Vec<String>], d: f64) -> Self {
        let mut uni = HashMap::new();
        let mut bi = HashMap::new();
        for s in corpus {
            let seq: Vec<String> = std::iter::once(BOS.to_string())
                .chain(s.iter().cloned())
                .chain(std::iter::once(EOS.to_string()))
                .collect();
            for t in &seq {
                *uni.entry(t.clone()).or_insert(0.0) += 1.0;
            }
            for pair in seq.windows(2) {
                *bi.entry((pair[0].clone(), pair[1].clone())).or_insert(0.0) += 1.0;
            }
        }
        // every seen token except <s>, plus <unk>
        let support = uni.len() as f64;
        Oracle {
            uni,
            bi,
            support,
            d,
        }
    }

    fn p_uni(&self, w: &str) -> f64 {
        let n: f64 = self
            .uni
            .iter()
            .filter(|(t, _)| *t != BOS)
            .map(|(_, c)| c)
            .sum();
        (self.uni.get(w).unwrap_or(&0.0) + 1.0) / (n + self.support)
    }

    fn p(&self, h: &str, w: &str) -> f64 {
        let (mut total, mut types) = (0.0, 0.0);
        for ((a, _), c) in &self.bi {
            if a == h {
                total += c;
                types += 1.0;
            }
        }
        if total == 0.0 {
            return self.p_uni(w);
        }
        let c = self.bi.get(&(h.to_string(), w.to_string())).unwrap_or(&0.0);
        (c - self.d).max(0.0) / total + self.d * types / total * self.p_uni(w)
    }

    fn perplexity(&self, s: &[String]) -> f64 {
        let mut seq = vec![BOS.to_string()];
        seq.extend(s.iter().map(|t| {
            if self.uni.contains_key(t) {
                t.clone()
            } else {
                UNK.to_string()
            }
        }));
        seq.push(EOS.to_string());
        let log_sum: f64 = seq.windows(2).map(|w| self.p(&w[0], &w[1]).ln()).sum();
        (-log_sum / (seq.len() - 1) as f64).exp()
    }
}

fn perplexity_oracle() -> Outcome {
    let mut rng = SplitMix64::new(202);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (vocab, n) = (2 + rng.below(25), 5 + rng.below(30) as usize);
        let corpus = toy_corpus(&mut rng, vocab, n);
        let d = 0.1 + 0.8 * rng.next_f64();
        let model = BigramModel::train(&corpus, d).map_err(|e| e.to_string())?;
        let oracle = Oracle::new(&corpus, d);
        // held-out sentences reach unseen tokens and unseen bigrams
        let probes = toy_corpus(&mut rng, 40, 10);
        for s in corpus.iter().chain(&probes) {
            let got = model.perplexity(s).map_err(|e| e.to_string())?.value;
            let want = oracle.perplexity(s);
            worst = worst.max(((got - want) / want).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("relative error {worst:e}"))?;
    Ok(format!("50 models, max relative error {worst:.1e}"))
}

fn uniform_baseline() -> Outcome {
    let mut rng = SplitMix64::new(303);
    let mut worst = 0.0f64;
    for n in [1usize, 5, 40, 200] {
        let tokens: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        let model = BigramModel::untrained(&tokens, 0.75).map_err(|e| e.to_string())?;
        let v = model.support_size() as f64;
        ensure(model.support_size() == n + 2, || {
            format!("support {} for {n} tokens", model.support_size())
        })?;
        for s in toy_corpus(&mut rng, n as u64 + 5, 20) {
            let s: Vec<String> = s.into_iter().map(|t| t.replacen('t', "x", 1)).collect();
            let ppl = model.perplexity(&s).map_err(|e| e.to_string())?.value;
            worst = worst.max((ppl - v).abs());
        }
    }
    ensure(worst <= 1e-9, || {
        format!("perplexity differs from V by {worst:e}")
    })?;
    Ok(format!("max |ppl - V| = {worst:.1e}"))
}

fn lexicon() -> Result<Lexicon, String> {
    load_lexicon(common::lexicon_fixture()).map_err(|e| e.to_string())
}

/// Zipf-weighted sentences over lexicon words.
fn zipf_corpus(lex: &Lexicon, sentences: usize, seed: u64) -> Vec<PhonemizedUtterance> {
    let mut rng = SplitMix64::new(seed);
    let mut words: Vec<&str> = lex.iter().map(|(w, _)| w).collect();
    rng.shuffle(&mut words);
    words.truncate(3000);
    let mut cumulative = Vec::with_capacity(words.len());
    let mut acc = 0.0;
    for rank in 0..words.len() {
        acc += 1.0 / (rank + 1) as f64;
        cumulative.push(acc);
    }
    (0..sentences)
        .map(|i| {
            let len = 4 + rng.below(12) as usize;
            let text: Vec<&str> = (0..len)
                .map(|_| {
                    let x = rng.next_f64() * acc;
                    words[cumulative.partition_point(|&c| c < x).min(words.len() - 1)]
                })
                .collect();
            let u = Utterance::new(format!("z{i:05}"), &text.join(" "));
            phonemize(&u, lex, OovPolicy::Unk).kept().unwrap()
        })
        .collect()
}

fn bpe_roundtrip(lex: &Lexicon, table: &MergeTable) -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    for (word, phonemes) in lex.iter() {
        let tokens = table.encode(phonemes);
        let back = bpe::decode(&tokens).map_err(|e| format!("{word}: {e}"))?;
        ensure(back == phonemes, || format!("{word} decodes to {back:?}"))?;
        checked += 1;
    }
    ensure(checked >= 10_000, || {
        format!("only {checked} lexicon entries")
    })?;
    within(start.elapsed(), 10)?;
    Ok(format!(
        "{checked} entries in {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

fn bpe_determinism(corpus: &[PhonemizedUtterance], table: &MergeTable) -> Outcome {
    let mut shuffled = corpus.to_vec();
    SplitMix64::new(404).shuffle(&mut shuffled);
    let again = bpe::train(&shuffled, table.vocab_size()).map_err(|e| e.to_string())?;
    let (a, b) = (table.to_file_string(), again.to_file_string());
    ensure(a == b, || "merges differ after shuffling the corpus".into())?;
    Ok(format!("{} byte merges file identical", a.len()))
}

fn vocab_target(corpus: &[PhonemizedUtterance], table: &MergeTable) -> Outcome {
    ensure(corpus.len() >= 5000, || {
        format!("{} sentences", corpus.len())
    })?;
    ensure(table.vocab_size() == 200, || {
        format!("vocab {}", table.vocab_size())
    })?;
    let header = table
        .to_file_string()
        .lines()
        .next()
        .unwrap_or_default()
        .to_string();
    ensure(header.contains("vocab=200"), || {
        format!("header `{header}`")
    })?;
    let distinct: HashSet<String> = bpe::encode_corpus(corpus, table)
        .into_iter()
        .flat_map(|u| u.tokens)
        .collect();
    ensure(distinct.len() <= 200, || {
        format!("{} distinct tokens", distinct.len())
    })?;
    Ok(format!(
        "{} sentences, {} symbols + {} merges, {} tokens in use",
        corpus.len(),
        table.alphabet_size(),
        table.merges().len(),
        distinct.len()
    ))
}

fn reference_rank(mut items: Vec<(String, f64)>, k: usize) -> Vec<String> {
    // insertion sort on (key, id)
    for i in 1..items.len() {
        let mut j = i;
        while j > 0
            && (items[j - 1].1 > items[j].1
                || (items[j - 1].1 == items[j].1 && items[j - 1].0 > items[j].0))
        {
            items.swap(j - 1, j);
            j -= 1;
        }
    }
    items.into_iter().take(k).map(|(id, _)| id).collect()
}

fn selection_oracle() -> Outcome {
    let mut rng = SplitMix64::new(505);
    for case in 0..200 {
        let n = 1 + rng.below(150) as usize;
        let k = rng.below(n as u64 + 1) as usize;
        // few distinct values, so ties are common
        let levels = 1 + rng.below(10);
        let mut ids: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut ids);
        let scores: Vec<ScoredSentence> = ids
            .iter()
            .map(|i| ScoredSentence {
                id: format!("s{i:03}"),
                perplexity: 1.0 + rng.below(levels) as f64 * 0.5,
                token_count: 2,
            })
            .collect();
        let items: Vec<(String, f64)> = scores
            .iter()
            .map(|s| (s.id.clone(), s.perplexity))
            .collect();
        let got: Vec<String> = select_by_perplexity(&scores, k, Mode::Lowest)
            .map_err(|e| e.to_string())?
            .ids()
            .map(String::from)
            .collect();
        ensure(got == reference_rank(items.clone(), k), || {
            format!("case {case}: lowest-ppl differs")
        })?;
        let negated = items.iter().map(|(id, p)| (id.clone(), -p)).collect();
        let got: Vec<String> = select_by_perplexity(&scores, k, Mode::Highest)
            .map_err(|e| e.to_string())?
            .ids()
            .map(String::from)
            .collect();
        ensure(got == reference_rank(negated, k), || {
            format!("case {case}: highest-ppl differs")
        })?;

        let dim = 1 + rng.below(6) as usize;
        let mut pool = EmbeddingSet::new(dim).unwrap();
        for i in &ids {
            pool.push(
                format!("e{i:03}"),
                (0..dim).map(|_| rng.below(3) as f32 - 1.0).collect(),
            )
            .unwrap();
        }
        let center: Vec<f64> = (0..dim).map(|_| rng.below(3) as f64 - 1.0).collect();
        let dist: Vec<(String, f64)> = pool
            .rows()
            .iter()
            .map(|(id, v)| {
                (
                    id.clone(),
                    v.iter()
                        .zip(&center)
                        .map(|(&x, c)| (x as f64 - c).powi(2))
                        .sum::<f64>()
                        .sqrt(),
                )
            })
            .collect();
        let got = select_by_centroid(&pool, &center, k).map_err(|e| e.to_string())?;
        let got_ids: Vec<String> = got.ids().map(String::from).collect();
        ensure(got_ids == reference_rank(dist.clone(), k), || {
            format!("case {case}: nearest-centroid differs")
        })?;
        let by_id: HashMap<&str, f64> = dist.iter().map(|(i, d)| (i.as_str(), *d)).collect();
        for (id, d) in &got.members {
            ensure(*d == by_id[id.as_str()], || {
                format!("case {case}: distance of {id}")
            })?;
        }
    }
    Ok("200 instances, both routes".into())
}

fn testset_structure() -> Outcome {
    let mut rng = SplitMix64::new(606);
    let scores: Vec<ScoredSentence> = (0..50_000)
        .map(|i| ScoredSentence {
            id: format!("u{i:05}"),
            perplexity: 1.0 + rng.below(5000) as f64 / 16.0,
            token_count: 5,
        })
        .collect();
    let sets = make_testsets(&scores, 60, 42, false).map_err(|e| e.to_string())?;
    let ppl: HashMap<&str, f64> = scores
        .iter()
        .map(|s| (s.id.as_str(), s.perplexity))
        .collect();
    let mut seen = HashSet::new();
    for set in [&sets.similar, &sets.different, &sets.random] {
        ensure(set.len() == 60, || {
            format!("{} has {} members", set.name, set.len())
        })?;
        for id in set.ids() {
            ensure(seen.insert(id), || format!("{id} appears twice"))?;
            ensure(ppl.contains_key(id), || {
                format!("{id} is not a scored sentence")
            })?;
        }
    }
    let max_sim = sets.similar.ids().map(|i| ppl[i]).fold(f64::MIN, f64::max);
    let min_diff = sets
        .different
        .ids()
        .map(|i| ppl[i])
        .fold(f64::MAX, f64::min);
    ensure(max_sim <= min_diff, || {
        format!("max T-SIM {max_sim} > min T-DIFF {min_diff}")
    })?;
    let again = make_testsets(&scores, 60, 42, false).map_err(|e| e.to_string())?;
    ensure(again == sets, || "same seed gave different sets".into())?;

    // scores from a saved and reloaded model are bit-identical
    let corpus = toy_corpus(&mut rng, 20, 200);
    let model = BigramModel::train(&corpus, 0.75).map_err(|e| e.to_string())?;
    let reloaded = BigramModel::parse("model.lm".as_ref(), &model.to_file_string())
        .map_err(|e| e.to_string())?;
    for s in &corpus {
        let (a, b) = (
            model.perplexity(s).unwrap().value,
            reloaded.perplexity(s).unwrap().value,
        );
        ensure(a.to_bits() == b.to_bits(), || {
            format!("{a} vs {b} after reload")
        })?;
    }
    Ok(format!(
        "50000 scores, max T-SIM {max_sim} <= min T-DIFF {min_diff}"
    ))
}

fn domain_separation() -> Outcome {
    let start = Instant::now();
    let mut rng = SplitMix64::new(707);
    // each word gets five likely successors in A and five different ones in B
    let mut successors: BTreeMap<(usize, bool), Vec<usize>> = BTreeMap::new();
    for w in 0..50 {
        let mut others: Vec<usize> = (0..50).collect();
        rng.shuffle(&mut others);
        successors.insert((w, true), others[..5].to_vec());
        successors.insert((w, false), others[5..10].to_vec());
    }
    let sentence = |rng: &mut SplitMix64, a: bool| -> Vec<String> {
        let len = 6 + rng.below(10) as usize;
        let mut w = rng.below(50) as usize;
        let mut out = vec![format!("w{w:02}")];
        for _ in 1..len {
            w = if rng.next_f64() < 0.9 {
                let s = &successors[&(w, a)];
                s[rng.below(s.len() as u64) as usize]
            } else {
                rng.below(50) as usize
            };
            out.push(format!("w{w:02}"));
        }
        out
    };
    let train: Vec<Vec<String>> = (0..2000).map(|_| sentence(&mut rng, true)).collect();
    let pool: Vec<EncodedUtterance> = (0..4000)
        .map(|i| {
            let a = i % 2 == 0;
            EncodedUtterance {
                id: format!("{}{i:04}", if a { "a" } else { "b" }),
                tokens: sentence(&mut rng, a),
            }
        })
        .collect();
    let model = BigramModel::train(&train, 0.75).map_err(|e| e.to_string())?;
    let scores = score_corpus(&model, &pool).map_err(|e| e.to_string())?;
    let picked = select_by_perplexity(&scores, 2000, Mode::Lowest).map_err(|e| e.to_string())?;
    let from_a = picked.ids().filter(|id| id.starts_with('a')).count();
    let share = from_a as f64 / 2000.0;
    ensure(share >= 0.9, || {
        format!("only {:.1}% from source A", share * 100.0)
    })?;
    within(start.elapsed(), 30)?;
    Ok(format!(
        "{:.1}% from source A in {:.2}s",
        share * 100.0,
        start.elapsed().as_secs_f64()
    ))
}

fn golden_run() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    common::run_pipeline(dir.path(), 0);
    let bad = common::golden_mismatches(dir.path());
    ensure(bad.is_empty(), || {
        format!("differs from golden: {}", bad.join(", "))
    })?;
    Ok(format!(
        "{} files byte-identical",
        common::PIPELINE_OUTPUTS.len()
    ))
}

fn main() -> ExitCode {
    panic::set_hook(Box::new(|_| {}));
    let shared = lexicon().map(|lex| {
        let corpus = zipf_corpus(&lex, 5000, 909);
        let table = bpe::train(&corpus, 200);
        (lex, corpus, table)
    });
    let with_lexicon =
        |f: &dyn Fn(&Lexicon, &[PhonemizedUtterance], &MergeTable) -> Outcome| -> Outcome {
            let (lex, corpus, table) = shared.as_ref().map_err(Clone::clone)?;
            let table = table.as_ref().map_err(|e| e.to_string())?;
            f(lex, corpus, table)
        };

    let checks: Vec<(&str, Check)> = vec![
        (
            "bigram distributions sum to one",
            Box::new(lm_normalization),
        ),
        (
            "perplexity matches reference formula",
            Box::new(perplexity_oracle),
        ),
        (
            "untrained model perplexity equals vocabulary size",
            Box::new(uniform_baseline),
        ),
        (
            "bpe encode/decode roundtrip over the lexicon",
            Box::new(|| with_lexicon(&|lex, _, t| bpe_roundtrip(lex, t))),
        ),
        (
            "bpe merges independent of corpus order",
            Box::new(|| with_lexicon(&|_, c, t| bpe_determinism(c, t))),
        ),
        (
            "bpe reaches the requested vocabulary",
            Box::new(|| with_lexicon(&|_, c, t| vocab_target(c, t))),
        ),
        (
            "top-k selection matches reference ranking",
            Box::new(selection_oracle),
        ),
        (
            "test sets are disjoint and ordered",
            Box::new(testset_structure),
        ),
        (
            "perplexity selection separates domains",
            Box::new(domain_separation),
        ),
        (
            "end-to-end run matches golden outputs",
            Box::new(golden_run),
        ),
    ];

    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        match outcome {
            Ok(detail) => println!("[PASS] {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "{} of {} acceptance checks passed",
        checks.len() - failed,
        checks.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
