//! Command-line front end for the `phonsel` selection pipeline.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use phonsel::bpe::{self, MergeTable};
use phonsel::corpus;
use phonsel::embedding::EmbeddingSet;
use phonsel::lm::{self, BigramModel};
use phonsel::phonemize::{self, OovPolicy, Phonemized};
use phonsel::select::{self, Mode, SelectionManifest};

pub mod run_config;

use run_config::{with_run_line, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "phonsel",
    version,
    about = "Rank and select text by domain similarity"
)]
struct Cli {
    /// Worker threads (0 uses every core). Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Look up every word of a corpus in a pronunciation lexicon
    Phonemize(PhonemizeArgs),
    /// Learn phoneme BPE merges from a phonemized corpus
    BpeTrain(BpeTrainArgs),
    /// Segment a phonemized corpus into subword tokens
    BpeEncode(BpeEncodeArgs),
    /// Train a bigram model on an encoded corpus
    LmTrain(LmTrainArgs),
    /// Score an encoded corpus with a bigram model
    LmScore(LmScoreArgs),
    /// Select the k lowest- or highest-perplexity sentences
    Select(SelectArgs),
    /// Build the T-SIM, T-DIFF and T-RAN test sets
    Testsets(TestsetsArgs),
    /// Average a set of sentence vectors into a centroid
    EmbedCentroid(EmbedCentroidArgs),
    /// Select the k vectors nearest to a centroid
    EmbedRank(EmbedRankArgs),
}

#[derive(Args, Debug)]
struct PhonemizeArgs {
    /// Corpus TSV (`id<TAB>text`)
    #[arg(long = "in")]
    input: PathBuf,
    /// CMUdict-style lexicon
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "unk", value_parser = parse_policy)]
    oov_policy: OovPolicy,
    /// Defaults to `<out>.oov.tsv`
    #[arg(long)]
    oov_report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BpeTrainArgs {
    /// Phonemized corpus
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Total symbols: initial alphabet plus merges
    #[arg(long, default_value_t = 200)]
    vocab_size: usize,
}

#[derive(Args, Debug)]
struct BpeEncodeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    merges: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct LmTrainArgs {
    /// Encoded corpus
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = lm::DEFAULT_DISCOUNT)]
    discount: f64,
}

#[derive(Args, Debug)]
struct LmScoreArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SubsetArgs {
    /// Corpus to draw the selected sentences' text from
    #[arg(long, requires = "subset_out")]
    corpus: Option<PathBuf>,
    /// Where to write the selected sentences as a corpus TSV
    #[arg(long, requires = "corpus")]
    subset_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, default_value_t = 40_000)]
    k: usize,
    #[arg(long, default_value = "lowest", value_parser = parse_mode)]
    mode: Mode,
    /// Manifest name (defaults to the criterion)
    #[arg(long)]
    name: Option<String>,
    /// Manifest path; standard output when absent
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    subset: SubsetArgs,
}

#[derive(Args, Debug)]
struct TestsetsArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, visible_alias = "testset-size", default_value_t = 60)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    /// Draw T-RAN from every sentence, including T-SIM and T-DIFF members
    #[arg(long)]
    allow_overlap: bool,
}

#[derive(Args, Debug)]
struct EmbedCentroidArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EmbedRankArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    centroid: PathBuf,
    #[arg(long, default_value_t = 40_000)]
    k: usize,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    subset: SubsetArgs,
}

fn parse_policy(s: &str) -> Result<OovPolicy, String> {
    s.parse().map_err(|e: phonsel::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: phonsel::Error| e.to_string())
}

fn mode_str(mode: Mode) -> &'static str {
    match mode {
        Mode::Lowest => "lowest",
        Mode::Highest => "highest",
    }
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

fn show_opt(p: &Option<PathBuf>) -> String {
    p.as_deref().map_or_else(|| "-".to_string(), show)
}

/// Sidecar run log. Holds the things that must stay out of data files:
/// wall-clock time, duration and thread count.
struct RunLog {
    config: RunConfig,
    threads: usize,
    started: Instant,
    lines: Vec<String>,
}

impl RunLog {
    fn new(config: RunConfig, threads: usize) -> Self {
        RunLog {
            config,
            threads,
            started: Instant::now(),
            lines: Vec::new(),
        }
    }

    fn note(&mut self, key: &str, value: impl ToString) {
        self.lines.push(format!("{key}={}", value.to_string()));
    }

    fn write(&self, path: &Path) -> phonsel::Result<()> {
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut text = format!(
            "{}\nversion={}\nfinished_unix={now}\nelapsed_ms={}\nthreads={}\n",
            self.config.to_line(),
            env!("CARGO_PKG_VERSION"),
            self.started.elapsed().as_millis(),
            self.threads
        );
        for l in &self.lines {
            text.push_str(l);
            text.push('\n');
        }
        write_file(path, text.as_bytes())
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".log");
    PathBuf::from(s)
}

fn write_file(path: &Path, bytes: &[u8]) -> phonsel::Result<()> {
    fs::write(path, bytes).map_err(|e| phonsel::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(
    path: &Path,
    content: &str,
    config: &RunConfig,
    has_format_header: bool,
) -> phonsel::Result<()> {
    write_file(
        path,
        with_run_line(content, config, has_format_header).as_bytes(),
    )
}

fn write_subset(
    subset: &SubsetArgs,
    manifest: &SelectionManifest,
    config: &RunConfig,
) -> phonsel::Result<()> {
    if let (Some(corpus_path), Some(out)) = (&subset.corpus, &subset.subset_out) {
        let corpus = corpus::load_corpus(corpus_path)?;
        let chosen = select::subset_corpus(manifest, &corpus)?;
        write_text(out, &corpus::corpus_to_string(&chosen), config, false)?;
    }
    Ok(())
}

fn emit_manifest(
    manifest: &SelectionManifest,
    out: Option<&Path>,
    subset: &SubsetArgs,
    mut log: RunLog,
) -> phonsel::Result<()> {
    let text = with_run_line(&manifest.to_tsv(), &log.config, true);
    write_subset(subset, manifest, &log.config)?;
    log.note("selected", manifest.len());
    match out {
        Some(path) => {
            write_file(path, text.as_bytes())?;
            log.write(&sidecar(path))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn phonemize_cmd(a: &PhonemizeArgs, threads: usize) -> phonsel::Result<()> {
    let report_path = a.oov_report.clone().unwrap_or_else(|| {
        let mut s = a.out.as_os_str().to_owned();
        s.push(".oov.tsv");
        PathBuf::from(s)
    });
    let config = RunConfig::new("phonemize")
        .with("in", show(&a.input))
        .with("lexicon", show(&a.lexicon))
        .with("out", show(&a.out))
        .with("oov-policy", a.oov_policy)
        .with("oov-report", show(&report_path));
    let mut log = RunLog::new(config, threads);
    let utterances = corpus::load_corpus(&a.input)?;
    let lexicon = corpus::load_lexicon(&a.lexicon)?;
    let results = phonemize::phonemize_corpus(&utterances, &lexicon, a.oov_policy);
    let dropped = results
        .iter()
        .filter(|r| matches!(r, Phonemized::Dropped { .. }))
        .count();
    if dropped > 0 {
        log::warn!(
            "{dropped} of {} utterances dropped; see {}",
            results.len(),
            report_path.display()
        );
    }
    log.note("utterances", utterances.len());
    log.note(
        "with_digits",
        utterances.iter().filter(|u| u.has_digits).count(),
    );
    log.note("dropped", dropped);
    log.note(
        "oov_words",
        results.iter().map(|r| r.oov_words().len()).sum::<usize>(),
    );
    log.note("lexicon_entries", lexicon.len());
    let report = phonemize::oov_report_to_string(&results);
    let kept: Vec<_> = results.into_iter().filter_map(Phonemized::kept).collect();
    write_text(
        &a.out,
        &phonemize::phonemized_to_string(&kept),
        &log.config,
        false,
    )?;
    write_text(&report_path, &report, &log.config, false)?;
    log.write(&sidecar(&a.out))
}

fn bpe_train_cmd(a: &BpeTrainArgs, threads: usize) -> phonsel::Result<()> {
    let config = RunConfig::new("bpe-train")
        .with("in", show(&a.input))
        .with("out", show(&a.out))
        .with("vocab-size", a.vocab_size);
    let mut log = RunLog::new(config, threads);
    let corpus = phonemize::load_phonemized(&a.input)?;
    let table = bpe::train(&corpus, a.vocab_size)?;
    log.note("alphabet", table.alphabet_size());
    log.note("merges", table.merges().len());
    log.note("vocab", table.vocab_size());
    write_text(&a.out, &table.to_file_string(), &log.config, true)?;
    log.write(&sidecar(&a.out))
}

fn bpe_encode_cmd(a: &BpeEncodeArgs, threads: usize) -> phonsel::Result<()> {
    let config = RunConfig::new("bpe-encode")
        .with("in", show(&a.input))
        .with("merges", show(&a.merges))
        .with("out", show(&a.out));
    let mut log = RunLog::new(config, threads);
    let corpus = phonemize::load_phonemized(&a.input)?;
    let table = MergeTable::load(&a.merges)?;
    let encoded = bpe::encode_corpus(&corpus, &table);
    log.note("utterances", encoded.len());
    log.note(
        "tokens",
        encoded.iter().map(|u| u.tokens.len()).sum::<usize>(),
    );
    write_text(
        &a.out,
        &bpe::encoded_to_string(&encoded),
        &log.config,
        false,
    )?;
    log.write(&sidecar(&a.out))
}

fn lm_train_cmd(a: &LmTrainArgs, threads: usize) -> phonsel::Result<()> {
    let config = RunConfig::new("lm-train")
        .with("in", show(&a.input))
        .with("out", show(&a.out))
        .with("discount", a.discount);
    let mut log = RunLog::new(config, threads);
    let corpus = bpe::load_encoded(&a.input)?;
    let model = BigramModel::train(corpus.iter().map(|u| &u.tokens), a.discount)?;
    log.note("sentences", corpus.len());
    log.note("vocab", model.vocab().len());
    log.note("tokens", model.total_tokens());
    write_text(&a.out, &model.to_file_string(), &log.config, true)?;
    log.write(&sidecar(&a.out))
}

fn lm_score_cmd(a: &LmScoreArgs, threads: usize) -> phonsel::Result<()> {
    let config = RunConfig::new("lm-score")
        .with("in", show(&a.input))
        .with("model", show(&a.model))
        .with("out", show(&a.out));
    let mut log = RunLog::new(config, threads);
    let corpus = bpe::load_encoded(&a.input)?;
    let model = BigramModel::load(&a.model)?;
    let scores = lm::score_corpus(&model, &corpus)?;
    log.note("scored", scores.len());
    write_text(
        &a.out,
        &corpus::scores_to_string(&scores),
        &log.config,
        false,
    )?;
    log.write(&sidecar(&a.out))
}

fn select_cmd(a: &SelectArgs, threads: usize) -> phonsel::Result<()> {
    let config = RunConfig::new("select")
        .with("scores", show(&a.scores))
        .with("k", a.k)
        .with("mode", mode_str(a.mode))
        .with("name", a.name.as_deref().unwrap_or("-"))
        .with("out", show_opt(&a.out))
        .with("corpus", show_opt(&a.subset.corpus))
        .with("subset-out", show_opt(&a.subset.subset_out));
    let log = RunLog::new(config, threads);
    let scores = corpus::read_scores(&a.scores)?;
    let mut manifest = select::select_by_perplexity(&scores, a.k, a.mode)?;
    if let Some(name) = &a.name {
        manifest = manifest.named(name);
    }
    emit_manifest(&manifest, a.out.as_deref(), &a.subset, log)
}

fn testsets_cmd(a: &TestsetsArgs, threads: usize) -> phonsel::Result<()> {
    let config = RunConfig::new("testsets")
        .with("scores", show(&a.scores))
        .with("size", a.size)
        .with("seed", a.seed)
        .with("out-dir", show(&a.out_dir))
        .with("allow-overlap", a.allow_overlap);
    let mut log = RunLog::new(config, threads);
    let scores = corpus::read_scores(&a.scores)?;
    let sets = select::make_testsets(&scores, a.size, a.seed, a.allow_overlap)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| phonsel::Error::Io {
        path: a.out_dir.clone(),
        source: e,
    })?;
    for (file, m) in [
        ("t-sim.tsv", &sets.similar),
        ("t-diff.tsv", &sets.different),
        ("t-ran.tsv", &sets.random),
    ] {
        write_text(&a.out_dir.join(file), &m.to_tsv(), &log.config, true)?;
        log.note(file, m.len());
    }
    log.write(&a.out_dir.join("testsets.log"))
}

fn embed_centroid_cmd(a: &EmbedCentroidArgs, threads: usize) -> phonsel::Result<()> {
    let config = RunConfig::new("embed-centroid")
        .with("in", show(&a.input))
        .with("out", show(&a.out));
    let mut log = RunLog::new(config, threads);
    let set = EmbeddingSet::load(&a.input)?;
    let center = select::centroid(&set)?;
    log.note("vectors", set.len());
    log.note("dim", set.dim());
    EmbeddingSet::from_centroid(&center)?.save(&a.out)?;
    log.write(&sidecar(&a.out))
}

fn embed_rank_cmd(a: &EmbedRankArgs, threads: usize) -> phonsel::Result<()> {
    let config = RunConfig::new("embed-rank")
        .with("pool", show(&a.pool))
        .with("centroid", show(&a.centroid))
        .with("k", a.k)
        .with("name", a.name.as_deref().unwrap_or("-"))
        .with("out", show_opt(&a.out))
        .with("corpus", show_opt(&a.subset.corpus))
        .with("subset-out", show_opt(&a.subset.subset_out));
    let log = RunLog::new(config, threads);
    let pool = EmbeddingSet::load(&a.pool)?;
    let centroid = EmbeddingSet::load(&a.centroid)?;
    if centroid.len() != 1 {
        return Err(phonsel::Error::InvalidData(format!(
            "{}: a centroid file holds exactly one vector, found {}",
            a.centroid.display(),
            centroid.len()
        )));
    }
    let center: Vec<f64> = centroid.rows()[0].1.iter().map(|&x| x as f64).collect();
    let mut manifest = select::select_by_centroid(&pool, &center, a.k)?;
    if let Some(name) = &a.name {
        manifest = manifest.named(name);
    }
    emit_manifest(&manifest, a.out.as_deref(), &a.subset, log)
}

/// Parses `args` (program name first) and runs one subcommand, returning
/// the process exit code: 0 on success, 1 on usage errors, 2 on data errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if cli.threads > 0 {
        // a pool may already exist when run() is called twice in one process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    let threads = rayon::current_num_threads();
    let result = match &cli.command {
        Command::Phonemize(a) => phonemize_cmd(a, threads),
        Command::BpeTrain(a) => bpe_train_cmd(a, threads),
        Command::BpeEncode(a) => bpe_encode_cmd(a, threads),
        Command::LmTrain(a) => lm_train_cmd(a, threads),
        Command::LmScore(a) => lm_score_cmd(a, threads),
        Command::Select(a) => select_cmd(a, threads),
        Command::Testsets(a) => testsets_cmd(a, threads),
        Command::EmbedCentroid(a) => embed_centroid_cmd(a, threads),
        Command::EmbedRank(a) => embed_rank_cmd(a, threads),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}
