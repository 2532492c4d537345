#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixtures() -> PathBuf {
    manifest_dir().join("tests/fixtures")
}

pub fn golden_dir() -> PathBuf {
    manifest_dir().join("tests/golden")
}

pub fn lexicon_fixture() -> PathBuf {
    manifest_dir().join("../core/tests/data/cmudict-fixture.dict")
}

pub fn phonsel(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phonsel"))
        .current_dir(dir)
        .env("RUST_LOG", "error")
        .args(args)
        .output()
        .expect("failed to spawn phonsel")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = phonsel(dir, args);
    assert!(
        out.status.success(),
        "`phonsel {}` failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Every file the end-to-end run produces, relative to its working directory.
pub const PIPELINE_OUTPUTS: &[&str] = &[
    "target.ph",
    "target.ph.oov.tsv",
    "merges.txt",
    "target.enc",
    "model.lm",
    "general.ph",
    "general.ph.oov.tsv",
    "general.enc",
    "scores.tsv",
    "sets/t-sim.tsv",
    "sets/t-diff.tsv",
    "sets/t-ran.tsv",
    "selected.tsv",
    "subset.tsv",
    "centroid.emb",
    "emb-selected.tsv",
    "emb-subset.tsv",
];

/// Runs the whole pipeline on the checked-in fixtures inside `dir`.
pub fn run_pipeline(dir: &Path, threads: usize) {
    for f in ["target.tsv", "general.tsv", "domain.emb", "pool.emb"] {
        fs::copy(fixtures().join(f), dir.join(f)).unwrap();
    }
    fs::copy(lexicon_fixture(), dir.join("lexicon.dict")).unwrap();
    let t = threads.to_string();
    let steps: &[&[&str]] = &[
        &[
            "phonemize",
            "--in",
            "target.tsv",
            "--lexicon",
            "lexicon.dict",
            "--out",
            "target.ph",
            "--oov-policy",
            "drop-utterance",
        ],
        &[
            "bpe-train",
            "--in",
            "target.ph",
            "--out",
            "merges.txt",
            "--vocab-size",
            "200",
        ],
        &[
            "bpe-encode",
            "--in",
            "target.ph",
            "--merges",
            "merges.txt",
            "--out",
            "target.enc",
        ],
        &["lm-train", "--in", "target.enc", "--out", "model.lm"],
        &[
            "phonemize",
            "--in",
            "general.tsv",
            "--lexicon",
            "lexicon.dict",
            "--out",
            "general.ph",
        ],
        &[
            "bpe-encode",
            "--in",
            "general.ph",
            "--merges",
            "merges.txt",
            "--out",
            "general.enc",
        ],
        &[
            "lm-score",
            "--in",
            "general.enc",
            "--model",
            "model.lm",
            "--out",
            "scores.tsv",
        ],
        &[
            "testsets",
            "--scores",
            "scores.tsv",
            "--size",
            "60",
            "--seed",
            "17",
            "--out-dir",
            "sets",
        ],
        &[
            "select",
            "--scores",
            "scores.tsv",
            "--k",
            "50",
            "--name",
            "ppl-subset",
            "--out",
            "selected.tsv",
            "--corpus",
            "general.tsv",
            "--subset-out",
            "subset.tsv",
        ],
        &[
            "embed-centroid",
            "--in",
            "domain.emb",
            "--out",
            "centroid.emb",
        ],
        &[
            "embed-rank",
            "--pool",
            "pool.emb",
            "--centroid",
            "centroid.emb",
            "--k",
            "50",
            "--out",
            "emb-selected.tsv",
            "--corpus",
            "general.tsv",
            "--subset-out",
            "emb-subset.tsv",
        ],
    ];
    for step in steps {
        let mut args = step.to_vec();
        args.extend(["--threads", &t]);
        ok(dir, &args);
    }
}

/// Names of pipeline outputs that differ from the golden copies.
pub fn golden_mismatches(dir: &Path) -> Vec<String> {
    PIPELINE_OUTPUTS
        .iter()
        .filter(|f| fs::read(dir.join(f)).ok() != fs::read(golden_dir().join(f)).ok())
        .map(|f| f.to_string())
        .collect()
}

pub fn update_golden(dir: &Path) {
    for f in PIPELINE_OUTPUTS {
        let dest = golden_dir().join(f);
        fs::create_dir_all(dest.parent().unwrap()).unwrap();
        fs::copy(dir.join(f), dest).unwrap();
    }
}
