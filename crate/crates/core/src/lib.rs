//! Domain-similarity corpus selection for speech data preparation.
//!
//! The pipeline turns text into phoneme-level subword tokens, trains a
//! bigram model on a target domain and ranks other sentences by how
//! perplexed that model is by them. A second route ranks sentence vectors
//! by their distance to the target domain's centroid.
//!
//! ```
//! use phonsel::{bpe, corpus::{Lexicon, Utterance}, lm::BigramModel, phonemize};
//!
//! let lexicon = Lexicon::from_entries([
//!     ("THE", vec!["DH", "AH"]),
//!     ("CAT", vec!["K", "AE", "T"]),
//!     ("SAT", vec!["S", "AE", "T"]),
//! ])?;
//! let corpus: Vec<_> = ["The cat sat.", "The cat.", "Sat the cat"]
//!     .iter()
//!     .enumerate()
//!     .map(|(i, t)| Utterance::new(format!("u{i}"), t))
//!     .filter_map(|u| phonemize::phonemize(&u, &lexicon, phonemize::OovPolicy::Unk).kept())
//!     .collect();
//! let merges = bpe::train(&corpus, 12)?;
//! let encoded = bpe::encode_corpus(&corpus, &merges);
//! let model = BigramModel::train(encoded.iter().map(|u| &u.tokens), 0.75)?;
//! let ppl = model.perplexity(&encoded[0].tokens)?;
//! assert!(ppl.value < model.support_size() as f64);
//! # Ok::<(), phonsel::Error>(())
//! ```
//!
//! The guide in `book/` walks through each stage in more detail.

pub mod bpe;
pub mod corpus;
pub mod embedding;
mod error;
pub mod lm;
pub mod phonemize;
pub mod rng;
pub mod select;
mod textfile;

pub use error::{Error, Result};
pub use textfile::format_significant;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/text-and-lexicon.md")]
    mod text_and_lexicon {}
    #[doc = include_str!("../../../book/src/phoneme-bpe.md")]
    mod phoneme_bpe {}
    #[doc = include_str!("../../../book/src/bigram-model.md")]
    mod bigram_model {}
    #[doc = include_str!("../../../book/src/selection.md")]
    mod selection {}
    #[doc = include_str!("../../../book/src/file-formats.md")]
    mod file_formats {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
