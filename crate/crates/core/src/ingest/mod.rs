//! RRUFF file ingestion: spectrum parsing, corpus assembly and split manifests.

mod corpus;
mod spectrum;
mod split;

pub use corpus::{load_corpus, load_corpus_lenient, CorpusError, FileFailure, KindFilter, RawCorpus};
pub use spectrum::{parse_spectrum_file, ParseError, Spectrum, SpectrumKind};
pub use split::{load_split, persist_split, SplitError, SplitManifest, SplitRecord, SPLIT_HEADER};
