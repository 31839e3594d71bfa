//! Text ingestion and normalization: corpus/query file formats, the
//! tokenizer, and Porter stemming.

pub mod corpus;
pub mod porter;
pub mod tokenize;

pub use corpus::{
    load_corpus, load_corpus_vec, load_queries, write_corpus_tsv, CorpusFormat, CorpusReader,
    Document, Query,
};
pub use tokenize::{default_stoplist, tokenize, TokenizerConfig, DEFAULT_STOPLIST};
