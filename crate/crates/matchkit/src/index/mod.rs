//! Positional inverted index with the collection statistics the sparse
//! scorers need. Built once, then immutable.

mod io;

pub use io::{load_index, save_index};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::text::{tokenize, Document, TokenizerConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Posting {
    pub doc_ordinal: u32,
    pub term_frequency: u32,
    /// 0-based token offsets, strictly increasing. len == term_frequency.
    pub positions: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocEntry {
    pub doc_id: String,
    pub doc_length: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldPolicy {
    /// Concatenate title and body (token boundary between them).
    TitleAndBody,
    BodyOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    /// term -> postings sorted by doc_ordinal. BTreeMap keeps term
    /// iteration (and thus serialization) deterministic.
    pub(crate) dictionary: BTreeMap<String, Vec<Posting>>,
    pub(crate) doc_table: Vec<DocEntry>,
    pub(crate) total_terms: u64,
    pub(crate) tokenizer: TokenizerConfig,
}

impl InvertedIndex {
    pub fn num_docs(&self) -> usize {
        self.doc_table.len()
    }

    pub fn total_terms(&self) -> u64 {
        self.total_terms
    }

    pub fn avgdl(&self) -> f64 {
        if self.doc_table.is_empty() {
            0.0
        } else {
            self.total_terms as f64 / self.doc_table.len() as f64
        }
    }

    pub fn doc_entry(&self, ordinal: u32) -> &DocEntry {
        &self.doc_table[ordinal as usize]
    }

    pub fn doc_table(&self) -> &[DocEntry] {
        &self.doc_table
    }

    pub fn tokenizer(&self) -> &TokenizerConfig {
        &self.tokenizer
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.dictionary.keys().map(String::as_str)
    }

    /// Postings for a term; unknown terms yield an empty slice.
    pub fn postings(&self, term: &str) -> &[Posting] {
        self.dictionary.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    /// (document frequency, collection term frequency); (0, 0) for
    /// unknown terms.
    pub fn term_stats(&self, term: &str) -> (u32, u64) {
        match self.dictionary.get(term) {
            Some(postings) => (
                postings.len() as u32,
                postings.iter().map(|p| p.term_frequency as u64).sum(),
            ),
            None => (0, 0),
        }
    }
}

/// Build an index from a document stream. Ordinals follow stream order.
pub fn build_index<I>(
    docs: I,
    config: TokenizerConfig,
    field_policy: FieldPolicy,
) -> Result<InvertedIndex>
where
    I: IntoIterator<Item = Result<Document>>,
{
    let mut dictionary: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut doc_table: Vec<DocEntry> = Vec::new();
    let mut total_terms: u64 = 0;
    let mut seen = std::collections::HashSet::new();

    for doc in docs {
        let doc = doc?;
        if !seen.insert(doc.doc_id.clone()) {
            return Err(Error::DuplicateDocId(doc.doc_id));
        }
        let ordinal = doc_table.len() as u32;
        let tokens = index_tokens(&doc, &config, field_policy);
        total_terms += tokens.len() as u64;
        let mut term_positions: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
        for (pos, token) in tokens.iter().enumerate() {
            term_positions.entry(token).or_default().push(pos as u32);
        }
        for (term, positions) in term_positions {
            dictionary
                .entry(term.to_string())
                .or_default()
                .push(Posting {
                    doc_ordinal: ordinal,
                    term_frequency: positions.len() as u32,
                    positions,
                });
        }
        doc_table.push(DocEntry {
            doc_id: doc.doc_id,
            doc_length: tokens.len() as u32,
        });
    }

    if doc_table.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(InvertedIndex {
        dictionary,
        doc_table,
        total_terms,
        tokenizer: config,
    })
}

/// The token sequence a document contributes under a field policy.
pub fn index_tokens(
    doc: &Document,
    config: &TokenizerConfig,
    field_policy: FieldPolicy,
) -> Vec<String> {
    match field_policy {
        FieldPolicy::BodyOnly => tokenize(&doc.body, config),
        FieldPolicy::TitleAndBody => {
            let mut tokens = tokenize(&doc.title, config);
            tokens.extend(tokenize(&doc.body, config));
            tokens
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, body: &str) -> Result<Document> {
        Ok(Document {
            doc_id: id.into(),
            title: String::new(),
            body: body.into(),
        })
    }

    fn fixture() -> InvertedIndex {
        build_index(
            vec![doc("d1", "a b a"), doc("d2", "b c")],
            TokenizerConfig::plain(),
            FieldPolicy::TitleAndBody,
        )
        .unwrap()
    }

    #[test]
    fn fixture_stats() {
        let index = fixture();
        assert_eq!(index.num_docs(), 2);
        assert_eq!(index.term_stats("a"), (1, 2));
        assert_eq!(index.term_stats("b"), (2, 2));
        assert_eq!(index.total_terms(), 5);
        assert!((index.avgdl() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn fixture_positions() {
        let index = fixture();
        let postings = index.postings("a");
        assert_eq!(postings.len(), 1);
        assert_eq!(postings[0].doc_ordinal, 0);
        assert_eq!(postings[0].term_frequency, 2);
        assert_eq!(postings[0].positions, vec![0, 2]);
    }

    #[test]
    fn unknown_term() {
        let index = fixture();
        assert!(index.postings("zzz").is_empty());
        assert_eq!(index.term_stats("zzz"), (0, 0));
    }

    #[test]
    fn empty_corpus_rejected() {
        let result = build_index(
            Vec::<Result<Document>>::new(),
            TokenizerConfig::plain(),
            FieldPolicy::BodyOnly,
        );
        assert!(matches!(result, Err(Error::EmptyCorpus)));
    }

    #[test]
    fn single_empty_document() {
        let index = build_index(
            vec![doc("d1", "")],
            TokenizerConfig::plain(),
            FieldPolicy::BodyOnly,
        )
        .unwrap();
        assert_eq!(index.num_docs(), 1);
        assert_eq!(index.total_terms(), 0);
        assert_eq!(index.avgdl(), 0.0);
        assert_eq!(index.terms().count(), 0);
    }

    #[test]
    fn duplicate_doc_id_rejected() {
        let result = build_index(
            vec![doc("d1", "a"), doc("d1", "b")],
            TokenizerConfig::plain(),
            FieldPolicy::BodyOnly,
        );
        assert!(matches!(result, Err(Error::DuplicateDocId(_))));
    }

    #[test]
    fn df_ctf_invariants_hold() {
        let index = fixture();
        for term in index.terms().map(str::to_string).collect::<Vec<_>>() {
            let postings = index.postings(&term);
            let (df, ctf) = index.term_stats(&term);
            assert_eq!(df as usize, postings.len());
            assert_eq!(ctf, postings.iter().map(|p| p.term_frequency as u64).sum::<u64>());
            for p in postings {
                assert_eq!(p.term_frequency as usize, p.positions.len());
                assert!(p.positions.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn title_and_body_policy_concatenates() {
        let index = build_index(
            vec![Ok(Document {
                doc_id: "d1".into(),
                title: "x".into(),
                body: "y".into(),
            })],
            TokenizerConfig::plain(),
            FieldPolicy::TitleAndBody,
        )
        .unwrap();
        assert_eq!(index.postings("x")[0].positions, vec![0]);
        assert_eq!(index.postings("y")[0].positions, vec![1]);
    }
}
