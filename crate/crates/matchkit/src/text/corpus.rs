use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// A token-bearing document. `doc_id` is unique within a corpus and
/// contains no whitespace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub query_id: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Tsv,
    Jsonl,
}

impl CorpusFormat {
    pub fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(CorpusFormat::Tsv),
            "jsonl" => Ok(CorpusFormat::Jsonl),
            other => Err(Error::Config(format!(
                "unknown corpus format `{other}` (expected tsv or jsonl)"
            ))),
        }
    }
}

#[derive(Deserialize)]
struct JsonlRecord {
    id: String,
    #[serde(default)]
    title: String,
    contents: String,
}

/// Streaming corpus reader; yields documents in file order and rejects
/// duplicate ids as they are seen.
pub struct CorpusReader {
    path: String,
    format: CorpusFormat,
    lines: std::io::Lines<BufReader<File>>,
    line_no: usize,
    seen: HashSet<String>,
}

impl CorpusReader {
    pub fn open(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Self> {
        let path_str = path.as_ref().display().to_string();
        let file = File::open(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
        Ok(CorpusReader {
            path: path_str,
            format,
            lines: BufReader::new(file).lines(),
            line_no: 0,
            seen: HashSet::new(),
        })
    }

    fn parse_line(&self, line: &str) -> Result<Document> {
        match self.format {
            CorpusFormat::Tsv => {
                let fields: Vec<&str> = line.split('\t').collect();
                if fields.len() != 3 {
                    return Err(Error::parse(
                        &self.path,
                        self.line_no,
                        format!("expected 3 tab-separated fields, found {}", fields.len()),
                    ));
                }
                let doc_id = fields[0].trim();
                if doc_id.is_empty() || doc_id.chars().any(char::is_whitespace) {
                    return Err(Error::parse(
                        &self.path,
                        self.line_no,
                        "doc_id must be non-empty and whitespace-free",
                    ));
                }
                Ok(Document {
                    doc_id: doc_id.to_string(),
                    title: fields[1].to_string(),
                    body: fields[2].to_string(),
                })
            }
            CorpusFormat::Jsonl => {
                let record: JsonlRecord = serde_json::from_str(line).map_err(|e| {
                    Error::parse(&self.path, self.line_no, format!("invalid json: {e}"))
                })?;
                if record.id.is_empty() || record.id.chars().any(char::is_whitespace) {
                    return Err(Error::parse(
                        &self.path,
                        self.line_no,
                        "id must be non-empty and whitespace-free",
                    ));
                }
                Ok(Document {
                    doc_id: record.id,
                    title: record.title,
                    body: record.contents,
                })
            }
        }
    }
}

impl Iterator for CorpusReader {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let doc = match self.parse_line(&line) {
                Ok(d) => d,
                Err(e) => return Some(Err(e)),
            };
            if !self.seen.insert(doc.doc_id.clone()) {
                return Some(Err(Error::DuplicateDocId(doc.doc_id)));
            }
            return Some(Ok(doc));
        }
    }
}

/// Open a corpus file for streaming. Convenience alias for [`CorpusReader::open`].
pub fn load_corpus(
    path: impl AsRef<Path>,
    format: CorpusFormat,
) -> Result<impl Iterator<Item = Result<Document>>> {
    CorpusReader::open(path, format)
}

/// Read an entire corpus into memory.
pub fn load_corpus_vec(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Vec<Document>> {
    load_corpus(path, format)?.collect()
}

/// Write documents as corpus TSV (`doc_id<TAB>title<TAB>body`).
pub fn write_corpus_tsv(docs: &[Document], mut writer: impl Write) -> std::io::Result<()> {
    for doc in docs {
        writeln!(writer, "{}\t{}\t{}", doc.doc_id, doc.title, doc.body)?;
    }
    Ok(())
}

/// Load queries from TSV (`query_id<TAB>text`), enforcing id uniqueness.
pub fn load_queries(path: impl AsRef<Path>) -> Result<Vec<Query>> {
    let path_str = path.as_ref().display().to_string();
    let file = File::open(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
    let mut queries = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path_str, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (query_id, text) = line.split_once('\t').ok_or_else(|| {
            Error::parse(&path_str, idx + 1, "expected 2 tab-separated fields")
        })?;
        if !seen.insert(query_id.to_string()) {
            return Err(Error::DuplicateQueryId(query_id.to_string()));
        }
        queries.push(Query {
            query_id: query_id.to_string(),
            text: text.to_string(),
        });
    }
    Ok(queries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn tsv_fixture_round_trip() {
        let f = write_temp("d1\tTitle One\tbody text here\nd2\t\tsecond body\n");
        let docs = load_corpus_vec(f.path(), CorpusFormat::Tsv).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].doc_id, "d1");
        assert_eq!(docs[1].title, "");

        let mut out = Vec::new();
        write_corpus_tsv(&docs, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "d1\tTitle One\tbody text here\nd2\t\tsecond body\n"
        );
    }

    #[test]
    fn tsv_wrong_field_count() {
        let f = write_temp("d1\tTitle\tbody\nd2-only-one-field\n");
        let result = load_corpus_vec(f.path(), CorpusFormat::Tsv);
        match result {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn jsonl_missing_id() {
        let f = write_temp(r#"{"title": "t", "contents": "c"}"#);
        assert!(matches!(
            load_corpus_vec(f.path(), CorpusFormat::Jsonl),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn jsonl_ok_with_optional_title() {
        let f = write_temp("{\"id\": \"d1\", \"contents\": \"hello\"}\n");
        let docs = load_corpus_vec(f.path(), CorpusFormat::Jsonl).unwrap();
        assert_eq!(docs[0].title, "");
        assert_eq!(docs[0].body, "hello");
    }

    #[test]
    fn duplicate_doc_id_rejected() {
        let f = write_temp("d1\ta\tb\nd1\tc\td\n");
        assert!(matches!(
            load_corpus_vec(f.path(), CorpusFormat::Tsv),
            Err(Error::DuplicateDocId(_))
        ));
    }

    #[test]
    fn queries_tsv() {
        let f = write_temp("q1\thello world\nq2\tsecond query\n");
        let queries = load_queries(f.path()).unwrap();
        assert_eq!(queries.len(), 2);
        assert_eq!(queries[0].query_id, "q1");
        assert_eq!(queries[0].text, "hello world");
    }

    #[test]
    fn empty_query_file() {
        let f = write_temp("");
        assert!(load_queries(f.path()).unwrap().is_empty());
    }

    #[test]
    fn duplicate_query_id_rejected() {
        let f = write_temp("q1\ta\nq1\tb\n");
        assert!(matches!(
            load_queries(f.path()),
            Err(Error::DuplicateQueryId(_))
        ));
    }
}
