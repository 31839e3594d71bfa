//! Single-file index persistence: little-endian binary with a magic
//! header, format version, and trailing FNV-1a checksum.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

use super::{DocEntry, InvertedIndex, Posting};

const MAGIC: &[u8; 4] = b"MKIX";
const VERSION: u32 = 1;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn write_str(buf: &mut Vec<u8>, s: &str) {
    buf.write_u32::<LittleEndian>(s.len() as u32).unwrap();
    buf.extend_from_slice(s.as_bytes());
}

pub fn save_index(index: &InvertedIndex, path: impl AsRef<Path>) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.write_u32::<LittleEndian>(VERSION).unwrap();
    buf.write_u64::<LittleEndian>(index.doc_table.len() as u64)
        .unwrap();
    buf.write_u64::<LittleEndian>(index.total_terms).unwrap();

    let tokenizer_json = serde_json::to_string(&index.tokenizer)?;
    write_str(&mut buf, &tokenizer_json);

    for entry in &index.doc_table {
        write_str(&mut buf, &entry.doc_id);
        buf.write_u32::<LittleEndian>(entry.doc_length).unwrap();
    }

    buf.write_u64::<LittleEndian>(index.dictionary.len() as u64)
        .unwrap();
    for (term, postings) in &index.dictionary {
        write_str(&mut buf, term);
        buf.write_u32::<LittleEndian>(postings.len() as u32).unwrap();
        for posting in postings {
            buf.write_u32::<LittleEndian>(posting.doc_ordinal).unwrap();
            buf.write_u32::<LittleEndian>(posting.term_frequency).unwrap();
            for &pos in &posting.positions {
                buf.write_u32::<LittleEndian>(pos).unwrap();
            }
        }
    }

    let checksum = fnv1a64(&buf);
    buf.write_u64::<LittleEndian>(checksum).unwrap();

    let path_str = path.as_ref().display().to_string();
    let mut file = std::fs::File::create(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
    file.write_all(&buf).map_err(|e| Error::io(&path_str, e))?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::IndexCorrupt("unexpected end of file".into()));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn read_u32(&mut self) -> Result<u32> {
        Ok(self.take(4)?.read_u32::<LittleEndian>().unwrap())
    }

    fn read_u64(&mut self) -> Result<u64> {
        Ok(self.take(8)?.read_u64::<LittleEndian>().unwrap())
    }

    fn read_str(&mut self) -> Result<String> {
        let len = self.read_u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::IndexCorrupt("invalid utf-8 string".into()))
    }
}

pub fn load_index(path: impl AsRef<Path>) -> Result<InvertedIndex> {
    let path_str = path.as_ref().display().to_string();
    let bytes = std::fs::read(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
    if bytes.len() < MAGIC.len() + 4 + 8 {
        return Err(Error::IndexCorrupt("file too short".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::IndexCorrupt("bad magic".into()));
    }
    let version = (&bytes[4..8]).read_u32::<LittleEndian>().unwrap();
    if version != VERSION {
        return Err(Error::IndexVersion {
            found: version,
            expected: VERSION,
        });
    }
    let (payload, checksum_bytes) = bytes.split_at(bytes.len() - 8);
    let stored = (&checksum_bytes[..]).read_u64::<LittleEndian>().unwrap();
    if fnv1a64(payload) != stored {
        return Err(Error::IndexChecksum);
    }

    let mut cursor = Cursor {
        bytes: &payload[8..],
    };
    let num_docs = cursor.read_u64()? as usize;
    let total_terms = cursor.read_u64()?;
    let tokenizer_json = cursor.read_str()?;
    let tokenizer = serde_json::from_str(&tokenizer_json)?;

    let mut doc_table = Vec::with_capacity(num_docs);
    for _ in 0..num_docs {
        let doc_id = cursor.read_str()?;
        let doc_length = cursor.read_u32()?;
        doc_table.push(DocEntry { doc_id, doc_length });
    }

    let num_terms = cursor.read_u64()? as usize;
    let mut dictionary = BTreeMap::new();
    for _ in 0..num_terms {
        let term = cursor.read_str()?;
        let num_postings = cursor.read_u32()? as usize;
        let mut postings = Vec::with_capacity(num_postings);
        for _ in 0..num_postings {
            let doc_ordinal = cursor.read_u32()?;
            let term_frequency = cursor.read_u32()?;
            let mut positions = Vec::with_capacity(term_frequency as usize);
            for _ in 0..term_frequency {
                positions.push(cursor.read_u32()?);
            }
            postings.push(Posting {
                doc_ordinal,
                term_frequency,
                positions,
            });
        }
        dictionary.insert(term, postings);
    }
    if !cursor.bytes.is_empty() {
        return Err(Error::IndexCorrupt("trailing bytes after postings".into()));
    }

    Ok(InvertedIndex {
        dictionary,
        doc_table,
        total_terms,
        tokenizer,
    })
}
