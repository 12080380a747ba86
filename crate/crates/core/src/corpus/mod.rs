//! Corpus ingestion and chunking.

mod chunk;
mod store;
pub mod synth;

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

pub use chunk::{chunk_boundaries, partition, sort_word_groups_desc, Chunk, DocWordMap, WordGroup};
pub use store::{ChunkStore, CHUNK_MAGIC};

use crate::error::{Error, Result};

/// An immutable bag-of-words document collection.
///
/// Documents are stored as sparse `(word, multiplicity)` entries; the token
/// stream is the expansion of each entry into `multiplicity` tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    vocab: Vec<String>,
    doc_lengths: Vec<u32>,
    num_tokens: u64,
    doc_ptr: Vec<usize>,
    entry_words: Vec<u32>,
    entry_counts: Vec<u32>,
}

impl Corpus {
    /// Builds a corpus from `(doc, word, count)` triples with 0-based ids.
    ///
    /// Documents without any entry are dropped and the remaining ids are
    /// compacted, preserving order.
    pub fn from_triples<I>(num_docs: usize, vocab: Vec<String>, triples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, u32, u32)>,
    {
        let v = vocab.len();
        let mut per_doc: Vec<Vec<(u32, u32)>> = vec![Vec::new(); num_docs];
        for (d, w, c) in triples {
            if d as usize >= num_docs {
                return Err(Error::Value(format!("doc id {d} >= {num_docs}")));
            }
            if w as usize >= v {
                return Err(Error::Value(format!("word id {w} >= {v}")));
            }
            if c == 0 {
                return Err(Error::Value(format!("zero count for doc {d} word {w}")));
            }
            per_doc[d as usize].push((w, c));
        }

        let mut doc_ptr = vec![0usize];
        let mut entry_words = Vec::new();
        let mut entry_counts = Vec::new();
        let mut doc_lengths = Vec::new();
        let mut num_tokens = 0u64;
        for entries in per_doc.into_iter().filter(|e| !e.is_empty()) {
            let mut len = 0u64;
            for (w, c) in entries {
                entry_words.push(w);
                entry_counts.push(c);
                len += c as u64;
            }
            let len = u32::try_from(len).map_err(|_| Error::Value(format!("document length {len} exceeds u32")))?;
            doc_lengths.push(len);
            num_tokens += len as u64;
            doc_ptr.push(entry_words.len());
        }

        Ok(Corpus {
            vocab,
            doc_lengths,
            num_tokens,
            doc_ptr,
            entry_words,
            entry_counts,
        })
    }

    pub fn num_docs(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn num_tokens(&self) -> u64 {
        self.num_tokens
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn is_empty(&self) -> bool {
        self.num_tokens == 0
    }

    /// `(word, multiplicity)` entries of document `d`.
    pub fn doc_entries(&self, d: usize) -> impl Iterator<Item = (u32, u32)> + '_ {
        let range = self.doc_ptr[d]..self.doc_ptr[d + 1];
        self.entry_words[range.clone()]
            .iter()
            .copied()
            .zip(self.entry_counts[range].iter().copied())
    }

    /// The expanded token stream as `(doc, word)` pairs, in document order.
    pub fn tokens(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.num_docs()).flat_map(move |d| {
            self.doc_entries(d)
                .flat_map(move |(w, c)| std::iter::repeat_n((d as u32, w), c as usize))
        })
    }
}

fn read_lines(path: &Path) -> Result<impl Iterator<Item = (usize, Result<String>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let owned = path.to_path_buf();
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(move |(i, l)| (i + 1, l.map_err(|e| Error::io(&owned, e)))))
}

fn parse_header_field(line: Option<(usize, Result<String>)>, expected_line: usize, name: &str) -> Result<u64> {
    let (no, text) = match line {
        Some((no, text)) => (no, text?),
        None => {
            return Err(Error::Parse {
                line: expected_line,
                msg: format!("missing header field {name}"),
            })
        }
    };
    text.trim().parse::<u64>().map_err(|_| Error::Parse {
        line: no,
        msg: format!("header field {name} is not a non-negative integer: {:?}", text.trim()),
    })
}

/// Reads a UCI bag-of-words corpus (`docword.*.txt` plus `vocab.*.txt`).
///
/// The docword file starts with the three header lines `D`, `W` and `NNZ`,
/// followed by `NNZ` lines of `docID wordID count` with 1-based ids.
pub fn load_uci_bow(docword_path: impl AsRef<Path>, vocab_path: impl AsRef<Path>) -> Result<Corpus> {
    let docword_path = docword_path.as_ref();
    let mut lines = read_lines(docword_path)?;
    let d = parse_header_field(lines.next(), 1, "D")?;
    let w = parse_header_field(lines.next(), 2, "W")?;
    let nnz = parse_header_field(lines.next(), 3, "NNZ")?;

    let mut triples = Vec::with_capacity(nnz as usize);
    for (no, text) in lines {
        let text = text?;
        let trimmed = text.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: no,
                msg: format!("expected \"docID wordID count\", got {trimmed:?}"),
            });
        }
        let num = |s: &str, what: &str| {
            s.parse::<i64>().map_err(|_| Error::Parse {
                line: no,
                msg: format!("{what} is not an integer: {s:?}"),
            })
        };
        let (doc, word, count) = (
            num(fields[0], "docID")?,
            num(fields[1], "wordID")?,
            num(fields[2], "count")?,
        );
        if doc < 1 || doc as u64 > d {
            return Err(Error::Range {
                line: no,
                msg: format!("docID {doc} outside 1..={d}"),
            });
        }
        if word < 1 || word as u64 > w {
            return Err(Error::Range {
                line: no,
                msg: format!("wordID {word} outside 1..={w}"),
            });
        }
        if count <= 0 {
            return Err(Error::Value(format!("line {no}: count must be positive, got {count}")));
        }
        let count = u32::try_from(count).map_err(|_| Error::Value(format!("line {no}: count {count} exceeds u32")))?;
        triples.push(((doc - 1) as u32, (word - 1) as u32, count));
    }
    if triples.len() as u64 != nnz {
        return Err(Error::Parse {
            line: 3,
            msg: format!("header announces {nnz} entries but {} were read", triples.len()),
        });
    }

    let vocab_path = vocab_path.as_ref();
    let mut vocab = Vec::with_capacity(w as usize);
    for (_, text) in read_lines(vocab_path)? {
        vocab.push(text?.trim().to_string());
    }
    while vocab.last().is_some_and(|s| s.is_empty()) && vocab.len() as u64 > w {
        vocab.pop();
    }
    if vocab.len() as u64 != w {
        return Err(Error::Value(format!(
            "vocabulary has {} words but docword header says W={w}",
            vocab.len()
        )));
    }

    Corpus::from_triples(d as usize, vocab, triples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        File::create(&path).unwrap().write_all(body.as_bytes()).unwrap();
        path
    }

    fn load(docword: &str, vocab: &str) -> Result<Corpus> {
        let dir = tempfile::tempdir().unwrap();
        let dw = write(&dir, "docword.txt", docword);
        let vc = write(&dir, "vocab.txt", vocab);
        load_uci_bow(dw, vc)
    }

    #[test]
    fn expands_triples() {
        let c = load("2\n3\n3\n1 1 2\n1 3 1\n2 2 1\n", "a\nb\nc\n").unwrap();
        assert_eq!(c.num_docs(), 2);
        assert_eq!(c.vocab_size(), 3);
        assert_eq!(c.num_tokens(), 4);
        assert_eq!(c.doc_lengths(), &[3, 1]);
        let toks: Vec<_> = c.tokens().collect();
        assert_eq!(toks, vec![(0, 0), (0, 0), (0, 2), (1, 1)]);
    }

    #[test]
    fn minimal_corpus() {
        let c = load("1\n1\n1\n1 1 1\n", "only\n").unwrap();
        assert_eq!((c.num_docs(), c.vocab_size(), c.num_tokens()), (1, 1, 1));
    }

    #[test]
    fn empty_documents_are_dropped() {
        let c = load("3\n2\n2\n1 1 1\n3 2 4\n", "a\nb\n").unwrap();
        assert_eq!(c.num_docs(), 2);
        assert_eq!(c.doc_lengths(), &[1, 4]);
        assert_eq!(c.tokens().last(), Some((1, 1)));
    }

    #[test]
    fn malformed_header_names_line() {
        match load("2\nx\n3\n", "a\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match load("2\n", "a\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_ids() {
        assert!(matches!(
            load("1\n2\n1\n2 1 1\n", "a\nb\n"),
            Err(Error::Range { line: 4, .. })
        ));
        assert!(matches!(
            load("1\n2\n1\n1 3 1\n", "a\nb\n"),
            Err(Error::Range { line: 4, .. })
        ));
        assert!(matches!(load("1\n2\n1\n0 1 1\n", "a\nb\n"), Err(Error::Range { .. })));
    }

    #[test]
    fn nonpositive_count() {
        assert!(matches!(load("1\n2\n1\n1 1 0\n", "a\nb\n"), Err(Error::Value(_))));
        assert!(matches!(load("1\n2\n1\n1 1 -3\n", "a\nb\n"), Err(Error::Value(_))));
    }

    #[test]
    fn vocab_size_mismatch() {
        assert!(matches!(load("1\n2\n1\n1 1 1\n", "a\n"), Err(Error::Value(_))));
    }

    #[test]
    fn nnz_mismatch() {
        assert!(matches!(
            load("1\n2\n2\n1 1 1\n", "a\nb\n"),
            Err(Error::Parse { line: 3, .. })
        ));
    }
}
