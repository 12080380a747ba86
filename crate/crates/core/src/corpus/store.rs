//! On-disk chunk store: one file per chunk.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "GFCHUNK1"
//! u64 chunk_id, u64 doc_lo, u64 doc_hi, u64 token_count
//! token_count x (u32 doc_id, u32 word_id, u16 topic)     word-group order
//! n_groups    x (u32 word_id, u64 offset, u64 len)       until end of file
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::chunk::{Chunk, WordGroup};
use crate::error::{Error, Result};

pub const CHUNK_MAGIC: &[u8; 8] = b"GFCHUNK1";

const TOKEN_BYTES: usize = 4 + 4 + 2;
const GROUP_BYTES: usize = 4 + 8 + 8;
const HEADER_BYTES: usize = 8 + 4 * 8;

#[derive(Debug, Clone)]
pub struct ChunkStore {
    dir: PathBuf,
}

impl ChunkStore {
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(ChunkStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_of(&self, chunk_id: usize) -> PathBuf {
        self.dir.join(format!("chunk-{chunk_id:06}.gfc"))
    }

    pub fn write(&self, chunk: &Chunk) -> Result<()> {
        let path = self.path_of(chunk.id);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        write_chunk(&mut out, chunk).map_err(|e| Error::io(&path, e))?;
        out.flush().map_err(|e| Error::io(&path, e))
    }

    pub fn read(&self, chunk_id: usize) -> Result<Chunk> {
        let path = self.path_of(chunk_id);
        let mut bytes = Vec::new();
        File::open(&path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(&path, e))?;
        let chunk = decode_chunk(&bytes)?;
        if chunk.id != chunk_id {
            return Err(Error::Format(format!(
                "{} holds chunk {} instead of {chunk_id}",
                path.display(),
                chunk.id
            )));
        }
        Ok(chunk)
    }
}

pub(crate) fn write_chunk(out: &mut impl Write, chunk: &Chunk) -> std::io::Result<()> {
    out.write_all(CHUNK_MAGIC)?;
    for field in [chunk.id, chunk.doc_lo, chunk.doc_hi, chunk.token_count()] {
        out.write_all(&(field as u64).to_le_bytes())?;
    }
    for t in 0..chunk.token_count() {
        out.write_all(&chunk.docs()[t].to_le_bytes())?;
        out.write_all(&chunk.words()[t].to_le_bytes())?;
        out.write_all(&chunk.topics[t].to_le_bytes())?;
    }
    for g in chunk.word_groups() {
        out.write_all(&g.word.to_le_bytes())?;
        out.write_all(&(g.offset as u64).to_le_bytes())?;
        out.write_all(&(g.len as u64).to_le_bytes())?;
    }
    Ok(())
}

fn le_u64(b: &[u8]) -> u64 {
    u64::from_le_bytes(b[..8].try_into().unwrap())
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes(b[..4].try_into().unwrap())
}

pub(crate) fn decode_chunk(bytes: &[u8]) -> Result<Chunk> {
    if bytes.len() < HEADER_BYTES || &bytes[..8] != CHUNK_MAGIC {
        return Err(Error::Format("missing GFCHUNK1 header".into()));
    }
    let field = |i: usize| le_u64(&bytes[8 + 8 * i..]) as usize;
    let (id, doc_lo, doc_hi, n) = (field(0), field(1), field(2), field(3));
    let tokens_end = n
        .checked_mul(TOKEN_BYTES)
        .and_then(|b| b.checked_add(HEADER_BYTES))
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Format(format!("truncated token section for {n} tokens")))?;
    let dir_bytes = bytes.len() - tokens_end;
    if !dir_bytes.is_multiple_of(GROUP_BYTES) {
        return Err(Error::Format(format!(
            "word-group directory of {dir_bytes} bytes is not a multiple of {GROUP_BYTES}"
        )));
    }

    let mut docs = Vec::with_capacity(n);
    let mut words = Vec::with_capacity(n);
    let mut topics = Vec::with_capacity(n);
    for rec in bytes[HEADER_BYTES..tokens_end].chunks_exact(TOKEN_BYTES) {
        docs.push(le_u32(rec));
        words.push(le_u32(&rec[4..]));
        topics.push(u16::from_le_bytes([rec[8], rec[9]]));
    }
    let groups = bytes[tokens_end..]
        .chunks_exact(GROUP_BYTES)
        .map(|rec| WordGroup {
            word: le_u32(rec),
            offset: le_u64(&rec[4..]) as usize,
            len: le_u64(&rec[12..]) as usize,
        })
        .collect();
    Chunk::from_parts(id, doc_lo, doc_hi, docs, words, topics, groups)
        .map_err(|e| Error::Format(format!("inconsistent chunk {id}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{partition, sort_word_groups_desc, Corpus};
    use proptest::prelude::*;

    fn sample_chunks(seed: u64) -> Vec<Chunk> {
        let vocab = (0..5).map(|i| format!("w{i}")).collect();
        let triples = vec![(0, 0, 3), (0, 4, 1), (1, 2, 2), (2, 1, 5), (2, 0, 1)];
        let c = Corpus::from_triples(3, vocab, triples).unwrap();
        partition(&c, 2, 7, seed)
            .unwrap()
            .into_iter()
            .map(sort_word_groups_desc)
            .collect()
    }

    #[test]
    fn header_layout() {
        let chunk = &sample_chunks(1)[1];
        let mut bytes = Vec::new();
        write_chunk(&mut bytes, chunk).unwrap();
        assert_eq!(&bytes[..8], b"GFCHUNK1");
        assert_eq!(le_u64(&bytes[8..]), 1);
        assert_eq!(le_u64(&bytes[16..]) as usize, chunk.doc_lo);
        assert_eq!(le_u64(&bytes[24..]) as usize, chunk.doc_hi);
        assert_eq!(le_u64(&bytes[32..]) as usize, chunk.token_count());
        assert_eq!(
            bytes.len(),
            HEADER_BYTES + TOKEN_BYTES * chunk.token_count() + GROUP_BYTES * chunk.word_groups().len()
        );
    }

    #[test]
    fn store_round_trip_and_id_check() {
        let dir = tempfile::tempdir().unwrap();
        let store = ChunkStore::create(dir.path()).unwrap();
        for ch in sample_chunks(5) {
            store.write(&ch).unwrap();
            assert_eq!(store.read(ch.id).unwrap(), ch);
        }
        std::fs::copy(store.path_of(0), store.path_of(9)).unwrap();
        assert!(matches!(store.read(9), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_corruption() {
        let chunk = &sample_chunks(2)[0];
        let mut bytes = Vec::new();
        write_chunk(&mut bytes, chunk).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_chunk(&bad), Err(Error::Format(_))));

        assert!(matches!(decode_chunk(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));

        // Directory entry pointing at the wrong word.
        let mut bad = bytes.clone();
        let dir_start = HEADER_BYTES + TOKEN_BYTES * chunk.token_count();
        bad[dir_start] ^= 0x40;
        assert!(matches!(decode_chunk(&bad), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn encode_decode_identity(seed in any::<u64>()) {
            for ch in sample_chunks(seed) {
                let mut bytes = Vec::new();
                write_chunk(&mut bytes, &ch).unwrap();
                prop_assert_eq!(decode_chunk(&bytes).unwrap(), ch);
            }
        }
    }
}
