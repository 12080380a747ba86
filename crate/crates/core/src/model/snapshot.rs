//! Model snapshot files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "GFSNAP1"
//! u64 K, u64 V, u64 D, u64 NNZ, u64 phi_width (16 or 32)
//! K*V phi counts, topic-major, phi_width bits each
//! K   u64 topic totals
//! D+1 u64 theta row pointers
//! NNZ u16 theta topic ids
//! NNZ u16 theta counts
//! u64 metadata length, then that many bytes of UTF-8 "key=value\n" lines
//! ```

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{PhiMatrix, PhiWidth, ThetaRows};
use crate::error::{Error, Result};

pub const SNAPSHOT_MAGIC: &[u8; 7] = b"GFSNAP1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub theta: ThetaRows,
    pub phi: PhiMatrix,
    /// Configuration provenance, in insertion order.
    pub metadata: Vec<(String, String)>,
}

impl Snapshot {
    pub fn metadata_value(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let (theta, phi) = (&self.theta, &self.phi);
        if theta.doc_lo() != 0 || theta.k() != phi.k() {
            return Err(Error::Shape("snapshot needs full theta rows matching phi's K".into()));
        }
        let mut out = Vec::new();
        out.extend_from_slice(SNAPSHOT_MAGIC);
        for f in [
            phi.k() as u64,
            phi.v() as u64,
            theta.num_docs() as u64,
            theta.nnz() as u64,
            phi.width().bits(),
        ] {
            out.extend_from_slice(&f.to_le_bytes());
        }
        for c in phi.to_topic_major() {
            match phi.width() {
                PhiWidth::W16 => out.extend_from_slice(&(c as u16).to_le_bytes()),
                PhiWidth::W32 => out.extend_from_slice(&c.to_le_bytes()),
            }
        }
        for &t in phi.topic_totals() {
            out.extend_from_slice(&t.to_le_bytes());
        }
        for &p in theta.row_ptr() {
            out.extend_from_slice(&(p as u64).to_le_bytes());
        }
        for &z in theta.topic_ids() {
            out.extend_from_slice(&z.to_le_bytes());
        }
        for &c in theta.counts() {
            out.extend_from_slice(&c.to_le_bytes());
        }
        let mut meta = String::new();
        for (k, v) in &self.metadata {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(Error::Value(format!("metadata entry {k:?} cannot be encoded")));
            }
            meta.push_str(k);
            meta.push('=');
            meta.push_str(v);
            meta.push('\n');
        }
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(7)? != SNAPSHOT_MAGIC {
            return Err(Error::Format("bad snapshot magic (expected GFSNAP1)".into()));
        }
        let k = r.u64()? as usize;
        let v = r.u64()? as usize;
        let d = r.u64()? as usize;
        let nnz = r.u64()? as usize;
        let width = PhiWidth::from_bits(r.u64()?).map_err(|e| Error::Format(e.to_string()))?;
        let cells = k.checked_mul(v).ok_or_else(|| Error::Format("K*V overflows".into()))?;
        let mut counts = Vec::with_capacity(cells.min(bytes.len()));
        for _ in 0..cells {
            counts.push(match width {
                PhiWidth::W16 => r.u16()? as u32,
                PhiWidth::W32 => r.u32()?,
            });
        }
        let phi = PhiMatrix::from_topic_major(k, v, width, &counts)?;
        for topic in 0..k {
            let stored = r.u64()?;
            if stored != phi.topic_totals()[topic] {
                return Err(Error::Format(format!(
                    "stored total {stored} for topic {topic} disagrees with its row sum {}",
                    phi.topic_totals()[topic]
                )));
            }
        }
        let row_ptr = (0..=d)
            .map(|_| r.u64().map(|x| x as usize))
            .collect::<Result<Vec<_>>>()?;
        let topic_ids = (0..nnz).map(|_| r.u16()).collect::<Result<Vec<_>>>()?;
        let theta_counts = (0..nnz).map(|_| r.u16()).collect::<Result<Vec<_>>>()?;
        let theta = ThetaRows::from_csr(k, 0, row_ptr, topic_ids, theta_counts)?;
        let meta_len = r.u64()? as usize;
        let meta = std::str::from_utf8(r.take(meta_len)?).map_err(|_| Error::Format("metadata is not UTF-8".into()))?;
        if r.at != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.at)));
        }
        let metadata = meta
            .lines()
            .map(|line| {
                line.split_once('=')
                    .map(|(a, b)| (a.to_string(), b.to_string()))
                    .ok_or_else(|| Error::Format(format!("metadata line without '=': {line:?}")))
            })
            .collect::<Result<_>>()?;
        Ok(Snapshot { theta, phi, metadata })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.encode()?;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        out.write_all(&bytes)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Snapshot::decode(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated snapshot at byte {}", self.at)))?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RowRef;

    fn small(width: PhiWidth) -> Snapshot {
        let phi = PhiMatrix::from_topic_major(2, 3, width, &[1, 0, 2, 0, 1, 0]).unwrap();
        let mut theta = ThetaRows::empty(2, 0);
        theta.push_row(RowRef {
            topics: &[0, 1],
            counts: &[2, 1],
        });
        theta.push_row(RowRef {
            topics: &[0],
            counts: &[1],
        });
        Snapshot {
            theta,
            phi,
            metadata: vec![("topics".into(), "2".into()), ("seed".into(), "42".into())],
        }
    }

    #[test]
    fn layout_of_header_and_phi() {
        let bytes = small(PhiWidth::W16).encode().unwrap();
        assert_eq!(&bytes[..7], b"GFSNAP1");
        let field = |i: usize| u64::from_le_bytes(bytes[7 + 8 * i..15 + 8 * i].try_into().unwrap());
        assert_eq!([field(0), field(1), field(2), field(3), field(4)], [2, 3, 2, 3, 16]);
        // First phi cells, topic-major, 16-bit.
        assert_eq!(&bytes[47..53], &[1, 0, 0, 0, 2, 0]);
    }

    #[test]
    fn round_trip_both_widths() {
        for w in [PhiWidth::W16, PhiWidth::W32] {
            let s = small(w);
            let back = Snapshot::decode(&s.encode().unwrap()).unwrap();
            assert_eq!(back, s);
            assert_eq!(back.metadata_value("seed"), Some("42"));
        }
    }

    #[test]
    fn corrupt_inputs() {
        let bytes = small(PhiWidth::W32).encode().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Snapshot::decode(&bad), Err(Error::Format(_))));
        assert!(matches!(
            Snapshot::decode(&bytes[..bytes.len() - 1]),
            Err(Error::Format(_))
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(Snapshot::decode(&long), Err(Error::Format(_))));
    }
}
