use crate::corpus::Chunk;
use crate::error::{Error, Result};

/// Storage width of a topic-word count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhiWidth {
    W16,
    #[default]
    W32,
}

impl PhiWidth {
    pub fn bits(self) -> u64 {
        match self {
            PhiWidth::W16 => 16,
            PhiWidth::W32 => 32,
        }
    }

    pub fn bytes(self) -> u64 {
        self.bits() / 8
    }

    pub fn from_bits(bits: u64) -> Result<Self> {
        match bits {
            16 => Ok(PhiWidth::W16),
            32 => Ok(PhiWidth::W32),
            other => Err(Error::Value(format!("phi width must be 16 or 32, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Counts {
    U16(Vec<u16>),
    U32(Vec<u32>),
}

/// Dense topic-word counts with 64-bit per-topic totals.
///
/// Counts are held word-major (`v * K + k`) so that one word's column over
/// all topics is contiguous; [`Snapshot`](super::Snapshot) files use the
/// topic-major layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhiMatrix {
    k: usize,
    v: usize,
    counts: Counts,
    topic_totals: Vec<u64>,
}

/// A worker's private topic-word counts, covering only its own chunks.
pub type PhiReplica = PhiMatrix;

impl PhiMatrix {
    pub fn zeros(k: usize, v: usize, width: PhiWidth) -> Self {
        let counts = match width {
            PhiWidth::W16 => Counts::U16(vec![0; k * v]),
            PhiWidth::W32 => Counts::U32(vec![0; k * v]),
        };
        PhiMatrix {
            k,
            v,
            counts,
            topic_totals: vec![0; k],
        }
    }

    /// Builds a matrix from topic-major counts, recomputing totals.
    pub fn from_topic_major(k: usize, v: usize, width: PhiWidth, counts: &[u32]) -> Result<Self> {
        if counts.len() != k * v {
            return Err(Error::Shape(format!("{} counts for a {k}x{v} matrix", counts.len())));
        }
        let mut m = PhiMatrix::zeros(k, v, width);
        for topic in 0..k {
            for word in 0..v {
                m.set_raw(topic, word, counts[topic * v + word])?;
            }
        }
        m.recompute_totals();
        Ok(m)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn width(&self) -> PhiWidth {
        match self.counts {
            Counts::U16(_) => PhiWidth::W16,
            Counts::U32(_) => PhiWidth::W32,
        }
    }

    pub fn topic_totals(&self) -> &[u64] {
        &self.topic_totals
    }

    #[inline]
    pub fn count(&self, topic: usize, word: usize) -> u32 {
        let i = word * self.k + topic;
        match &self.counts {
            Counts::U16(c) => c[i] as u32,
            Counts::U32(c) => c[i],
        }
    }

    /// Writes a cell without touching the totals.
    fn set_raw(&mut self, topic: usize, word: usize, value: u32) -> Result<()> {
        let i = word * self.k + topic;
        match &mut self.counts {
            Counts::U16(c) => {
                c[i] = u16::try_from(value)
                    .map_err(|_| Error::Overflow(format!("phi[{topic}][{word}] = {value} exceeds 16-bit storage")))?
            }
            Counts::U32(c) => c[i] = value,
        }
        Ok(())
    }

    pub fn increment(&mut self, topic: usize, word: usize) -> Result<()> {
        let i = word * self.k + topic;
        let ok = match &mut self.counts {
            Counts::U16(c) => c[i].checked_add(1).map(|x| c[i] = x).is_some(),
            Counts::U32(c) => c[i].checked_add(1).map(|x| c[i] = x).is_some(),
        };
        if !ok {
            return Err(Error::Overflow(format!(
                "phi[{topic}][{word}] overflows {} bits",
                self.width().bits()
            )));
        }
        self.topic_totals[topic] += 1;
        Ok(())
    }

    pub fn decrement(&mut self, topic: usize, word: usize) -> Result<()> {
        if self.count(topic, word) == 0 || self.topic_totals[topic] == 0 {
            return Err(Error::Consistency(format!("phi[{topic}][{word}] is already zero")));
        }
        let i = word * self.k + topic;
        match &mut self.counts {
            Counts::U16(c) => c[i] -= 1,
            Counts::U32(c) => c[i] -= 1,
        }
        self.topic_totals[topic] -= 1;
        Ok(())
    }

    pub fn recompute_totals(&mut self) {
        let k = self.k;
        let mut totals = vec![0u64; k];
        match &self.counts {
            Counts::U16(c) => c
                .chunks(k.max(1))
                .for_each(|col| col.iter().zip(&mut totals).for_each(|(&x, t)| *t += x as u64)),
            Counts::U32(c) => c
                .chunks(k.max(1))
                .for_each(|col| col.iter().zip(&mut totals).for_each(|(&x, t)| *t += x as u64)),
        }
        self.topic_totals = totals;
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &PhiMatrix) -> Result<()> {
        if (self.k, self.v, self.width()) != (other.k, other.v, other.width()) {
            return Err(Error::Shape(format!(
                "cannot add {}x{} ({}-bit) into {}x{} ({}-bit)",
                other.k,
                other.v,
                other.width().bits(),
                self.k,
                self.v,
                self.width().bits()
            )));
        }
        let k = self.k;
        match (&mut self.counts, &other.counts) {
            (Counts::U16(a), Counts::U16(b)) => {
                for (i, (x, &y)) in a.iter_mut().zip(b).enumerate() {
                    *x = x.checked_add(y).ok_or_else(|| {
                        Error::Overflow(format!("phi[{}][{}] overflows 16 bits during reduce", i % k, i / k))
                    })?;
                }
            }
            (Counts::U32(a), Counts::U32(b)) => {
                for (i, (x, &y)) in a.iter_mut().zip(b).enumerate() {
                    *x = x.checked_add(y).ok_or_else(|| {
                        Error::Overflow(format!("phi[{}][{}] overflows 32 bits during reduce", i % k, i / k))
                    })?;
                }
            }
            _ => unreachable!("widths checked above"),
        }
        for (t, &o) in self.topic_totals.iter_mut().zip(&other.topic_totals) {
            *t += o;
        }
        Ok(())
    }

    /// Topic-major copy of the counts.
    pub fn to_topic_major(&self) -> Vec<u32> {
        let mut out = vec![0u32; self.k * self.v];
        for word in 0..self.v {
            for topic in 0..self.k {
                out[topic * self.v + word] = self.count(topic, word);
            }
        }
        out
    }

    /// Sum of row `topic` over all words, recomputed from the cells.
    pub fn row_sum(&self, topic: usize) -> u64 {
        (0..self.v).map(|w| self.count(topic, w) as u64).sum()
    }

    pub fn total(&self) -> u64 {
        self.topic_totals.iter().sum()
    }
}

/// Adds every token of `chunk` into `replica` at `(topic, word)`.
///
/// Word groups touch disjoint word columns, so groups never contend for a
/// cell; the sequential group-by-group pass yields the same counts any
/// concurrent accumulation would.
pub fn accumulate_chunk(replica: &mut PhiReplica, chunk: &Chunk) -> Result<()> {
    let k = replica.k;
    for g in chunk.word_groups() {
        if g.word as usize >= replica.v {
            return Err(Error::Shape(format!("word {} >= V={}", g.word, replica.v)));
        }
        for &z in &chunk.topics[g.offset..g.offset + g.len] {
            if z as usize >= k {
                return Err(Error::Consistency(format!("topic {z} >= K={k}")));
            }
            replica.increment(z as usize, g.word as usize)?;
        }
    }
    Ok(())
}

/// Counts a chunk's tokens into a fresh replica.
pub fn rebuild_phi_replica(chunk: &Chunk, k: usize, v: usize, width: PhiWidth) -> Result<PhiReplica> {
    let mut replica = PhiMatrix::zeros(k, v, width);
    accumulate_chunk(&mut replica, chunk)?;
    Ok(replica)
}
