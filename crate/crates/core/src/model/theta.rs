use crate::corpus::Chunk;
use crate::error::{Error, Result};

/// Borrowed sparse row: strictly increasing topic ids with positive counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowRef<'a> {
    pub topics: &'a [u16],
    pub counts: &'a [u16],
}

impl<'a> RowRef<'a> {
    pub const EMPTY: RowRef<'static> = RowRef {
        topics: &[],
        counts: &[],
    };

    pub fn nnz(&self) -> usize {
        self.topics.len()
    }

    pub fn sum(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn count_of(&self, topic: u16) -> u16 {
        match self.topics.binary_search(&topic) {
            Ok(i) => self.counts[i],
            Err(_) => 0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (u16, u16)> + 'a {
        self.topics.iter().copied().zip(self.counts.iter().copied())
    }

    pub fn to_owned(&self) -> SparseRow {
        SparseRow {
            topics: self.topics.to_vec(),
            counts: self.counts.to_vec(),
        }
    }
}

/// Owned sparse row.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SparseRow {
    pub topics: Vec<u16>,
    pub counts: Vec<u16>,
}

impl SparseRow {
    pub fn as_ref(&self) -> RowRef<'_> {
        RowRef {
            topics: &self.topics,
            counts: &self.counts,
        }
    }

    /// Adds one to `topic`, inserting it in order if absent.
    pub fn increment(&mut self, topic: u16) -> Result<()> {
        match self.topics.binary_search(&topic) {
            Ok(i) => {
                self.counts[i] = self.counts[i]
                    .checked_add(1)
                    .ok_or_else(|| Error::Overflow(format!("theta count for topic {topic} exceeds 65535")))?;
            }
            Err(i) => {
                self.topics.insert(i, topic);
                self.counts.insert(i, 1);
            }
        }
        Ok(())
    }

    /// Subtracts one from `topic`, dropping the entry when it reaches zero.
    pub fn decrement(&mut self, topic: u16) -> Result<()> {
        let i = self
            .topics
            .binary_search(&topic)
            .map_err(|_| Error::Consistency(format!("topic {topic} absent from row")))?;
        if self.counts[i] == 1 {
            self.topics.remove(i);
            self.counts.remove(i);
        } else {
            self.counts[i] -= 1;
        }
        Ok(())
    }
}

/// Document-topic counts in compressed-row form for documents
/// `[doc_lo, doc_lo + num_docs)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThetaRows {
    k: usize,
    doc_lo: usize,
    row_ptr: Vec<usize>,
    topic_ids: Vec<u16>,
    counts: Vec<u16>,
}

impl ThetaRows {
    pub fn empty(k: usize, doc_lo: usize) -> Self {
        ThetaRows {
            k,
            doc_lo,
            row_ptr: vec![0],
            topic_ids: Vec::new(),
            counts: Vec::new(),
        }
    }

    /// Assembles rows from raw CSR arrays, checking row ordering.
    pub fn from_csr(
        k: usize,
        doc_lo: usize,
        row_ptr: Vec<usize>,
        topic_ids: Vec<u16>,
        counts: Vec<u16>,
    ) -> Result<Self> {
        if row_ptr.first() != Some(&0) || row_ptr.last() != Some(&topic_ids.len()) || topic_ids.len() != counts.len() {
            return Err(Error::Format("inconsistent CSR arrays".into()));
        }
        for w in row_ptr.windows(2) {
            if w[0] > w[1] {
                return Err(Error::Format("row pointers decrease".into()));
            }
            let row = &topic_ids[w[0]..w[1]];
            if row.windows(2).any(|p| p[0] >= p[1]) || row.iter().any(|&t| t as usize >= k) {
                return Err(Error::Format("row topics not strictly increasing below K".into()));
            }
        }
        if counts.contains(&0) {
            return Err(Error::Format("zero count stored in sparse row".into()));
        }
        Ok(ThetaRows {
            k,
            doc_lo,
            row_ptr,
            topic_ids,
            counts,
        })
    }

    pub fn push_row(&mut self, row: RowRef<'_>) {
        debug_assert!(row.topics.windows(2).all(|p| p[0] < p[1]));
        self.topic_ids.extend_from_slice(row.topics);
        self.counts.extend_from_slice(row.counts);
        self.row_ptr.push(self.topic_ids.len());
    }

    /// Concatenates consecutive slices into one set of rows.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a ThetaRows>) -> Result<Self> {
        let mut parts = parts.into_iter().peekable();
        let first = parts.peek().ok_or_else(|| Error::Shape("no theta slices".into()))?;
        let mut out = ThetaRows::empty(first.k, first.doc_lo);
        for p in parts {
            if p.k != out.k || p.doc_lo != out.doc_hi() {
                return Err(Error::Shape(format!(
                    "slice at doc {} (K={}) does not follow doc {} (K={})",
                    p.doc_lo,
                    p.k,
                    out.doc_hi(),
                    out.k
                )));
            }
            for d in 0..p.num_docs() {
                out.push_row(p.row(d));
            }
        }
        Ok(out)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn doc_lo(&self) -> usize {
        self.doc_lo
    }

    pub fn doc_hi(&self) -> usize {
        self.doc_lo + self.num_docs()
    }

    pub fn num_docs(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.topic_ids.len()
    }

    /// Row of the `local`-th document of this slice.
    pub fn row(&self, local: usize) -> RowRef<'_> {
        let r = self.row_ptr[local]..self.row_ptr[local + 1];
        RowRef {
            topics: &self.topic_ids[r.clone()],
            counts: &self.counts[r],
        }
    }

    /// Row of global document `doc`.
    pub fn row_of_doc(&self, doc: usize) -> RowRef<'_> {
        self.row(doc - self.doc_lo)
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn topic_ids(&self) -> &[u16] {
        &self.topic_ids
    }

    pub fn counts(&self) -> &[u16] {
        &self.counts
    }
}

/// Reusable scratch for rebuilding rows: a dense K-histogram per document,
/// compacted through an exclusive prefix sum over its nonzero flags.
#[derive(Debug, Clone)]
pub struct ThetaBuilder {
    hist: Vec<u32>,
    slot: Vec<u32>,
}

impl ThetaBuilder {
    pub fn new(k: usize) -> Self {
        ThetaBuilder {
            hist: vec![0; k],
            slot: vec![0; k],
        }
    }

    fn histogram(&mut self, chunk: &Chunk, doc: usize) -> Result<usize> {
        if doc < chunk.doc_lo || doc >= chunk.doc_hi {
            return Err(Error::Value(format!(
                "document {doc} outside chunk range [{}, {})",
                chunk.doc_lo, chunk.doc_hi
            )));
        }
        let k = self.hist.len();
        for &t in chunk.doc_tokens(doc) {
            let z = chunk.topics[t as usize] as usize;
            if z >= k {
                return Err(Error::Consistency(format!("token {t} has topic {z} >= K={k}")));
            }
            self.hist[z] += 1;
        }
        // Exclusive scan over nonzero flags gives each topic its output slot.
        let mut nnz = 0u32;
        for (s, &h) in self.slot.iter_mut().zip(&self.hist) {
            *s = nnz;
            nnz += (h > 0) as u32;
        }
        Ok(nnz as usize)
    }

    fn compact_into(&mut self, doc: usize, topics: &mut [u16], counts: &mut [u16]) -> Result<()> {
        let mut overflow = None;
        for (z, h) in self.hist.iter_mut().enumerate() {
            if *h > 0 {
                if *h > u16::MAX as u32 {
                    overflow = Some(*h);
                }
                let s = self.slot[z] as usize;
                topics[s] = z as u16;
                counts[s] = (*h).min(u16::MAX as u32) as u16;
                *h = 0;
            }
        }
        match overflow {
            Some(h) => Err(Error::Overflow(format!(
                "document {doc} has a topic count of {h} > 65535"
            ))),
            None => Ok(()),
        }
    }

    pub fn row(&mut self, chunk: &Chunk, doc: usize) -> Result<SparseRow> {
        let nnz = self.histogram(chunk, doc)?;
        let mut row = SparseRow {
            topics: vec![0; nnz],
            counts: vec![0; nnz],
        };
        self.compact_into(doc, &mut row.topics, &mut row.counts)?;
        Ok(row)
    }

    /// Rebuilds the rows of every document in the chunk.
    pub fn rebuild_slice(&mut self, chunk: &Chunk) -> Result<ThetaRows> {
        let mut out = ThetaRows::empty(self.hist.len(), chunk.doc_lo);
        out.topic_ids.reserve(chunk.token_count());
        out.counts.reserve(chunk.token_count());
        for doc in chunk.doc_lo..chunk.doc_hi {
            let nnz = self.histogram(chunk, doc)?;
            let start = out.topic_ids.len();
            out.topic_ids.resize(start + nnz, 0);
            out.counts.resize(start + nnz, 0);
            self.compact_into(doc, &mut out.topic_ids[start..], &mut out.counts[start..])?;
            out.row_ptr.push(out.topic_ids.len());
        }
        Ok(out)
    }
}

/// Rebuilds the sparse row of `doc` from the chunk's current assignments.
pub fn rebuild_theta_row(chunk: &Chunk, doc: usize, k: usize) -> Result<SparseRow> {
    ThetaBuilder::new(k).row(chunk, doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{partition, Corpus};
    use proptest::prelude::*;

    fn one_doc_chunk(topics: &[u16]) -> Chunk {
        let n = topics.len();
        let vocab = vec!["w".to_string()];
        let c = Corpus::from_triples(1, vocab, [(0, 0, n as u32)]).unwrap();
        let mut chunk = partition(&c, 1, 1, 0).unwrap().remove(0);
        chunk.topics.copy_from_slice(topics);
        chunk
    }

    #[test]
    fn histogram_row() {
        let row = rebuild_theta_row(&one_doc_chunk(&[2, 2, 0]), 0, 4).unwrap();
        assert_eq!(row.topics, vec![0, 2]);
        assert_eq!(row.counts, vec![1, 2]);

        let row = rebuild_theta_row(&one_doc_chunk(&[7]), 0, 8).unwrap();
        assert_eq!((row.topics, row.counts), (vec![7], vec![1]));
    }

    #[test]
    fn sixteen_bit_overflow_names_document() {
        let chunk = one_doc_chunk(&vec![3u16; 70_000]);
        match rebuild_theta_row(&chunk, 0, 4) {
            Err(Error::Overflow(msg)) => assert!(msg.contains("document 0"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn doc_outside_chunk() {
        assert!(rebuild_theta_row(&one_doc_chunk(&[0]), 1, 2).is_err());
    }

    #[test]
    fn sparse_row_edits() {
        let mut r = SparseRow::default();
        for z in [5, 1, 5, 3] {
            r.increment(z).unwrap();
        }
        assert_eq!((r.topics.clone(), r.counts.clone()), (vec![1, 3, 5], vec![1, 1, 2]));
        r.decrement(1).unwrap();
        r.decrement(5).unwrap();
        assert_eq!((r.topics.clone(), r.counts.clone()), (vec![3, 5], vec![1, 1]));
        assert!(r.decrement(9).is_err());
    }

    #[test]
    fn concat_requires_adjacent_slices() {
        let mut a = ThetaRows::empty(4, 0);
        a.push_row(RowRef {
            topics: &[1],
            counts: &[2],
        });
        let mut b = ThetaRows::empty(4, 1);
        b.push_row(RowRef {
            topics: &[0, 3],
            counts: &[1, 1],
        });
        let all = ThetaRows::concat([&a, &b]).unwrap();
        assert_eq!(all.num_docs(), 2);
        assert_eq!(all.row_of_doc(1).topics, &[0, 3]);
        assert!(ThetaRows::concat([&b, &a]).is_err());
    }

    /// Naive oracle: count every topic, keep the nonzero ones in order.
    fn count_then_filter(topics: &[u16], k: usize) -> (Vec<u16>, Vec<u16>) {
        let mut counts = vec![0u16; k];
        for &z in topics {
            counts[z as usize] += 1;
        }
        (0..k).filter(|&z| counts[z] > 0).map(|z| (z as u16, counts[z])).unzip()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn matches_count_then_filter(k in 1usize..80, raw in prop::collection::vec(any::<u16>(), 1..200)) {
            let topics: Vec<u16> = raw.iter().map(|&z| z % k as u16).collect();
            let row = rebuild_theta_row(&one_doc_chunk(&topics), 0, k).unwrap();
            let (t, c) = count_then_filter(&topics, k);
            prop_assert_eq!(&row.topics, &t);
            prop_assert_eq!(&row.counts, &c);
            prop_assert_eq!(row.as_ref().sum(), topics.len() as u64);
            prop_assert!(row.topics.len() <= k.min(topics.len()));
        }
    }
}
