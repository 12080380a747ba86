use rand::Rng;

use super::Corpus;
use crate::error::{Error, Result};
use crate::rng;

/// A run of tokens sharing one word inside a chunk's token arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WordGroup {
    pub word: u32,
    pub offset: usize,
    pub len: usize,
}

/// Per-document index over a chunk's tokens (CSR over local document ids).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DocWordMap {
    doc_ptr: Vec<usize>,
    token_idx: Vec<u32>,
}

impl DocWordMap {
    fn build(doc_lo: usize, doc_hi: usize, docs: &[u32]) -> Result<Self> {
        let n = doc_hi - doc_lo;
        let mut doc_ptr = vec![0usize; n + 1];
        for &d in docs {
            let d = d as usize;
            if d < doc_lo || d >= doc_hi {
                return Err(Error::Consistency(format!(
                    "token of document {d} outside chunk range [{doc_lo}, {doc_hi})"
                )));
            }
            doc_ptr[d - doc_lo + 1] += 1;
        }
        for i in 0..n {
            doc_ptr[i + 1] += doc_ptr[i];
        }
        let mut cursor = doc_ptr.clone();
        let mut token_idx = vec![0u32; docs.len()];
        for (t, &d) in docs.iter().enumerate() {
            let slot = &mut cursor[d as usize - doc_lo];
            token_idx[*slot] = t as u32;
            *slot += 1;
        }
        Ok(DocWordMap { doc_ptr, token_idx })
    }

    /// Token indices of the `local`-th document of the chunk.
    pub fn doc_tokens(&self, local: usize) -> &[u32] {
        &self.token_idx[self.doc_ptr[local]..self.doc_ptr[local + 1]]
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ptr.len() - 1
    }
}

/// A contiguous range of documents whose tokens are laid out grouped by word.
///
/// `docs`, `words` and `topics` are parallel per-token arrays in word-group
/// order; `topics` holds the current assignment of every token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub id: usize,
    pub doc_lo: usize,
    pub doc_hi: usize,
    docs: Vec<u32>,
    words: Vec<u32>,
    pub topics: Vec<u16>,
    word_groups: Vec<WordGroup>,
    doc_map: DocWordMap,
}

impl Chunk {
    /// Assembles a chunk from raw arrays, validating that the word groups tile
    /// the token arrays and rebuilding the document map.
    pub fn from_parts(
        id: usize,
        doc_lo: usize,
        doc_hi: usize,
        docs: Vec<u32>,
        words: Vec<u32>,
        topics: Vec<u16>,
        word_groups: Vec<WordGroup>,
    ) -> Result<Self> {
        let n = docs.len();
        if words.len() != n || topics.len() != n {
            return Err(Error::Consistency(format!(
                "token arrays disagree in length: docs {n}, words {}, topics {}",
                words.len(),
                topics.len()
            )));
        }
        if doc_lo >= doc_hi {
            return Err(Error::Consistency(format!("empty document range [{doc_lo}, {doc_hi})")));
        }
        let mut covered = vec![false; n];
        for g in &word_groups {
            let end = g
                .offset
                .checked_add(g.len)
                .filter(|&e| e <= n)
                .ok_or_else(|| Error::Consistency(format!("word group {} overruns {n} tokens", g.word)))?;
            for t in g.offset..end {
                if covered[t] {
                    return Err(Error::Consistency(format!("token {t} covered by two word groups")));
                }
                if words[t] != g.word {
                    return Err(Error::Consistency(format!(
                        "token {t} has word {} inside group of word {}",
                        words[t], g.word
                    )));
                }
                covered[t] = true;
            }
        }
        if let Some(t) = covered.iter().position(|c| !c) {
            return Err(Error::Consistency(format!("token {t} not covered by any word group")));
        }
        let doc_map = DocWordMap::build(doc_lo, doc_hi, &docs)?;
        Ok(Chunk {
            id,
            doc_lo,
            doc_hi,
            docs,
            words,
            topics,
            word_groups,
            doc_map,
        })
    }

    pub fn token_count(&self) -> usize {
        self.docs.len()
    }

    pub fn num_docs(&self) -> usize {
        self.doc_hi - self.doc_lo
    }

    pub fn docs(&self) -> &[u32] {
        &self.docs
    }

    pub fn words(&self) -> &[u32] {
        &self.words
    }

    pub fn word_groups(&self) -> &[WordGroup] {
        &self.word_groups
    }

    pub fn doc_map(&self) -> &DocWordMap {
        &self.doc_map
    }

    /// Word groups and per-token documents alongside mutable topics.
    pub fn groups_docs_topics_mut(&mut self) -> (&[WordGroup], &[u32], &mut [u16]) {
        (&self.word_groups, &self.docs, &mut self.topics)
    }

    /// Token indices of global document `doc`, which must lie in the chunk.
    pub fn doc_tokens(&self, doc: usize) -> &[u32] {
        self.doc_map.doc_tokens(doc - self.doc_lo)
    }
}

/// Splits documents into `c` contiguous ranges balanced by token count.
///
/// Documents are scanned in order and a boundary is placed as soon as the
/// running count reaches `ceil(remaining_tokens / remaining_chunks)`; every
/// chunk keeps at least one document. When that split leaves a token spread
/// wider than the longest document, the boundaries are replaced by a split
/// whose chunk sizes all fall in one window of that width.
pub fn chunk_boundaries(doc_lengths: &[u32], c: usize) -> Result<Vec<(usize, usize)>> {
    let d = doc_lengths.len();
    if c == 0 {
        return Err(Error::Partition("chunk count must be at least 1".into()));
    }
    if c > d {
        return Err(Error::Partition(format!(
            "cannot split {d} documents into {c} non-empty chunks"
        )));
    }
    let greedy = greedy_boundaries(doc_lengths, c);
    let max_len = doc_lengths.iter().copied().max().unwrap_or(0) as u64;
    if token_spread(doc_lengths, &greedy) <= max_len {
        return Ok(greedy);
    }
    let prefix: Vec<u64> = std::iter::once(0)
        .chain(doc_lengths.iter().scan(0u64, |acc, &l| {
            *acc += l as u64;
            Some(*acc)
        }))
        .collect();
    let total = prefix[d];
    let mean_floor = total / c as u64;
    let lowest = total.div_ceil(c as u64).saturating_sub(max_len);
    for lo in (lowest..=mean_floor).rev() {
        if let Some(bounds) = window_split(&prefix, c, lo.max(1), lo.max(1) + max_len) {
            return Ok(bounds);
        }
    }
    Ok(greedy)
}

fn greedy_boundaries(doc_lengths: &[u32], c: usize) -> Vec<(usize, usize)> {
    let d = doc_lengths.len();
    let mut remaining: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
    let mut out = Vec::with_capacity(c);
    let mut lo = 0usize;
    for chunk in 0..c {
        let chunks_left = c - chunk;
        if chunks_left == 1 {
            out.push((lo, d));
            break;
        }
        let target = remaining.div_ceil(chunks_left as u64);
        let mut hi = lo + 1;
        let mut running = doc_lengths[lo] as u64;
        // Docs after `hi` must still cover the chunks after this one.
        while running < target && d - (hi + 1) >= chunks_left - 1 {
            running += doc_lengths[hi] as u64;
            hi += 1;
        }
        out.push((lo, hi));
        remaining -= running;
        lo = hi;
    }
    out
}

fn token_spread(doc_lengths: &[u32], bounds: &[(usize, usize)]) -> u64 {
    let sizes = bounds
        .iter()
        .map(|&(lo, hi)| doc_lengths[lo..hi].iter().map(|&l| l as u64).sum::<u64>());
    let (min, max) = sizes.fold((u64::MAX, 0), |(mn, mx), s| (mn.min(s), mx.max(s)));
    max - min
}

/// Exactly `c` contiguous ranges whose token counts all lie in `[lo, hi]`,
/// if such a split exists.
///
/// For every prefix the reachable range counts form an interval, tracked as
/// `(fewest, most)` with sliding-window minima and maxima over the admissible
/// predecessors; the split is then traced back from the end.
fn window_split(prefix: &[u64], c: usize, lo: u64, hi: u64) -> Option<Vec<(usize, usize)>> {
    use std::collections::VecDeque;
    let d = prefix.len() - 1;
    let mut fewest = vec![usize::MAX; d + 1];
    let mut most = vec![0usize; d + 1];
    fewest[0] = 0;
    let reachable = |fewest: &[usize], i: usize| fewest[i] != usize::MAX;
    let (mut min_q, mut max_q) = (VecDeque::<usize>::new(), VecDeque::<usize>::new());
    let mut next_in = 0usize;
    for j in 1..=d {
        // Admissible predecessors i satisfy lo <= prefix[j] - prefix[i] <= hi.
        while next_in < j && prefix[j] - prefix[next_in] >= lo {
            if reachable(&fewest, next_in) {
                while min_q.back().is_some_and(|&b| fewest[b] >= fewest[next_in]) {
                    min_q.pop_back();
                }
                min_q.push_back(next_in);
                while max_q.back().is_some_and(|&b| most[b] <= most[next_in]) {
                    max_q.pop_back();
                }
                max_q.push_back(next_in);
            }
            next_in += 1;
        }
        while min_q.front().is_some_and(|&f| prefix[j] - prefix[f] > hi) {
            min_q.pop_front();
        }
        while max_q.front().is_some_and(|&f| prefix[j] - prefix[f] > hi) {
            max_q.pop_front();
        }
        if let (Some(&a), Some(&b)) = (min_q.front(), max_q.front()) {
            fewest[j] = fewest[a] + 1;
            most[j] = most[b] + 1;
        }
    }
    if !reachable(&fewest, d) || !(fewest[d]..=most[d]).contains(&c) {
        return None;
    }
    let mut out = Vec::with_capacity(c);
    let (mut j, mut need) = (d, c);
    while j > 0 {
        let i = (0..j).rev().find(|&i| {
            let s = prefix[j] - prefix[i];
            (lo..=hi).contains(&s) && reachable(&fewest, i) && (fewest[i]..=most[i]).contains(&(need - 1))
        })?;
        out.push((i, j));
        j = i;
        need -= 1;
    }
    (need == 0).then(|| {
        out.reverse();
        out
    })
}

/// Partitions the corpus into `c` chunks of whole documents and draws a
/// uniform initial topic in `[0, k)` for every token.
///
/// Within a chunk, tokens are grouped by ascending word id and, inside a
/// group, ordered by document. Initial topics come from the stream keyed by
/// `(seed, chunk_id)` in that token order.
pub fn partition(corpus: &Corpus, c: usize, k: usize, seed: u64) -> Result<Vec<Chunk>> {
    if k == 0 || k > 1 << 16 {
        return Err(Error::Value(format!("topic count {k} outside 1..=65536")));
    }
    if corpus.is_empty() {
        return Err(Error::Partition("corpus has no tokens".into()));
    }
    let bounds = chunk_boundaries(corpus.doc_lengths(), c)?;
    let v = corpus.vocab_size();
    let mut word_counts = vec![0usize; v];

    bounds
        .into_iter()
        .enumerate()
        .map(|(id, (lo, hi))| {
            word_counts.iter_mut().for_each(|x| *x = 0);
            for d in lo..hi {
                for (w, n) in corpus.doc_entries(d) {
                    word_counts[w as usize] += n as usize;
                }
            }
            let mut groups = Vec::new();
            let mut cursor = vec![0usize; v];
            let mut offset = 0;
            for (w, &n) in word_counts.iter().enumerate() {
                if n > 0 {
                    groups.push(WordGroup {
                        word: w as u32,
                        offset,
                        len: n,
                    });
                    cursor[w] = offset;
                    offset += n;
                }
            }
            let total = offset;
            let mut docs = vec![0u32; total];
            let mut words = vec![0u32; total];
            for d in lo..hi {
                for (w, n) in corpus.doc_entries(d) {
                    let at = &mut cursor[w as usize];
                    for slot in *at..*at + n as usize {
                        docs[slot] = d as u32;
                        words[slot] = w;
                    }
                    *at += n as usize;
                }
            }
            let mut stream = rng::init_stream(seed, id);
            let topics = (0..total).map(|_| stream.gen_range(0..k) as u16).collect();
            Chunk::from_parts(id, lo, hi, docs, words, topics, groups)
        })
        .collect()
}

/// Reorders word groups heaviest first (ties by ascending word id) and
/// permutes the token arrays so the layout follows the new group order.
pub fn sort_word_groups_desc(chunk: Chunk) -> Chunk {
    let mut order = chunk.word_groups.clone();
    order.sort_by(|a, b| b.len.cmp(&a.len).then(a.word.cmp(&b.word)));

    let n = chunk.token_count();
    let mut docs = Vec::with_capacity(n);
    let mut words = Vec::with_capacity(n);
    let mut topics = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(order.len());
    for g in order {
        groups.push(WordGroup {
            word: g.word,
            offset: docs.len(),
            len: g.len,
        });
        let range = g.offset..g.offset + g.len;
        docs.extend_from_slice(&chunk.docs[range.clone()]);
        words.extend_from_slice(&chunk.words[range.clone()]);
        topics.extend_from_slice(&chunk.topics[range]);
    }
    let doc_map = DocWordMap::build(chunk.doc_lo, chunk.doc_hi, &docs).expect("permutation preserves document range");
    Chunk {
        docs,
        words,
        topics,
        word_groups: groups,
        doc_map,
        ..chunk
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus_from_lengths(lengths: &[u32], v: usize) -> Corpus {
        let vocab = (0..v).map(|i| format!("w{i}")).collect();
        let triples = lengths
            .iter()
            .enumerate()
            .flat_map(|(d, &len)| (0..len).map(move |t| (d as u32, (t as usize % v) as u32, 1)));
        Corpus::from_triples(lengths.len(), vocab, triples).unwrap()
    }

    fn ranges_tokens(lengths: &[u32], bounds: &[(usize, usize)]) -> Vec<u64> {
        bounds
            .iter()
            .map(|&(lo, hi)| lengths[lo..hi].iter().map(|&l| l as u64).sum())
            .collect()
    }

    #[test]
    fn greedy_split_examples() {
        let b = chunk_boundaries(&[5, 3, 2, 6], 2).unwrap();
        assert_eq!(b, vec![(0, 2), (2, 4)]);
        assert_eq!(ranges_tokens(&[5, 3, 2, 6], &b), vec![8, 8]);

        let b = chunk_boundaries(&[10, 1, 1], 2).unwrap();
        assert_eq!(b, vec![(0, 1), (1, 3)]);
        assert_eq!(ranges_tokens(&[10, 1, 1], &b), vec![10, 2]);

        assert_eq!(chunk_boundaries(&[4, 4, 4], 1).unwrap(), vec![(0, 3)]);
    }

    #[test]
    fn rebalances_when_greedy_overshoots() {
        // The plain scan gives [12, 1], a spread wider than the longest document.
        let b = chunk_boundaries(&[6, 6, 1], 2).unwrap();
        assert_eq!(ranges_tokens(&[6, 6, 1], &b), vec![6, 7]);

        let lengths = [1, 1, 4, 7, 32, 1, 30, 24, 28, 17, 26, 39, 1, 1, 33];
        let b = chunk_boundaries(&lengths, 9).unwrap();
        let sizes = ranges_tokens(&lengths, &b);
        assert_eq!(sizes.len(), 9);
        assert!(
            sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 39,
            "{sizes:?}"
        );
    }

    #[test]
    fn too_many_chunks() {
        assert!(matches!(chunk_boundaries(&[1, 2], 3), Err(Error::Partition(_))));
        assert!(matches!(chunk_boundaries(&[1, 2], 0), Err(Error::Partition(_))));
    }

    #[test]
    fn single_chunk_holds_everything() {
        let c = corpus_from_lengths(&[3, 1, 4], 3);
        let chunks = partition(&c, 1, 4, 9).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!((chunks[0].doc_lo, chunks[0].doc_hi), (0, 3));
        assert_eq!(chunks[0].token_count(), 8);
    }

    #[test]
    fn word_groups_are_sorted_by_word_after_partition() {
        let c = corpus_from_lengths(&[3, 5], 4);
        let chunk = &partition(&c, 1, 3, 1).unwrap()[0];
        let ws: Vec<u32> = chunk.word_groups().iter().map(|g| g.word).collect();
        assert_eq!(ws, vec![0, 1, 2, 3]);
        for g in chunk.word_groups() {
            let docs = &chunk.docs()[g.offset..g.offset + g.len];
            assert!(docs.windows(2).all(|p| p[0] <= p[1]));
        }
    }

    fn chunk_with_group_sizes(sizes: &[usize]) -> Chunk {
        let vocab = (0..sizes.len()).map(|i| format!("w{i}")).collect();
        let triples = sizes.iter().enumerate().map(|(w, &n)| (0u32, w as u32, n as u32));
        let c = Corpus::from_triples(1, vocab, triples).unwrap();
        partition(&c, 1, 8, 3).unwrap().remove(0)
    }

    #[test]
    fn heavy_groups_first() {
        let chunk = sort_word_groups_desc(chunk_with_group_sizes(&[2, 9, 9, 1]));
        let ws: Vec<u32> = chunk.word_groups().iter().map(|g| g.word).collect();
        assert_eq!(ws, vec![1, 2, 0, 3]);
        let offsets: Vec<usize> = chunk.word_groups().iter().map(|g| g.offset).collect();
        assert_eq!(offsets, vec![0, 9, 18, 20]);
    }

    #[test]
    fn singleton_and_tie_only_orders() {
        let one = chunk_with_group_sizes(&[5]);
        assert_eq!(sort_word_groups_desc(one.clone()), one);

        let flat = sort_word_groups_desc(chunk_with_group_sizes(&[1, 1, 1, 1]));
        let ws: Vec<u32> = flat.word_groups().iter().map(|g| g.word).collect();
        assert_eq!(ws, vec![0, 1, 2, 3]);
    }

    #[test]
    fn sorting_keeps_token_topic_pairs() {
        let chunk = chunk_with_group_sizes(&[3, 7, 2, 7]);
        let mut before: Vec<(u32, u32, u16)> = (0..chunk.token_count())
            .map(|t| (chunk.docs()[t], chunk.words()[t], chunk.topics[t]))
            .collect();
        let sorted = sort_word_groups_desc(chunk);
        let mut after: Vec<(u32, u32, u16)> = (0..sorted.token_count())
            .map(|t| (sorted.docs()[t], sorted.words()[t], sorted.topics[t]))
            .collect();
        before.sort();
        after.sort();
        assert_eq!(before, after);
    }

    #[test]
    fn invalid_topic_count() {
        let c = corpus_from_lengths(&[2], 2);
        assert!(partition(&c, 1, 0, 0).is_err());
        assert!(partition(&c, 1, 70_000, 0).is_err());
    }

    proptest! {
        #[test]
        fn partition_invariants(
            lengths in prop::collection::vec(1u32..40, 1..40),
            c_frac in 0.0f64..1.0,
            k in 1usize..20,
            seed in any::<u64>(),
        ) {
            let d = lengths.len();
            let c = 1 + ((d - 1) as f64 * c_frac) as usize;
            let corpus = corpus_from_lengths(&lengths, 7);
            let chunks = partition(&corpus, c, k, seed).unwrap();
            prop_assert_eq!(chunks.len(), c);

            // Token conservation and whole-document ownership.
            let total: usize = chunks.iter().map(|ch| ch.token_count()).sum();
            prop_assert_eq!(total as u64, corpus.num_tokens());
            let mut next_doc = 0;
            for ch in &chunks {
                prop_assert_eq!(ch.doc_lo, next_doc);
                prop_assert!(ch.doc_hi > ch.doc_lo);
                next_doc = ch.doc_hi;
                let expect: u32 = lengths[ch.doc_lo..ch.doc_hi].iter().sum();
                prop_assert_eq!(ch.token_count(), expect as usize);
            }
            prop_assert_eq!(next_doc, d);

            // Balance bound.
            let sizes: Vec<usize> = chunks.iter().map(|ch| ch.token_count()).collect();
            let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
            prop_assert!(spread as u32 <= *lengths.iter().max().unwrap(),
                "sizes {:?} spread {} lengths {:?}", sizes, spread, lengths);

            for ch in &chunks {
                // Word-group completeness.
                let grouped: usize = ch.word_groups().iter().map(|g| g.len).sum();
                prop_assert_eq!(grouped, ch.token_count());
                for g in ch.word_groups() {
                    prop_assert!(ch.words()[g.offset..g.offset + g.len].iter().all(|&w| w == g.word));
                }
                // The document map indexes the same token set.
                let mut seen: Vec<u32> = (ch.doc_lo..ch.doc_hi)
                    .flat_map(|doc| ch.doc_tokens(doc).to_vec())
                    .collect();
                seen.sort_unstable();
                prop_assert_eq!(seen, (0..ch.token_count() as u32).collect::<Vec<_>>());
                prop_assert!(ch.topics.iter().all(|&z| (z as usize) < k));
            }

            // Determinism.
            prop_assert_eq!(partition(&corpus, c, k, seed).unwrap(), chunks);
        }
    }
}
