//! Memory footprints and the choice of chunks per worker.

use crate::corpus::{chunk_boundaries, Corpus};
use crate::error::{Error, Result};
use crate::model::PhiWidth;

/// Bytes per token: doc and word ids (4 + 4), topic (2), document-map index
/// (4) and at most one theta entry (2 + 2).
pub const BYTES_PER_TOKEN: u64 = 18;
/// Bytes per document: document-map and theta row pointers.
pub const BYTES_PER_DOC: u64 = 16;
/// Bytes per word group: word id and padded offset/length.
pub const BYTES_PER_GROUP: u64 = 24;

/// Resident size of one chunk with `tokens` tokens, `docs` documents and
/// `groups` distinct words.
pub fn chunk_footprint(tokens: u64, docs: u64, groups: u64) -> u64 {
    BYTES_PER_TOKEN * tokens + BYTES_PER_DOC * docs + BYTES_PER_GROUP * groups
}

/// One worker's replica plus the shared global snapshot, each `K x V` counts
/// of `width` bytes and `K` 64-bit totals.
pub fn model_footprint(k: usize, v: usize, width: PhiWidth) -> u64 {
    2 * (k as u64 * v as u64 * width.bytes() + 8 * k as u64)
}

/// Footprint of each document range in `bounds`.
pub fn range_footprints(corpus: &Corpus, bounds: &[(usize, usize)]) -> Vec<u64> {
    let mut seen = vec![usize::MAX; corpus.vocab_size()];
    bounds
        .iter()
        .enumerate()
        .map(|(i, &(lo, hi))| {
            let mut tokens = 0u64;
            let mut groups = 0u64;
            for d in lo..hi {
                tokens += corpus.doc_lengths()[d] as u64;
                for (w, _) in corpus.doc_entries(d) {
                    let mark = &mut seen[w as usize];
                    if *mark != i {
                        *mark = i;
                        groups += 1;
                    }
                }
            }
            chunk_footprint(tokens, (hi - lo) as u64, groups)
        })
        .collect()
}

/// Smallest `M` for which a worker's working set fits in `budget` bytes.
///
/// With `M = 1` every chunk stays resident, so one chunk and the model must
/// fit. With `M > 1` chunks stream through a double buffer, so two copies of
/// the largest chunk at `C = M * G` plus the model must fit.
pub fn choose_m(corpus: &Corpus, k: usize, workers: usize, width: PhiWidth, budget: u64) -> Result<usize> {
    let model = model_footprint(k, corpus.vocab_size(), width);
    let d = corpus.num_docs();
    if workers == 0 || workers > d {
        return Err(Error::Capacity(format!(
            "cannot spread {d} documents over {workers} workers"
        )));
    }
    if model >= budget {
        return Err(Error::Capacity(format!(
            "model alone needs {model} bytes, budget is {budget}; raise --memory-budget"
        )));
    }
    let singles = range_footprints(corpus, &(0..d).map(|i| (i, i + 1)).collect::<Vec<_>>());
    let smallest_possible = singles.iter().copied().max().unwrap_or(0);
    let fits = |m: usize, max_chunk: u64| {
        let copies = if m == 1 { 1 } else { 2 };
        copies * max_chunk + model <= budget
    };
    for m in 1..=d / workers {
        if m > 1 && !fits(m, smallest_possible) {
            break;
        }
        let bounds = chunk_boundaries(corpus.doc_lengths(), m * workers)?;
        let max_chunk = range_footprints(corpus, &bounds).into_iter().max().unwrap_or(0);
        if fits(m, max_chunk) {
            return Ok(m);
        }
    }
    Err(Error::Capacity(format!(
        "no chunking of {d} documents over {workers} workers fits {budget} bytes \
         (model {model} bytes, largest document {smallest_possible} bytes); \
         raise --memory-budget or add workers"
    )))
}
