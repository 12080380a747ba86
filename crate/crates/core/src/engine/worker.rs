//! Sampling passes over one chunk.

use crate::corpus::Chunk;
use crate::error::{Error, Result};
use crate::model::{PhiMatrix, SparseRow, ThetaRows};
use crate::real::Real;
use crate::rng::Stream;
use crate::sampler::{build_word_context, DocDraw, SamplerContext, TokenSampler};

/// Work done by one pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PassStats {
    pub word_contexts: usize,
    pub draws: usize,
}

/// Deferred pass: every draw reads the iteration-start `phi` and `theta`,
/// with the token's own count excluded from both; only the assignments
/// change.
pub fn sample_chunk<R: Real>(
    chunk: &mut Chunk,
    phi: &PhiMatrix,
    theta: &ThetaRows,
    ctx: &SamplerContext,
    sampler: &dyn TokenSampler<R>,
    rng: &mut Stream,
) -> Result<PassStats> {
    if theta.doc_lo() != chunk.doc_lo || theta.doc_hi() != chunk.doc_hi {
        return Err(Error::Shape(format!(
            "theta covers documents [{}, {}), chunk {} covers [{}, {})",
            theta.doc_lo(),
            theta.doc_hi(),
            chunk.id,
            chunk.doc_lo,
            chunk.doc_hi
        )));
    }
    let mut stats = PassStats::default();
    let mut scratch = DocDraw::new(ctx.fanout);
    let (groups, docs, topics) = chunk.groups_docs_topics_mut();
    for g in groups {
        let wctx = build_word_context::<R>(ctx, phi, g.word)?;
        stats.word_contexts += 1;
        for t in g.offset..g.offset + g.len {
            let row = theta.row_of_doc(docs[t] as usize);
            topics[t] = sampler.draw(ctx, phi, &wctx, row, Some(topics[t]), &mut scratch, rng)?;
            stats.draws += 1;
        }
    }
    Ok(stats)
}

/// Exact pass: classic per-token Gibbs updates on live counts. `rows` holds
/// the chunk's documents in order. With exclusion on, each token's counts are
/// removed before its draw and restored under the new topic after it.
pub fn sample_chunk_exact<R: Real>(
    chunk: &mut Chunk,
    phi: &mut PhiMatrix,
    rows: &mut [SparseRow],
    ctx: &SamplerContext,
    sampler: &dyn TokenSampler<R>,
    rng: &mut Stream,
) -> Result<PassStats> {
    if rows.len() != chunk.num_docs() {
        return Err(Error::Shape(format!(
            "{} theta rows for chunk {} of {} documents",
            rows.len(),
            chunk.id,
            chunk.num_docs()
        )));
    }
    let doc_lo = chunk.doc_lo;
    let mut stats = PassStats::default();
    let mut scratch = DocDraw::new(ctx.fanout);
    let (groups, docs, topics) = chunk.groups_docs_topics_mut();
    for g in groups {
        let word = g.word as usize;
        let mut wctx = build_word_context::<R>(ctx, phi, g.word)?;
        stats.word_contexts += 1;
        for t in g.offset..g.offset + g.len {
            let row = &mut rows[docs[t] as usize - doc_lo];
            let old = topics[t];
            if ctx.exclusion {
                row.decrement(old)?;
                phi.decrement(old as usize, word)?;
                wctx.refresh_topic(ctx, phi, old as usize);
            }
            let new = sampler.draw(ctx, phi, &wctx, row.as_ref(), None, &mut scratch, rng)?;
            if ctx.exclusion || new != old {
                if !ctx.exclusion {
                    row.decrement(old)?;
                    phi.decrement(old as usize, word)?;
                    wctx.refresh_topic(ctx, phi, old as usize);
                }
                row.increment(new)?;
                phi.increment(new as usize, word)?;
                wctx.refresh_topic(ctx, phi, new as usize);
            }
            topics[t] = new;
            stats.draws += 1;
        }
    }
    Ok(stats)
}
