//! Named token samplers selectable at runtime.

use super::{sample_dense, sample_sparse, DocDraw, SamplerContext, WordContext};
use crate::error::Result;
use crate::model::{PhiMatrix, RowRef};
use crate::real::Real;
use crate::rng::Stream;

pub trait TokenSampler<R: Real>: Send + Sync {
    fn name(&self) -> &'static str;

    /// Draws a topic for one token of `wctx.word` in the document `row`.
    #[allow(clippy::too_many_arguments)]
    fn draw(
        &self,
        ctx: &SamplerContext,
        phi: &PhiMatrix,
        wctx: &WordContext<R>,
        row: RowRef<'_>,
        current_topic: Option<u16>,
        scratch: &mut DocDraw<R>,
        rng: &mut Stream,
    ) -> Result<u16>;
}

/// Sparse/dense decomposition with tree search in both branches.
#[derive(Debug, Default, Clone, Copy)]
pub struct SparseSampler;

impl<R: Real> TokenSampler<R> for SparseSampler {
    fn name(&self) -> &'static str {
        "sparse"
    }

    fn draw(
        &self,
        ctx: &SamplerContext,
        phi: &PhiMatrix,
        wctx: &WordContext<R>,
        row: RowRef<'_>,
        current_topic: Option<u16>,
        scratch: &mut DocDraw<R>,
        rng: &mut Stream,
    ) -> Result<u16> {
        sample_sparse(ctx, phi, wctx, row, current_topic, scratch, rng)
    }
}

/// Direct O(K) evaluation; ignores the word context.
#[derive(Debug, Default, Clone, Copy)]
pub struct DenseSampler;

impl<R: Real> TokenSampler<R> for DenseSampler {
    fn name(&self) -> &'static str {
        "dense"
    }

    fn draw(
        &self,
        ctx: &SamplerContext,
        phi: &PhiMatrix,
        wctx: &WordContext<R>,
        row: RowRef<'_>,
        current_topic: Option<u16>,
        _scratch: &mut DocDraw<R>,
        rng: &mut Stream,
    ) -> Result<u16> {
        sample_dense::<R, _>(ctx, phi, row, wctx.word, current_topic, rng)
    }
}

pub const SAMPLER_NAMES: &[&str] = &["sparse", "dense"];

pub fn sampler_by_name<R: Real>(name: &str) -> Option<Box<dyn TokenSampler<R>>> {
    match name {
        "sparse" => Some(Box::new(SparseSampler)),
        "dense" => Some(Box::new(DenseSampler)),
        _ => None,
    }
}
