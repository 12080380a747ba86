//! One token's topic draw.
//!
//! The unnormalised weight of topic `k` for a token of word `v` in document
//! `d` is `(theta[d][k] + alpha) * p_star[k]` with
//! `p_star[k] = (phi[k][v] + beta) / (n[k] + beta * V)`. The sparse sampler
//! splits it into `p1[k] = theta[d][k] * p_star[k]` (nonzero only on the
//! document's K_d topics, mass `S`) and `p2[k] = alpha * p_star[k]` (dense,
//! shared by every token of the word, mass `Q`), picks a branch with
//! probability `S / (S + Q)` and searches the branch's partial-sum tree.

mod registry;

use rand::Rng;

pub use registry::{sampler_by_name, DenseSampler, SparseSampler, TokenSampler, SAMPLER_NAMES};

use crate::error::{Error, Result};
use crate::model::{PhiMatrix, RowRef, SparseRow};
use crate::ptree::{scaled_uniform, OverrideView, PrefixTree, DEFAULT_FANOUT};
use crate::real::Real;

/// Priors and switches shared by every draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerContext {
    pub k: usize,
    pub v: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Remove the token's own count from theta and phi before drawing.
    pub exclusion: bool,
    /// Rescale the branch uniform for the within-branch search instead of
    /// drawing a second one.
    pub reuse_uniform: bool,
    pub fanout: usize,
}

impl SamplerContext {
    pub fn new(k: usize, v: usize, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) || !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!(
                "alpha and beta must be positive, got {alpha} and {beta}"
            )));
        }
        if k == 0 || v == 0 {
            return Err(Error::Config(format!("K and V must be positive, got {k} and {v}")));
        }
        Ok(SamplerContext {
            k,
            v,
            alpha,
            beta,
            exclusion: true,
            reuse_uniform: false,
            fanout: DEFAULT_FANOUT,
        })
    }

    #[inline]
    fn p_star<R: Real>(&self, count: u64, total: u64) -> R {
        let beta = R::from_f64(self.beta);
        (R::from_count(count) + beta) / (R::from_count(total) + R::from_f64(self.beta * self.v as f64))
    }

    fn check_shape(&self, phi: &PhiMatrix, word: u32) -> Result<()> {
        if phi.k() != self.k || phi.v() != self.v {
            return Err(Error::Shape(format!(
                "phi is {}x{}, sampler expects {}x{}",
                phi.k(),
                phi.v(),
                self.k,
                self.v
            )));
        }
        if word as usize >= self.v {
            return Err(Error::Value(format!("word {word} >= V={}", self.v)));
        }
        Ok(())
    }
}

/// Per-word state reused by every token of one word group.
#[derive(Debug, Clone)]
pub struct WordContext<R: Real> {
    pub word: u32,
    pub p_star: Vec<R>,
    /// Partial-sum tree over `alpha * p_star`; its total is `Q`.
    pub q_tree: PrefixTree<R>,
}

impl<R: Real> WordContext<R> {
    pub fn q(&self) -> R {
        self.q_tree.total()
    }

    /// Recomputes `p_star[topic]` from live counts and refreshes the tree.
    pub fn refresh_topic(&mut self, ctx: &SamplerContext, phi: &PhiMatrix, topic: usize) {
        let p = ctx.p_star::<R>(phi.count(topic, self.word as usize) as u64, phi.topic_totals()[topic]);
        self.p_star[topic] = p;
        self.q_tree.update(topic, R::from_f64(ctx.alpha) * p);
    }
}

pub fn build_word_context<R: Real>(ctx: &SamplerContext, phi: &PhiMatrix, word: u32) -> Result<WordContext<R>> {
    ctx.check_shape(phi, word)?;
    let totals = phi.topic_totals();
    let p_star: Vec<R> = (0..ctx.k)
        .map(|k| ctx.p_star(phi.count(k, word as usize) as u64, totals[k]))
        .collect();
    let alpha = R::from_f64(ctx.alpha);
    let p2: Vec<R> = p_star.iter().map(|&p| alpha * p).collect();
    let q_tree = PrefixTree::build(&p2, ctx.fanout)?;
    Ok(WordContext { word, p_star, q_tree })
}

/// The current token's topic with its exclusion-adjusted `p_star`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Excluded<R: Real> {
    pub topic: u16,
    pub p_star: R,
}

fn excluded_p_star<R: Real>(
    ctx: &SamplerContext,
    phi: &PhiMatrix,
    word: u32,
    row: RowRef<'_>,
    topic: u16,
) -> Result<Excluded<R>> {
    if row.count_of(topic) == 0 {
        return Err(Error::Consistency(format!(
            "current topic {topic} absent from the document row"
        )));
    }
    let z = topic as usize;
    let count = phi.count(z, word as usize);
    let total = phi.topic_totals()[z];
    if count == 0 || total == 0 {
        return Err(Error::Consistency(format!(
            "current topic {topic} has no count for word {word} in phi"
        )));
    }
    Ok(Excluded {
        topic,
        p_star: ctx.p_star(count as u64 - 1, total - 1),
    })
}

/// Row entries with one count of `excluded` removed (entries reaching zero
/// are skipped).
fn adjusted_entries<'a>(row: RowRef<'a>, excluded: Option<u16>) -> impl Iterator<Item = (u16, u16)> + 'a {
    row.iter().filter_map(move |(z, c)| {
        let c = if Some(z) == excluded { c - 1 } else { c };
        (c > 0).then_some((z, c))
    })
}

/// Exclusion-adjusted views used for one draw; stored counts are untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedView<R: Real> {
    pub row: SparseRow,
    pub excluded: Excluded<R>,
}

pub fn exclusion_adjust<R: Real>(
    ctx: &SamplerContext,
    phi: &PhiMatrix,
    wctx: &WordContext<R>,
    row: RowRef<'_>,
    current_topic: u16,
) -> Result<AdjustedView<R>> {
    let excluded = excluded_p_star(ctx, phi, wctx.word, row, current_topic)?;
    let (topics, counts) = adjusted_entries(row, Some(current_topic)).unzip();
    Ok(AdjustedView {
        row: SparseRow { topics, counts },
        excluded,
    })
}

/// Per-draw scratch over the document's nonzero topics.
#[derive(Debug, Clone)]
pub struct DocDraw<R: Real> {
    pub topics: Vec<u16>,
    pub p1: Vec<R>,
    s_tree: PrefixTree<R>,
    s: R,
}

impl<R: Real> DocDraw<R> {
    pub fn new(fanout: usize) -> Self {
        DocDraw {
            topics: Vec::new(),
            p1: Vec::new(),
            s_tree: PrefixTree::build(&[R::ZERO], fanout).expect("fanout validated by caller"),
            s: R::ZERO,
        }
    }

    /// `S`, the total sparse mass.
    pub fn s(&self) -> R {
        self.s
    }

    fn fill(&mut self, wctx: &WordContext<R>, row: RowRef<'_>, excluded: Option<Excluded<R>>) -> Result<()> {
        self.topics.clear();
        self.p1.clear();
        for (z, c) in adjusted_entries(row, excluded.map(|e| e.topic)) {
            let p = match excluded {
                Some(e) if e.topic == z => e.p_star,
                _ => wctx.p_star[z as usize],
            };
            self.topics.push(z);
            self.p1.push(R::from_count(c as u64) * p);
        }
        if self.p1.is_empty() {
            self.s = R::ZERO;
        } else {
            self.s_tree.rebuild(&self.p1)?;
            self.s = self.s_tree.total();
        }
        Ok(())
    }
}

enum DenseBranch<'a, R: Real> {
    Plain(&'a PrefixTree<R>),
    Override(OverrideView<'a, R>),
}

impl<R: Real> DenseBranch<'_, R> {
    fn total(&self) -> R {
        match self {
            DenseBranch::Plain(t) => t.total(),
            DenseBranch::Override(v) => v.total(),
        }
    }

    fn sample(&self, u: R) -> Result<usize> {
        match self {
            DenseBranch::Plain(t) => t.sample(u),
            DenseBranch::Override(v) => v.sample(u),
        }
    }
}

struct Prepared<'a, R: Real> {
    dense: DenseBranch<'a, R>,
    excluded: Option<Excluded<R>>,
}

fn prepare<'a, R: Real>(
    ctx: &SamplerContext,
    phi: &PhiMatrix,
    wctx: &'a WordContext<R>,
    row: RowRef<'_>,
    current_topic: Option<u16>,
    draw: &mut DocDraw<R>,
) -> Result<Prepared<'a, R>> {
    let excluded = match current_topic {
        Some(z) if ctx.exclusion => Some(excluded_p_star(ctx, phi, wctx.word, row, z)?),
        _ => None,
    };
    draw.fill(wctx, row, excluded)?;
    let dense = match excluded {
        Some(e) => DenseBranch::Override(
            wctx.q_tree
                .with_override(e.topic as usize, R::from_f64(ctx.alpha) * e.p_star),
        ),
        None => DenseBranch::Plain(&wctx.q_tree),
    };
    Ok(Prepared { dense, excluded })
}

/// Decomposed draw: branch on `S / (S + Q)`, then search that branch's tree.
pub fn sample_sparse<R: Real, G: Rng + ?Sized>(
    ctx: &SamplerContext,
    phi: &PhiMatrix,
    wctx: &WordContext<R>,
    row: RowRef<'_>,
    current_topic: Option<u16>,
    draw: &mut DocDraw<R>,
    rng: &mut G,
) -> Result<u16> {
    let prepared = prepare(ctx, phi, wctx, row, current_topic, draw)?;
    let s = draw.s;
    let q = prepared.dense.total();
    let mass = s + q;
    if !(mass > R::ZERO) {
        return Err(Error::Internal(format!("non-positive sampling mass S={s} Q={q}")));
    }
    let u = R::uniform(rng);
    if s > R::ZERO && u <= s / mass {
        let u2 = if ctx.reuse_uniform {
            let x = u * mass;
            if x >= s {
                s.next_down()
            } else {
                x
            }
        } else {
            scaled_uniform(rng, s)
        };
        let j = draw.s_tree.sample(u2)?;
        Ok(draw.topics[j])
    } else {
        let u2 = if ctx.reuse_uniform {
            let x = u * mass - s;
            if x >= q {
                q.next_down()
            } else if x < R::ZERO {
                R::ZERO
            } else {
                x
            }
        } else {
            scaled_uniform(rng, q)
        };
        Ok(prepared.dense.sample(u2)? as u16)
    }
}

/// Topic probabilities induced by [`sample_sparse`] on this state: the
/// branch probability times the within-branch normalised weight, built from
/// the same `S`, `Q`, `p1` and `p2` values the draw uses.
pub fn sparse_distribution<R: Real>(
    ctx: &SamplerContext,
    phi: &PhiMatrix,
    wctx: &WordContext<R>,
    row: RowRef<'_>,
    current_topic: Option<u16>,
) -> Result<Vec<f64>> {
    let mut draw = DocDraw::new(ctx.fanout);
    let prepared = prepare(ctx, phi, wctx, row, current_topic, &mut draw)?;
    let s = draw.s;
    let q = prepared.dense.total();
    let mass = s + q;
    let sparse_branch = if s > R::ZERO { (s / mass).to_f64() } else { 0.0 };
    let mut probs: Vec<f64> = wctx
        .q_tree
        .leaves()
        .iter()
        .map(|&p2| (1.0 - sparse_branch) * p2.to_f64() / q.to_f64())
        .collect();
    if let Some(e) = prepared.excluded {
        let p2 = R::from_f64(ctx.alpha) * e.p_star;
        probs[e.topic as usize] = (1.0 - sparse_branch) * p2.to_f64() / q.to_f64();
    }
    for (&z, &p1) in draw.topics.iter().zip(&draw.p1) {
        probs[z as usize] += sparse_branch * p1.to_f64() / s.to_f64();
    }
    Ok(probs)
}

/// Unnormalised direct weights `(theta + alpha) * (phi + beta) / (n + beta V)`
/// over all topics, with the token's own counts removed when `current_topic`
/// is given and exclusion is on.
pub fn direct_weights<R: Real>(
    ctx: &SamplerContext,
    phi: &PhiMatrix,
    row: RowRef<'_>,
    word: u32,
    current_topic: Option<u16>,
) -> Result<Vec<R>> {
    ctx.check_shape(phi, word)?;
    let excluded = match current_topic {
        Some(z) if ctx.exclusion => {
            excluded_p_star::<R>(ctx, phi, word, row, z)?;
            Some(z)
        }
        _ => None,
    };
    let mut theta = vec![0u16; ctx.k];
    for (z, c) in adjusted_entries(row, excluded) {
        theta[z as usize] = c;
    }
    let alpha = R::from_f64(ctx.alpha);
    let totals = phi.topic_totals();
    Ok((0..ctx.k)
        .map(|k| {
            let own = (Some(k as u16) == excluded) as u64;
            let p = ctx.p_star::<R>(phi.count(k, word as usize) as u64 - own, totals[k] - own);
            (R::from_count(theta[k] as u64) + alpha) * p
        })
        .collect())
}

/// Direct draw over all K topics by a left-to-right prefix scan.
pub fn sample_dense<R: Real, G: Rng + ?Sized>(
    ctx: &SamplerContext,
    phi: &PhiMatrix,
    row: RowRef<'_>,
    word: u32,
    current_topic: Option<u16>,
    rng: &mut G,
) -> Result<u16> {
    let weights = direct_weights::<R>(ctx, phi, row, word, current_topic)?;
    let total = weights.iter().fold(R::ZERO, |a, &w| a + w);
    if !(total > R::ZERO) {
        return Err(Error::Internal("all-zero sampling mass".into()));
    }
    let u = scaled_uniform(rng, total);
    let mut acc = R::ZERO;
    let mut last_positive = 0;
    for (k, &w) in weights.iter().enumerate() {
        acc += w;
        if w > R::ZERO {
            last_positive = k;
        }
        if acc > u {
            return Ok(k as u16);
        }
    }
    Ok(last_positive as u16)
}
