//! Training orchestration.
//!
//! Chunk `i` belongs to worker `i mod G`. Each iteration every worker samples
//! its chunks in ascending id order against one shared snapshot of the
//! global topic-word counts, accumulating the new assignments into a private
//! replica. The replicas are then summed by a pairwise tree reduce and the
//! result is published as the next snapshot; the document-topic rows are
//! rebuilt while the reduce runs.

mod capacity;
mod schedule;
mod sync;
mod worker;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

pub use capacity::{
    choose_m, chunk_footprint, model_footprint, range_footprints, BYTES_PER_DOC, BYTES_PER_GROUP, BYTES_PER_TOKEN,
};
pub use schedule::{Resident, Schedule, Streaming};
pub use sync::{broadcast_phi, reduce_phi, ReduceRound};
pub use worker::{sample_chunk, sample_chunk_exact, PassStats};

use crate::corpus::{partition, sort_word_groups_desc, Chunk, ChunkStore, Corpus};
use crate::error::{Error, Result};
use crate::eval;
use crate::model::{
    accumulate_chunk, check_conservation, ConservationReport, PhiMatrix, PhiWidth, SparseRow, ThetaBuilder, ThetaRows,
};
use crate::ptree::DEFAULT_FANOUT;
use crate::real::{Precision, Real};
use crate::rng::sample_stream;
use crate::sampler::{sampler_by_name, SamplerContext, TokenSampler};

/// How counts are updated during a pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Per-token updates on live counts; single worker only.
    Exact,
    /// Draws read the iteration-start model; counts are rebuilt after the pass.
    #[default]
    Deferred,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Mode::Exact),
            "deferred" => Ok(Mode::Deferred),
            _ => Err(Error::Config(format!("unknown mode {s:?}, expected exact or deferred"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Exact => "exact",
            Mode::Deferred => "deferred",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub topics: usize,
    /// Document-topic prior; `None` means `50 / K`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub workers: usize,
    /// `None` picks `M` from `memory_budget`, or 1 without a budget.
    pub chunks_per_worker: Option<usize>,
    pub seed: u64,
    pub mode: Mode,
    pub fanout: usize,
    pub phi_width: PhiWidth,
    pub memory_budget: Option<u64>,
    pub precision: Precision,
    /// Registered token sampler name.
    pub sampler: String,
    pub exclusion: bool,
    pub reuse_uniform: bool,
    /// Rebuild theta while the replica reduce runs rather than after it.
    pub overlap_theta: bool,
    /// Evaluate the log-likelihood every this many iterations (and after the
    /// last one); 0 disables evaluation.
    pub eval_every: usize,
    pub check_conservation: bool,
    /// Directory for the chunk store when chunks stream; a temporary
    /// directory is used when unset.
    pub chunk_dir: Option<PathBuf>,
}

impl TrainConfig {
    pub fn new(topics: usize, iterations: usize) -> Self {
        TrainConfig {
            topics,
            alpha: None,
            beta: 0.01,
            iterations,
            workers: 1,
            chunks_per_worker: None,
            seed: 42,
            mode: Mode::Deferred,
            fanout: DEFAULT_FANOUT,
            phi_width: PhiWidth::W32,
            memory_budget: None,
            precision: Precision::Single,
            sampler: "sparse".into(),
            exclusion: true,
            reuse_uniform: false,
            overlap_theta: true,
            eval_every: 1,
            check_conservation: true,
            chunk_dir: None,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.topics as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.topics == 0 || self.topics >= 1 << 16 {
            return Err(Error::Config(format!("topic count {} outside 1..65536", self.topics)));
        }
        if self.workers == 0 {
            return Err(Error::Config("at least one worker is required".into()));
        }
        if self.chunks_per_worker == Some(0) {
            return Err(Error::Config("chunks per worker must be at least 1".into()));
        }
        if self.mode == Mode::Exact && self.workers != 1 {
            return Err(Error::Config(format!(
                "exact mode requires a single worker, got {}",
                self.workers
            )));
        }
        if self.fanout < 2 {
            return Err(Error::Config(format!("fanout must be at least 2, got {}", self.fanout)));
        }
        if !crate::sampler::SAMPLER_NAMES.contains(&self.sampler.as_str()) {
            return Err(Error::Config(format!(
                "unknown sampler {:?}, expected one of {:?}",
                self.sampler,
                crate::sampler::SAMPLER_NAMES
            )));
        }
        self.sampler_context(1)?;
        Ok(())
    }

    pub fn sampler_context(&self, vocab_size: usize) -> Result<SamplerContext> {
        let mut ctx = SamplerContext::new(self.topics, vocab_size, self.alpha(), self.beta)?;
        ctx.exclusion = self.exclusion;
        ctx.reuse_uniform = self.reuse_uniform;
        ctx.fanout = self.fanout;
        Ok(ctx)
    }

    /// Chunks per worker: the configured value, else the budget-driven
    /// choice, else 1.
    pub fn resolve_chunks_per_worker(&self, corpus: &Corpus) -> Result<usize> {
        match (self.chunks_per_worker, self.memory_budget) {
            (Some(m), _) => Ok(m),
            (None, Some(budget)) => choose_m(corpus, self.topics, self.workers, self.phi_width, budget),
            (None, None) => Ok(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    /// 1-based iteration number.
    pub iteration: usize,
    pub elapsed_sec: f64,
    pub tokens_per_sec: f64,
    pub loglik_per_token: Option<f64>,
    pub conservation: Option<ConservationReport>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub theta: ThetaRows,
    pub phi: PhiMatrix,
    pub reports: Vec<IterationReport>,
    /// Log-likelihood of the random initialisation, when evaluation is on.
    pub initial_loglik: Option<f64>,
    pub chunks_per_worker: usize,
    /// Final chunks with their assignments, ordered by id.
    pub chunks: Vec<Chunk>,
    /// Merge rounds of the last replica reduce.
    pub reduce_rounds: Vec<ReduceRound>,
}

/// Trains with the sampler and precision named in `cfg`.
pub fn train(corpus: &Corpus, cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    match cfg.precision {
        Precision::Single => {
            let sampler = sampler_by_name::<f32>(&cfg.sampler).expect("validated sampler name");
            train_with_sampler(corpus, cfg, sampler.as_ref())
        }
        Precision::Double => {
            let sampler = sampler_by_name::<f64>(&cfg.sampler).expect("validated sampler name");
            train_with_sampler(corpus, cfg, sampler.as_ref())
        }
    }
}

/// Trains with a caller-supplied token sampler; `cfg.sampler` and
/// `cfg.precision` are ignored.
pub fn train_with_sampler<R: Real>(
    corpus: &Corpus,
    cfg: &TrainConfig,
    sampler: &dyn TokenSampler<R>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Value("cannot train on an empty corpus".into()));
    }
    let ctx = cfg.sampler_context(corpus.vocab_size())?;
    let m = cfg.resolve_chunks_per_worker(corpus)?;
    let g = cfg.workers;
    let c = m
        .checked_mul(g)
        .ok_or_else(|| Error::Config(format!("{m} chunks per worker times {g} workers overflows")))?;
    let chunks: Vec<Chunk> = partition(corpus, c, cfg.topics, cfg.seed)?
        .into_iter()
        .map(sort_word_groups_desc)
        .collect();

    let mut builder = ThetaBuilder::new(cfg.topics);
    let theta: Vec<ThetaRows> = chunks
        .iter()
        .map(|ch| builder.rebuild_slice(ch))
        .collect::<Result<_>>()?;
    let mut replicas = vec![PhiMatrix::zeros(cfg.topics, corpus.vocab_size(), cfg.phi_width); g];
    for ch in &chunks {
        accumulate_chunk(&mut replicas[ch.id % g], ch)?;
    }
    let (phi, reduce_rounds) = reduce_phi(replicas)?;

    let schedule: Box<dyn Schedule> = if m == 1 {
        Box::new(Resident::new(chunks))
    } else {
        let (dir, owned) = match &cfg.chunk_dir {
            Some(d) => (d.clone(), false),
            None => (temp_store_dir(), true),
        };
        Box::new(Streaming::new(ChunkStore::create(dir)?, chunks, owned)?)
    };

    let mut state = State {
        corpus,
        cfg,
        ctx,
        workers: g,
        num_chunks: c,
        schedule,
        theta,
        phi,
        reduce_rounds,
    };
    state.check(None)?;
    let initial_loglik = if cfg.eval_every > 0 {
        Some(state.loglik()?)
    } else {
        None
    };

    let mut reports = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let start = Instant::now();
        match cfg.mode {
            Mode::Exact => state.exact_pass(sampler, iteration)?,
            Mode::Deferred => state.deferred_pass(sampler, iteration)?,
        }
        let elapsed_sec = start.elapsed().as_secs_f64().max(1e-9);
        let conservation = state.check(Some(iteration + 1))?;
        let evaluate = cfg.eval_every > 0 && ((iteration + 1) % cfg.eval_every == 0 || iteration + 1 == cfg.iterations);
        reports.push(IterationReport {
            iteration: iteration + 1,
            elapsed_sec,
            tokens_per_sec: eval::tokens_per_sec(corpus.num_tokens(), 1, elapsed_sec)?,
            loglik_per_token: if evaluate { Some(state.loglik()?) } else { None },
            conservation,
        });
    }

    let theta = ThetaRows::concat(&state.theta)?;
    Ok(TrainOutput {
        theta,
        phi: state.phi,
        reports,
        initial_loglik,
        chunks_per_worker: m,
        chunks: state.schedule.into_chunks()?,
        reduce_rounds: state.reduce_rounds,
    })
}

/// Chunk ids of each worker: chunk `i` goes to worker `i mod workers`, in
/// ascending order.
pub fn round_robin(num_chunks: usize, workers: usize) -> Vec<Vec<usize>> {
    (0..workers)
        .map(|w| (w..num_chunks).step_by(workers).collect())
        .collect()
}

fn temp_store_dir() -> PathBuf {
    static COUNTER: AtomicUsize = AtomicUsize::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    std::env::temp_dir().join(format!("gflda-chunks-{}-{n}", std::process::id()))
}

struct State<'a> {
    corpus: &'a Corpus,
    cfg: &'a TrainConfig,
    ctx: SamplerContext,
    workers: usize,
    num_chunks: usize,
    schedule: Box<dyn Schedule>,
    /// One slice of document-topic rows per chunk.
    theta: Vec<ThetaRows>,
    phi: PhiMatrix,
    reduce_rounds: Vec<ReduceRound>,
}

impl State<'_> {
    fn check(&self, iteration: Option<usize>) -> Result<Option<ConservationReport>> {
        if !self.cfg.check_conservation {
            return Ok(None);
        }
        let theta = ThetaRows::concat(&self.theta)?;
        let report = check_conservation(&theta, &self.phi, self.corpus);
        debug_assert!(report.passed(), "conservation failed: {report:?}");
        if let Some(v) = &report.violation {
            let when = iteration.map_or("after initialisation".to_string(), |i| format!("after iteration {i}"));
            return Err(Error::Consistency(format!("{when}: {v}")));
        }
        Ok(Some(report))
    }

    fn loglik(&self) -> Result<f64> {
        let theta = ThetaRows::concat(&self.theta)?;
        eval::loglik_per_token(&theta, &self.phi, self.corpus, self.cfg.alpha(), self.cfg.beta)
    }

    fn exact_pass<R: Real>(&mut self, sampler: &dyn TokenSampler<R>, iteration: usize) -> Result<()> {
        let mut rows: Vec<Vec<SparseRow>> = self
            .theta
            .iter()
            .map(|slice| (0..slice.num_docs()).map(|d| slice.row(d).to_owned()).collect())
            .collect();
        let (ctx, seed) = (self.ctx, self.cfg.seed);
        let phi = &mut self.phi;
        let ids = (0..self.num_chunks).collect::<Vec<_>>();
        self.schedule.visit(&ids, &mut |chunk| {
            let id = chunk.id;
            let mut rng = sample_stream(seed, id, iteration);
            catch_unwind(AssertUnwindSafe(|| {
                sample_chunk_exact(chunk, phi, &mut rows[id], &ctx, sampler, &mut rng)
            }))
            .map_err(|_| Error::WorkerPanic { chunk: id })??;
            Ok(())
        })?;
        for (slice, rows) in self.theta.iter_mut().zip(&rows) {
            let mut rebuilt = ThetaRows::empty(self.cfg.topics, slice.doc_lo());
            for r in rows {
                rebuilt.push_row(r.as_ref());
            }
            *slice = rebuilt;
        }
        Ok(())
    }

    fn deferred_pass<R: Real>(&mut self, sampler: &dyn TokenSampler<R>, iteration: usize) -> Result<()> {
        let g = self.workers;
        let (k, v, width) = (self.cfg.topics, self.corpus.vocab_size(), self.cfg.phi_width);
        let (ctx, seed) = (self.ctx, self.cfg.seed);
        let resident = self.schedule.resident();
        let snapshots = broadcast_phi(std::mem::replace(&mut self.phi, PhiMatrix::zeros(0, 0, width)), g);
        let next_theta: Vec<Mutex<Option<ThetaRows>>> = (0..self.num_chunks).map(|_| Mutex::new(None)).collect();
        let current: Vec<AtomicUsize> = (0..g).map(AtomicUsize::new).collect();
        let worker_ids = round_robin(self.num_chunks, g);
        let (schedule, theta) = (self.schedule.as_ref(), &self.theta);

        let replicas: Vec<Result<PhiMatrix>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..g)
                .map(|w| {
                    let (phi, ids, current, next_theta) =
                        (Arc::clone(&snapshots[w]), &worker_ids[w], &current[w], &next_theta);
                    scope.spawn(move || -> Result<PhiMatrix> {
                        let mut replica = PhiMatrix::zeros(k, v, width);
                        let mut builder = ThetaBuilder::new(k);
                        schedule.visit(ids, &mut |chunk| {
                            let id = chunk.id;
                            current.store(id, Ordering::Relaxed);
                            let mut rng = sample_stream(seed, id, iteration);
                            catch_unwind(AssertUnwindSafe(|| {
                                sample_chunk(chunk, &phi, &theta[id], &ctx, sampler, &mut rng)
                            }))
                            .map_err(|_| Error::WorkerPanic { chunk: id })??;
                            accumulate_chunk(&mut replica, chunk)?;
                            if !resident {
                                *lock(&next_theta[id])? = Some(builder.rebuild_slice(chunk)?);
                            }
                            Ok(())
                        })?;
                        Ok(replica)
                    })
                })
                .collect();
            handles
                .into_iter()
                .zip(&current)
                .map(|(h, cur)| {
                    h.join().unwrap_or_else(|_| {
                        Err(Error::WorkerPanic {
                            chunk: cur.load(Ordering::Relaxed),
                        })
                    })
                })
                .collect()
        });
        drop(snapshots);
        let replicas = replicas.into_iter().collect::<Result<Vec<_>>>()?;

        let rebuild = |ids: &[usize]| -> Result<()> {
            let mut builder = ThetaBuilder::new(k);
            schedule.visit(ids, &mut |chunk| {
                *lock(&next_theta[chunk.id])? = Some(builder.rebuild_slice(chunk)?);
                Ok(())
            })
        };
        let (reduced, rebuilt) = if resident && self.cfg.overlap_theta {
            std::thread::scope(|scope| {
                let reduce = scope.spawn(|| reduce_phi(replicas));
                let rebuilders: Vec<_> = worker_ids.iter().map(|ids| scope.spawn(|| rebuild(ids))).collect();
                let rebuilt = rebuilders.into_iter().try_for_each(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err(Error::Internal("theta rebuild panicked".into())))
                });
                let reduced = reduce
                    .join()
                    .unwrap_or_else(|_| Err(Error::Internal("reduce panicked".into())));
                (reduced, rebuilt)
            })
        } else {
            let reduced = reduce_phi(replicas);
            let rebuilt = if resident {
                worker_ids.iter().try_for_each(|ids| rebuild(ids))
            } else {
                Ok(())
            };
            (reduced, rebuilt)
        };
        rebuilt?;
        let (phi, rounds) = reduced?;
        self.phi = phi;
        self.reduce_rounds = rounds;
        for (slot, next) in self.theta.iter_mut().zip(next_theta) {
            *slot = next
                .into_inner()
                .map_err(|_| Error::Internal("theta slot poisoned".into()))?
                .ok_or_else(|| Error::Internal("chunk theta not rebuilt".into()))?;
        }
        Ok(())
    }
}

fn lock<T>(m: &Mutex<T>) -> Result<std::sync::MutexGuard<'_, T>> {
    m.lock().map_err(|_| Error::Internal("lock poisoned".into()))
}
