//! Replica synchronisation: pairwise tree reduce, then broadcast.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{PhiMatrix, PhiReplica};

/// `(destination, source)` merges of one reduce round.
pub type ReduceRound = Vec<(usize, usize)>;

/// Sums the replicas in `ceil(log2 G)` rounds. In round `r`, replica `j`
/// receives replica `j + 2^r` for every `j` that is a multiple of `2^(r+1)`;
/// absent partners are skipped. Merges of one round run concurrently.
///
/// Returns the sum (held by replica 0) and the merges performed per round.
pub fn reduce_phi(mut replicas: Vec<PhiReplica>) -> Result<(PhiMatrix, Vec<ReduceRound>)> {
    let g = replicas.len();
    let first = replicas
        .first()
        .ok_or_else(|| Error::Value("reduce needs at least one replica".into()))?;
    let (k, v, width) = (first.k(), first.v(), first.width());
    if let Some((j, r)) = replicas
        .iter()
        .enumerate()
        .find(|(_, r)| r.k() != k || r.v() != v || r.width() != width)
    {
        return Err(Error::Shape(format!(
            "replica {j} is {}x{} ({} bit), replica 0 is {k}x{v} ({} bit)",
            r.k(),
            r.v(),
            r.width().bits(),
            width.bits()
        )));
    }

    let mut rounds = Vec::new();
    let mut stride = 1usize;
    while stride < g {
        let round: ReduceRound = (0..g)
            .step_by(2 * stride)
            .filter(|&j| j + stride < g)
            .map(|j| (j, j + stride))
            .collect();
        let results: Vec<Result<()>> = std::thread::scope(|scope| {
            let handles: Vec<_> = replicas
                .chunks_mut(2 * stride)
                .filter(|group| group.len() > stride)
                .map(|group| {
                    let (dst, src) = group.split_at_mut(stride);
                    scope.spawn(move || dst[0].add_assign(&src[0]))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err(Error::Internal("reduce merge panicked".into())))
                })
                .collect()
        });
        results.into_iter().collect::<Result<()>>()?;
        rounds.push(round);
        stride *= 2;
    }
    replicas.truncate(1);
    Ok((replicas.pop().expect("one replica remains"), rounds))
}

/// Publishes one immutable snapshot of the reduced matrix to `g` workers.
pub fn broadcast_phi(global: PhiMatrix, g: usize) -> Vec<Arc<PhiMatrix>> {
    let shared = Arc::new(global);
    vec![shared; g]
}
