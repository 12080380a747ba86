//! Synthetic corpora with planted topics.

use rand::Rng;

use super::Corpus;
use crate::error::Result;
use crate::rng::Stream;
use rand::SeedableRng;

/// Generates a corpus from `topics` topics with disjoint word supports.
///
/// Topic `t` owns the contiguous vocabulary block `[t*V/K, (t+1)*V/K)` and
/// emits its words uniformly. Each document mixes two topics drawn uniformly
/// with a uniform mixing weight, and holds exactly `tokens_per_doc` tokens.
pub fn planted(docs: usize, vocab_size: usize, topics: usize, tokens_per_doc: usize, seed: u64) -> Result<Corpus> {
    assert!(topics >= 1 && vocab_size >= topics, "need at least one word per topic");
    let block = vocab_size / topics;
    let mut rng = Stream::seed_from_u64(seed);
    let mut triples = Vec::new();
    let mut counts = vec![0u32; vocab_size];
    for d in 0..docs {
        let a = rng.gen_range(0..topics);
        let b = rng.gen_range(0..topics);
        let mix: f64 = rng.gen();
        counts.iter_mut().for_each(|c| *c = 0);
        for _ in 0..tokens_per_doc {
            let t = if rng.gen::<f64>() < mix { a } else { b };
            let w = t * block + rng.gen_range(0..block);
            counts[w] += 1;
        }
        for (w, &c) in counts.iter().enumerate() {
            if c > 0 {
                triples.push((d as u32, w as u32, c));
            }
        }
    }
    let vocab = (0..vocab_size).map(|w| format!("w{w}")).collect();
    Corpus::from_triples(docs, vocab, triples)
}
