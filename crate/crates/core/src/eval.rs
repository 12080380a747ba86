//! Quality and throughput metrics.

use std::io::Write;

use crate::corpus::Corpus;
use crate::engine::IterationReport;
use crate::error::{Error, Result};
use crate::model::{PhiMatrix, ThetaRows};

/// Mean per-token log predictive likelihood under the posterior-mean
/// estimates of theta and phi:
///
/// `(1/T) * sum over tokens (d, v) of log sum_k
///   (theta[d][k] + alpha) / (len_d + K alpha) * (phi[k][v] + beta) / (n_k + beta V)`,
///
/// where `len_d` is the row sum of `theta[d]` (the document length for any
/// consistent model), so that each mixture weight is a proper distribution.
/// Computed in f64, documents in order. The sum over `k` is split into the
/// document's nonzero topics plus `alpha` times the per-word column sum, so
/// each token costs `K_d` rather than `K`.
pub fn loglik_per_token(theta: &ThetaRows, phi: &PhiMatrix, corpus: &Corpus, alpha: f64, beta: f64) -> Result<f64> {
    if corpus.num_tokens() == 0 {
        return Err(Error::Value("log-likelihood of an empty corpus".into()));
    }
    let (k, v) = (phi.k(), phi.v());
    if theta.k() != k || v != corpus.vocab_size() || theta.doc_lo() != 0 || theta.num_docs() != corpus.num_docs() {
        return Err(Error::Shape(format!(
            "model has K={k}, V={v}, D={} but corpus has V={}, D={}",
            theta.num_docs(),
            corpus.vocab_size(),
            corpus.num_docs()
        )));
    }
    let beta_v = beta * v as f64;
    let inv_denom: Vec<f64> = phi.topic_totals().iter().map(|&n| 1.0 / (n as f64 + beta_v)).collect();
    let p_star = |topic: usize, word: usize| (phi.count(topic, word) as f64 + beta) * inv_denom[topic];
    let column_sums: Vec<f64> = (0..v).map(|w| (0..k).map(|t| p_star(t, w)).sum()).collect();

    let k_alpha = k as f64 * alpha;
    let mut total = 0.0f64;
    for d in 0..corpus.num_docs() {
        let row = theta.row(d);
        let norm = row.sum() as f64 + k_alpha;
        for (word, count) in corpus.doc_entries(d) {
            let w = word as usize;
            let sparse: f64 = row.iter().map(|(t, c)| c as f64 * p_star(t as usize, w)).sum();
            let p = (sparse + alpha * column_sums[w]) / norm;
            total += count as f64 * p.ln();
        }
    }
    Ok(total / corpus.num_tokens() as f64)
}

/// `tokens * iterations / elapsed`.
pub fn tokens_per_sec(tokens: u64, iterations: usize, elapsed_sec: f64) -> Result<f64> {
    if !(elapsed_sec > 0.0) {
        return Err(Error::Value(format!(
            "elapsed time must be positive, got {elapsed_sec}"
        )));
    }
    Ok(tokens as f64 * iterations as f64 / elapsed_sec)
}

/// One step of a single token draw, for the arithmetic-intensity table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StepKind {
    ComputeS,
    ComputeQ,
    SampleP1,
    SampleP2,
}

impl StepKind {
    pub const ALL: [StepKind; 4] = [
        StepKind::ComputeS,
        StepKind::ComputeQ,
        StepKind::SampleP1,
        StepKind::SampleP2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StepKind::ComputeS => "ComputeS",
            StepKind::ComputeQ => "ComputeQ",
            StepKind::SampleP1 => "SampleP1",
            StepKind::SampleP2 => "SampleP2",
        }
    }
}

/// A step with the integer and float widths (in bytes) it is costed at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RooflineStep {
    pub kind: StepKind,
    pub int_width: f64,
    pub float_width: f64,
}

impl RooflineStep {
    pub fn new(kind: StepKind, int_width: f64, float_width: f64) -> Result<Self> {
        if !(int_width > 0.0) || !(float_width > 0.0) {
            return Err(Error::Value(format!(
                "widths must be positive, got int {int_width} and float {float_width}"
            )));
        }
        Ok(RooflineStep {
            kind,
            int_width,
            float_width,
        })
    }

    /// Floating-point operations over `n` entries (`K_d` for the sparse steps,
    /// `K` for the dense ones).
    pub fn flops(&self, n: u64) -> f64 {
        let per_entry = match self.kind {
            StepKind::ComputeS => 4.0,
            StepKind::ComputeQ => 2.0,
            StepKind::SampleP1 => 6.0,
            StepKind::SampleP2 => 3.0,
        };
        per_entry * n as f64
    }

    /// Bytes moved over `n` entries.
    pub fn bytes(&self, n: u64) -> f64 {
        let (i, f) = (self.int_width, self.float_width);
        let per_entry = match self.kind {
            StepKind::ComputeS => 3.0 * i,
            StepKind::ComputeQ => 2.0 * i,
            StepKind::SampleP1 => 3.0 * i + 2.0 * f,
            StepKind::SampleP2 => 2.0 * i + 2.0 * f,
        };
        per_entry * n as f64
    }
}

pub fn flops_per_byte(step: &RooflineStep) -> f64 {
    step.flops(1) / step.bytes(1)
}

/// Weighted mean of step ratios; the weights must sum to 1.
pub fn mean_flops_per_byte(weighted: &[(RooflineStep, f64)]) -> Result<f64> {
    let sum: f64 = weighted.iter().map(|&(_, w)| w).sum();
    if (sum - 1.0).abs() > 1e-9 || weighted.iter().any(|&(_, w)| w < 0.0) {
        return Err(Error::Value(format!(
            "step weights must be non-negative and sum to 1, got {sum}"
        )));
    }
    Ok(weighted.iter().map(|(s, w)| w * flops_per_byte(s)).sum())
}

pub const METRICS_VERSION_LINE: &str = "# gflda metrics v1";
pub const METRICS_HEADER: &str = "iteration,elapsed_sec,tokens_per_sec,loglik_per_token";

/// Writes the metrics CSV: a version comment, the column header, then one row
/// per report. Iterations without an evaluation leave the last column empty.
pub fn write_metrics<W: Write>(mut out: W, reports: &[IterationReport]) -> std::io::Result<()> {
    writeln!(out, "{METRICS_VERSION_LINE}")?;
    writeln!(out, "{METRICS_HEADER}")?;
    for r in reports {
        let ll = r.loglik_per_token.map(|x| format!("{x:.12}")).unwrap_or_default();
        writeln!(out, "{},{:.6},{:.1},{ll}", r.iteration, r.elapsed_sec, r.tokens_per_sec)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{partition, synth};
    use crate::model::{rebuild_phi_replica, PhiWidth, ThetaBuilder};
    use proptest::prelude::*;

    fn model_from_corpus(corpus: &Corpus, k: usize, seed: u64) -> (ThetaRows, PhiMatrix) {
        let chunks = partition(corpus, 1, k, seed).unwrap();
        let theta = ThetaBuilder::new(k).rebuild_slice(&chunks[0]).unwrap();
        let phi = rebuild_phi_replica(&chunks[0], k, corpus.vocab_size(), PhiWidth::W32).unwrap();
        (theta, phi)
    }

    /// Direct triple loop over tokens and all K topics.
    fn naive_loglik(theta: &ThetaRows, phi: &PhiMatrix, corpus: &Corpus, alpha: f64, beta: f64) -> f64 {
        let (k, v) = (phi.k(), phi.v());
        let mut sum = 0.0;
        for (d, &len) in corpus.doc_lengths().iter().enumerate() {
            for (word, count) in corpus.doc_entries(d) {
                let mut p = 0.0;
                for t in 0..k {
                    let th = theta.row(d).count_of(t as u16) as f64;
                    let n = phi.topic_totals()[t] as f64;
                    p += (th + alpha) / (len as f64 + k as f64 * alpha) * (phi.count(t, word as usize) as f64 + beta)
                        / (n + beta * v as f64);
                }
                sum += count as f64 * p.ln();
            }
        }
        sum / corpus.num_tokens() as f64
    }

    #[test]
    fn single_topic_collapses_theta() {
        let corpus = synth::planted(10, 12, 2, 8, 3).unwrap();
        let (theta, phi) = model_from_corpus(&corpus, 1, 0);
        let (beta, v, t) = (0.05, 12.0, corpus.num_tokens() as f64);
        let mut expected = 0.0;
        for (_, word) in corpus.tokens() {
            expected += ((phi.count(0, word as usize) as f64 + beta) / (t + beta * v)).ln();
        }
        expected /= t;
        let got = loglik_per_token(&theta, &phi, &corpus, 0.7, beta).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn prior_only_model_gives_uniform_words() {
        let corpus = synth::planted(6, 9, 3, 5, 1).unwrap();
        let theta = ThetaRows::from_csr(4, 0, vec![0; corpus.num_docs() + 1], vec![], vec![]).unwrap();
        let phi = PhiMatrix::zeros(4, 9, PhiWidth::W32);
        let got = loglik_per_token(&theta, &phi, &corpus, 0.3, 0.01).unwrap();
        assert!((got - (1.0f64 / 9.0).ln()).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn matches_naive_summation(k in 1usize..12, v in 2usize..20, docs in 1usize..15, seed in any::<u64>(),
                                   alpha in 0.01f64..2.0, beta in 0.001f64..1.0) {
            let corpus = synth::planted(docs, v, 1, 7, seed).unwrap();
            let (theta, phi) = model_from_corpus(&corpus, k, seed);
            let fast = loglik_per_token(&theta, &phi, &corpus, alpha, beta).unwrap();
            let slow = naive_loglik(&theta, &phi, &corpus, alpha, beta);
            prop_assert!(fast.is_finite());
            prop_assert!((fast - slow).abs() <= 1e-10 * slow.abs().max(1.0));
        }
    }

    #[test]
    fn empty_corpus_rejected() {
        let corpus = Corpus::from_triples(0, vec!["a".into()], std::iter::empty()).unwrap();
        let theta = ThetaRows::empty(2, 0);
        let phi = PhiMatrix::zeros(2, 1, PhiWidth::W32);
        assert!(matches!(
            loglik_per_token(&theta, &phi, &corpus, 0.1, 0.1),
            Err(Error::Value(_))
        ));
    }

    #[test]
    fn throughput_formula() {
        assert_eq!(tokens_per_sec(100, 2, 4.0).unwrap(), 50.0);
        assert_eq!(tokens_per_sec(100, 0, 4.0).unwrap(), 0.0);
        assert!(tokens_per_sec(100, 2, 0.0).is_err());
        assert!(tokens_per_sec(100, 2, -1.0).is_err());
    }

    fn step(kind: StepKind, i: f64, f: f64) -> RooflineStep {
        RooflineStep::new(kind, i, f).unwrap()
    }

    #[test]
    fn table_ratios() {
        assert!((flops_per_byte(&step(StepKind::ComputeS, 4.0, 4.0)) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(flops_per_byte(&step(StepKind::ComputeQ, 4.0, 4.0)), 0.25);
        assert_eq!(flops_per_byte(&step(StepKind::SampleP1, 4.0, 4.0)), 0.3);
        assert_eq!(flops_per_byte(&step(StepKind::SampleP2, 4.0, 4.0)), 0.1875);
        assert!((flops_per_byte(&step(StepKind::ComputeS, 2.0, 4.0)) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(flops_per_byte(&step(StepKind::SampleP2, 4.0, 8.0)), 0.125);
    }

    #[test]
    fn ratios_do_not_depend_on_entry_count() {
        for kind in StepKind::ALL {
            let s = step(kind, 4.0, 4.0);
            let base = flops_per_byte(&s);
            for n in [1u64, 7, 1000, 65535] {
                assert!((s.flops(n) / s.bytes(n) - base).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn weighted_means() {
        let equal: Vec<_> = StepKind::ALL.iter().map(|&k| (step(k, 4.0, 4.0), 0.25)).collect();
        let m = mean_flops_per_byte(&equal).unwrap();
        assert!((m - 0.267_708_333_333_333_3).abs() < 1e-12);
        assert!((m - 0.268).abs() < 1e-3);

        let only_q: Vec<_> = StepKind::ALL
            .iter()
            .map(|&k| (step(k, 4.0, 4.0), if k == StepKind::ComputeQ { 1.0 } else { 0.0 }))
            .collect();
        assert_eq!(mean_flops_per_byte(&only_q).unwrap(), 0.25);
        assert_eq!(
            mean_flops_per_byte(&[(step(StepKind::SampleP1, 4.0, 4.0), 1.0)]).unwrap(),
            0.3
        );
        assert!(mean_flops_per_byte(&[(step(StepKind::SampleP1, 4.0, 4.0), 0.9)]).is_err());
    }

    #[test]
    fn non_positive_widths_rejected() {
        assert!(RooflineStep::new(StepKind::ComputeS, 0.0, 4.0).is_err());
        assert!(RooflineStep::new(StepKind::ComputeS, 4.0, -1.0).is_err());
    }
}
