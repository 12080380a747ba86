use std::fmt;

use super::{PhiMatrix, ThetaRows};
use crate::corpus::Corpus;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Shape(String),
    DocLength {
        doc: usize,
        row_sum: u64,
        expected: u64,
    },
    TopicTotal {
        topic: usize,
        theta_sum: u64,
        phi_total: u64,
    },
    PhiRowSum {
        topic: usize,
        row_sum: u64,
        stored_total: u64,
    },
    GrandTotal {
        sum: u64,
        expected: u64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape(msg) => write!(f, "shape mismatch: {msg}"),
            Violation::DocLength { doc, row_sum, expected } => {
                write!(f, "theta row {doc} sums to {row_sum}, document length is {expected}")
            }
            Violation::TopicTotal {
                topic,
                theta_sum,
                phi_total,
            } => {
                write!(
                    f,
                    "topic {topic}: theta column sums to {theta_sum}, phi total is {phi_total}"
                )
            }
            Violation::PhiRowSum {
                topic,
                row_sum,
                stored_total,
            } => {
                write!(
                    f,
                    "topic {topic}: phi row sums to {row_sum}, stored total is {stored_total}"
                )
            }
            Violation::GrandTotal { sum, expected } => {
                write!(f, "topic totals sum to {sum}, corpus has {expected} tokens")
            }
        }
    }
}

/// Result of [`check_conservation`]: the first violated identity, if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConservationReport {
    pub violation: Option<Violation>,
}

impl ConservationReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

impl fmt::Display for ConservationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.violation {
            None => write!(f, "pass"),
            Some(v) => write!(f, "FAIL: {v}"),
        }
    }
}

/// Checks the count identities tying theta, phi and the corpus together:
/// row sums of theta equal document lengths, column sums of theta equal the
/// phi topic totals, the totals equal the phi row sums, and the totals add
/// up to the corpus token count.
pub fn check_conservation(theta: &ThetaRows, phi: &PhiMatrix, corpus: &Corpus) -> ConservationReport {
    let fail = |v| ConservationReport { violation: Some(v) };
    if theta.doc_lo() != 0 || theta.num_docs() != corpus.num_docs() {
        return fail(Violation::Shape(format!(
            "theta covers documents [{}, {}), corpus has {}",
            theta.doc_lo(),
            theta.doc_hi(),
            corpus.num_docs()
        )));
    }
    if theta.k() != phi.k() || phi.v() != corpus.vocab_size() {
        return fail(Violation::Shape(format!(
            "theta K={}, phi {}x{}, corpus V={}",
            theta.k(),
            phi.k(),
            phi.v(),
            corpus.vocab_size()
        )));
    }

    let mut column = vec![0u64; theta.k()];
    for (doc, &len) in corpus.doc_lengths().iter().enumerate() {
        let row = theta.row(doc);
        let row_sum = row.sum();
        if row_sum != len as u64 {
            return fail(Violation::DocLength {
                doc,
                row_sum,
                expected: len as u64,
            });
        }
        for (z, c) in row.iter() {
            column[z as usize] += c as u64;
        }
    }
    for (topic, (&theta_sum, &phi_total)) in column.iter().zip(phi.topic_totals()).enumerate() {
        if theta_sum != phi_total {
            return fail(Violation::TopicTotal {
                topic,
                theta_sum,
                phi_total,
            });
        }
        let row_sum = phi.row_sum(topic);
        if row_sum != phi_total {
            return fail(Violation::PhiRowSum {
                topic,
                row_sum,
                stored_total: phi_total,
            });
        }
    }
    let sum = phi.total();
    if sum != corpus.num_tokens() {
        return fail(Violation::GrandTotal {
            sum,
            expected: corpus.num_tokens(),
        });
    }
    ConservationReport { violation: None }
}
