//! Count matrices: sparse document-topic rows and dense topic-word counts.
//!
//! Both are rebuilt from token assignments after each sampling pass rather
//! than maintained incrementally.

mod conservation;
mod phi;
mod snapshot;
mod theta;

pub use conservation::{check_conservation, ConservationReport, Violation};
pub use phi::{accumulate_chunk, rebuild_phi_replica, PhiMatrix, PhiReplica, PhiWidth};
pub use snapshot::{Snapshot, SNAPSHOT_MAGIC};
pub use theta::{rebuild_theta_row, RowRef, SparseRow, ThetaBuilder, ThetaRows};
