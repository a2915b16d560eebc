//! The multiparty round: clients, principal server `P` and auxiliary server
//! `A` exchanging envelopes over an in-process transport.
//!
//! A round runs key distribution, seed agreement, a secure total count,
//! index assignment, masking, aggregation and detection, in that order.
//! Every message is recorded in a [`Transcript`] that can be replayed,
//! persisted as NDJSON and audited with [`audit_transcript`].

mod audit;
mod indices;
mod masking;
mod network;
mod parties;
mod policy;
mod session;
mod transcript;
pub mod wire;

pub use audit::{audit_transcript, AuditCheck, AuditReport, CheckResult};
pub use indices::{index_set, start_points, window_positions};
pub use masking::{denoise, masked_contribution, sum_matrices};
pub use network::Network;
pub use parties::{Client, DetectionConfig, ServerA, ServerP, SEED_SHARE_BOUND};
pub use policy::OutlierPolicy;
pub use session::{
    run_full_round, ClientInput, ClientOutcome, RoundConfig, RoundOutcome, Session, SimulationView, DEFAULT_T,
};
pub use transcript::{Envelope, MessageKind, PartyId, Transcript};
