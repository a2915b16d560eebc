//! Global outlier detection over horizontally partitioned data.
//!
//! Clients jointly agree on a secret seed with the help of an auxiliary
//! server, mask their rows with a shared invertible transformation and
//! private additive noise, and hand the noisy result to a principal server.
//! Once the noise cancels, the principal server holds a pooled, masked and
//! permuted data matrix, fits an Isolation Forest (or Extended Isolation
//! Forest) on it and broadcasts per-row scores back to the clients.
//!
//! The crate is organised bottom-up:
//!
//! - [`detrng`]: portable deterministic randomness shared by all clients.
//! - [`paillier`]: additively homomorphic encryption for the integer rounds.
//! - [`linalg`]: dense matrices, Householder QR and the masking transformation.
//! - [`isoforest`]: Isolation Forest / Extended Isolation Forest.
//! - [`protocol`]: the parties, the in-process transport and transcript audit.
//! - [`evaluation`]: datasets, AUROC and the standard-vs-multiparty benchmark.

pub mod detrng;
pub mod error;
pub mod evaluation;
pub mod isoforest;
pub mod linalg;
pub mod paillier;
pub mod protocol;

pub use error::{Error, Result};
