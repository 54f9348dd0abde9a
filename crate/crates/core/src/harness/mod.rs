//! Test support: brute-force oracles, bounded interleaving enumeration,
//! wire-trace checks and the in-memory transport.

mod explore;
mod oracle;
mod wire;

pub use explore::{enumerate_interleavings, run_seeded, Outcome, TraceIo};
pub use oracle::{oracle_correlates, OracleConfig, Triple};
pub use wire::{check_id_discipline, check_traces};

pub use crate::deployment::{memnet_pair, MemEndpoint};
