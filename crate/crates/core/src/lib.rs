//! A miniature service-oriented runtime.

pub mod behaviour;
pub mod cli;
pub mod composition;
pub mod correlation;
pub mod demos;
pub mod deployment;
pub mod engine;
pub mod harness;
pub mod error;
pub mod state;

pub use error::{Error, Fault};
pub use state::{State, Value, VarName};
