//! Service definitions and containers: simple composition over sockets,
//! embedding over local channels, redirection by resource name, and
//! aggregation of several services behind one published interface.

mod container;
mod service;

pub use container::{Aggregation, Container, ContainerConfig, ContainerOptions, Redirect, NO_FIRING_SESSION};
pub use service::{merge_interfaces, EngineSettings, ServiceDef, SELF_PLACEHOLDER};
