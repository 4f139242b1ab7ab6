//! Frequency-domain laboratory for late-time tails of waves on stationary,
//! asymptotically flat backgrounds: mode resolvents, zero-energy Mellin analysis,
//! Neumann expansions of the twisted resolvent, time synthesis, weighted norms and a
//! small rule engine replaying function-space bookkeeping.

pub mod error;
pub mod exec;
pub mod jet;
pub mod model;
pub mod banded;
pub mod grid;
pub mod special;
pub mod stats;
pub mod resolvent;
pub mod mellin;
pub mod timedomain;
pub mod conormal;
pub mod spacecalc;

pub use error::{Error, Result};
pub use exec::Exec;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
