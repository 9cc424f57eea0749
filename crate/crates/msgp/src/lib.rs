//! File formats, run configuration, parallel execution and the command-line
//! pipeline around [`msgp_core`].
//!
//! * [`config`]: the JSON run configuration and its conversion into core
//!   types.
//! * [`io`]: CSV designs and outputs, JSON variable specs, digests.
//! * [`archive`]: JSON-lines model archives (header plus one draw per line).
//! * [`parallel`]: concurrent chains and per-draw sensitivity analysis.
//! * [`validation`]: K-fold cross-validation over sparsity levels.
//! * [`pipeline`]: the command implementations behind the `msgp` binary.

pub mod archive;
pub mod config;
mod error;
pub mod io;
pub mod parallel;
pub mod pipeline;
pub mod validation;

pub use error::{MsgpError, Result, StageExt};
pub use msgp_core as core;
