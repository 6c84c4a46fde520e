//! Files, manifests, checkpoints and the `mainstage` command line on top of
//! [`mainstage_core`].

pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod files;
pub mod manifest;
pub mod pipeline;
pub mod runner;

pub use error::{AppError, AppResult};
