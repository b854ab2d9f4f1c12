//! File formats, artifact management, plotting and the command-line
//! pipeline around [`gnp_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod store;
pub mod svg;

pub use config::RunConfig;
pub use error::{Error, Result};
