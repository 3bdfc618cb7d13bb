//! Command-line tool and HTTP service around the `latentlayout` crate.

pub mod cli;
pub mod error;
pub mod model;
pub mod request;
pub mod service;
pub mod store;

pub use error::{AppError, Result};

/// Environment variable naming the default workspace directory.
pub const WORKSPACE_ENV: &str = "LATENTLAYOUT_WORKSPACE";
