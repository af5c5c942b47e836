//! Electronic lab notebook with recorded provenance: chunked content store,
//! replicated item fabric, provenance store, GLP-checked notebook
//! operations, REST service, HTTP client and CLI.

pub mod archive;
pub mod cli;
pub mod client;
pub mod content;
pub mod error;
pub mod fabric;
pub mod files;
pub mod journal;
pub mod keys;
pub mod notebook;
pub mod provenance;
pub mod replication;
pub mod repo;
pub mod sample;
pub mod service;

pub use error::{Error, Result};
