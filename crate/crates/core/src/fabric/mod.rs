//! Replicated item table of the data fabric.
//!
//! Payload bytes live in a content-addressed chunk store on the std side;
//! this module holds the item records, their last-writer-wins merge, the
//! change logs exchanged between sites and the server-side query language.

mod item;
mod predicate;
mod replica;
mod table;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use item::{
    has_path_prefix, parent_path, validate_path, InvalidPath, ItemId, ItemKind, ItemRecord, RevisionStamp,
    ARCHIVAL_LOCATION_KEY,
};
pub use predicate::{BadPredicate, Comparison, Predicate};
pub use replica::{
    ApplyReport, ChangeEntry, ChangeSet, Conflict, FabricError, MetadataPatch, NewItem, Replica, SinceVector,
};
pub use table::{ItemTable, Merge};

use crate::digest::Digest;

pub const CHUNK_SIZE: usize = 4 * 1024 * 1024;

/// How a payload is split into chunks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileManifest {
    pub digest: Digest,
    pub size: u64,
    pub chunks: Vec<Digest>,
}

/// Number of chunks a payload of `size` bytes occupies.
pub fn chunk_count(size: u64) -> usize {
    size.div_ceil(CHUNK_SIZE as u64) as usize
}
