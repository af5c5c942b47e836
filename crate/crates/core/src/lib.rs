//! Allocation-only core of the provnote laboratory notebook.
//!
//! Everything here is pure data-structure and algorithm code: the Open
//! Provenance Model graph and its snapshot encoding, the traversal query
//! language, the GLP data model, the replicated item table with its
//! last-writer-wins merge, and signature/identity primitives. IO, networking
//! and the CLI live in the `provnote` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod canonical;
pub mod digest;
pub mod fabric;
pub mod glp;
pub mod identity;
pub mod metadata;
pub mod opm;
pub mod query;
pub mod signing;
pub mod snapshot;
pub mod store;

#[cfg(any(test, feature = "fixtures"))]
pub mod fixtures;

pub use digest::Digest;
pub use metadata::{MetaValue, Metadata};
pub use opm::{EdgeId, EdgeLabel, Graph, GraphError, NodeId, NodeKind, OpmEdge, OpmNode};
pub use store::{AssertionBatch, BatchError, BatchReceipt, EdgeSpec, NodeRef, NodeSpec, ProvenanceStore};
