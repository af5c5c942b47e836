//! The provenance store of one site, persisted as a single file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use provnote_core::canonical::to_canonical_json;
use provnote_core::{snapshot, AssertionBatch, BatchReceipt, ProvenanceStore};

use crate::error::{Error, Result};
use crate::files::write_atomic;

/// Where notebook actions send their assertion batches.
pub trait ProvenanceSink: Send + Sync {
    /// Applies a batch. Rejections come back as [`Error::Batch`], outages as
    /// [`Error::ProvenanceUnavailable`].
    fn post(&self, batch: &AssertionBatch) -> Result<BatchReceipt>;

    /// The latest committed state.
    fn view(&self) -> Arc<ProvenanceStore>;
}

const MAGIC: &[u8; 8] = b"PNSTORE1";

/// Readers take an `Arc` of the committed store and never wait for writers;
/// writers commit a modified copy and swap it in.
pub struct LocalProvenance {
    current: RwLock<Arc<ProvenanceStore>>,
    writer: Mutex<Option<PathBuf>>,
}

impl LocalProvenance {
    pub fn in_memory() -> Self {
        LocalProvenance {
            current: RwLock::new(Arc::new(ProvenanceStore::new())),
            writer: Mutex::new(None),
        }
    }

    /// Opens or creates the store file at `path`.
    pub fn open(path: &Path) -> Result<Self> {
        let store = if path.exists() {
            decode_store(&fs::read(path)?)?
        } else {
            ProvenanceStore::new()
        };
        Ok(LocalProvenance {
            current: RwLock::new(Arc::new(store)),
            writer: Mutex::new(Some(path.into())),
        })
    }
}

impl ProvenanceSink for LocalProvenance {
    fn post(&self, batch: &AssertionBatch) -> Result<BatchReceipt> {
        let path = self.writer.lock().unwrap();
        let mut next = self.view();
        if let Some(r) = next.receipt(&batch.batch_id) {
            return Ok(r.clone());
        }
        let receipt = Arc::make_mut(&mut next).apply(batch)?;
        if let Some(path) = path.as_ref() {
            write_atomic(path, &encode_store(&next))?;
        }
        *self.current.write().unwrap() = next;
        Ok(receipt)
    }

    fn view(&self) -> Arc<ProvenanceStore> {
        self.current.read().unwrap().clone()
    }
}

/// Magic, snapshot length (u64 LE), graph snapshot, canonical JSON receipts.
pub fn encode_store(store: &ProvenanceStore) -> Vec<u8> {
    let snap = snapshot::encode(store.graph());
    let mut out = Vec::with_capacity(snap.len() + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(snap.len() as u64).to_le_bytes());
    out.extend_from_slice(&snap);
    out.extend_from_slice(&to_canonical_json(store.receipts()).unwrap_or_default());
    out
}

pub fn decode_store(bytes: &[u8]) -> Result<ProvenanceStore> {
    let corrupt = |why: &str| Error::Corrupt(format!("provenance store: {why}"));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(corrupt("bad header"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let snap = bytes
        .get(16..16usize.saturating_add(len))
        .ok_or_else(|| corrupt("truncated snapshot"))?;
    let graph = snapshot::decode(snap)?;
    let receipts: BTreeMap<String, BatchReceipt> =
        serde_json::from_slice(&bytes[16 + len..]).map_err(|_| corrupt("unreadable receipts"))?;
    for r in receipts.values() {
        if r.node_ids.iter().any(|n| !graph.contains_node(*n))
            || r.edge_ids.iter().any(|e| graph.edge(*e).is_none())
        {
            return Err(corrupt("receipt names a missing element"));
        }
    }
    Ok(ProvenanceStore::from_parts(graph, receipts))
}
