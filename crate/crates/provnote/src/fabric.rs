//! A site's data fabric: the replicated item table, its persisted change
//! log, and the payload store.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard};

use provnote_core::fabric::{
    ApplyReport, ChangeEntry, ChangeSet, FabricError, ItemId, ItemKind, ItemRecord, MetadataPatch,
    NewItem, Predicate, Replica, SinceVector,
};
use provnote_core::signing::SignatureRecord;
use provnote_core::Digest;

use crate::content::{ContentStore, FsChunkStore};
use crate::error::{Error, Result};
use crate::files::{Clock, JsonLog};

pub struct FabricRepo {
    replica: RwLock<Replica>,
    /// Held for the whole of every write, so log order equals apply order.
    log: Mutex<Option<JsonLog>>,
    content: ContentStore,
    clock: Clock,
}

impl FabricRepo {
    pub fn in_memory(site_id: &str, clock: Clock) -> Self {
        FabricRepo {
            replica: RwLock::new(Replica::new(site_id)),
            log: Mutex::new(None),
            content: ContentStore::in_memory(),
            clock,
        }
    }

    /// Opens `<dir>/changes.log`, `<dir>/chunks` and `<dir>/files`,
    /// replaying the log.
    pub fn open(dir: &Path, site_id: &str, clock: Clock) -> Result<Self> {
        let content = ContentStore::new(Arc::new(FsChunkStore::open(dir)?));
        let (log, entries) = JsonLog::open::<ChangeEntry>(&dir.join("changes.log"))?;
        let mut replica = Replica::new(site_id);
        for entry in entries {
            replica.replay(entry)?;
        }
        Ok(FabricRepo {
            replica: RwLock::new(replica),
            log: Mutex::new(Some(log)),
            content,
            clock,
        })
    }

    pub fn with_content(mut self, content: ContentStore) -> Self {
        self.content = content;
        self
    }

    pub fn content(&self) -> &ContentStore {
        &self.content
    }

    pub fn now_ms(&self) -> u64 {
        (self.clock)()
    }

    pub fn site_id(&self) -> String {
        self.read().site_id().into()
    }

    /// Read access to the current table.
    pub fn read(&self) -> RwLockReadGuard<'_, Replica> {
        self.replica.read().unwrap()
    }

    pub fn get(&self, id: &ItemId) -> Option<ItemRecord> {
        self.read().table().get(id)
    }

    pub fn get_live(&self, id: &ItemId) -> Option<ItemRecord> {
        self.read().table().get_live(id)
    }

    pub fn at_path(&self, path: &str) -> Option<ItemRecord> {
        self.read().table().at_path(path)
    }

    pub fn query(&self, predicate: &Predicate) -> Result<Vec<ItemRecord>> {
        Ok(self.read().query(predicate)?)
    }

    pub fn state_digest(&self) -> Digest {
        self.read().state_digest()
    }

    pub fn since_vector(&self) -> SinceVector {
        self.read().since_vector()
    }

    pub fn changes_since(&self, since: &SinceVector) -> ChangeSet {
        self.read().changes_since(since)
    }

    fn write(
        &self,
        op: impl FnOnce(&mut Replica, u64) -> Result<ChangeEntry, FabricError>,
    ) -> Result<ChangeEntry> {
        let mut log = self.log.lock().unwrap();
        let now = self.now_ms();
        let entry = op(&mut self.replica.write().unwrap(), now)?;
        if let Some(log) = log.as_mut() {
            log.append(&entry)?;
        }
        Ok(entry)
    }

    pub fn put_content(&self, bytes: &[u8]) -> Result<(Digest, u64)> {
        Ok(self.content.put_bytes(bytes)?)
    }

    pub fn create(&self, item_id: ItemId, item: NewItem) -> Result<ItemRecord> {
        if let Some((digest, size)) = item.content {
            let manifest = self.content.manifest(&digest)?;
            if manifest.size != size {
                return Err(Error::InvalidArgument(format!(
                    "content {digest} has {} bytes, not {size}",
                    manifest.size
                )));
            }
        }
        self.write(|r, now| r.create(item_id, item, now))
            .map(|e| self.view(e.record.item_id, e.record))
    }

    /// Creates a collection at `path`, or returns the one already there.
    pub fn ensure_collection(
        &self,
        path: &str,
        metadata: provnote_core::Metadata,
    ) -> Result<ItemRecord> {
        if let Some(existing) = self.at_path(path) {
            if existing.kind == ItemKind::Collection {
                return Ok(existing);
            }
            return Err(FabricError::PathTaken(path.into()).into());
        }
        self.create(
            ItemId(uuid::Uuid::new_v4()),
            NewItem {
                path: path.into(),
                kind: ItemKind::Collection,
                metadata,
                content: None,
            },
        )
    }

    pub fn update_metadata(&self, item_id: ItemId, patch: &MetadataPatch) -> Result<ItemRecord> {
        self.write(|r, now| r.update_metadata(item_id, patch, now))
            .map(|e| self.view(item_id, e.record))
    }

    pub fn add_signature(&self, item_id: ItemId, signature: SignatureRecord) -> Result<ItemRecord> {
        self.write(|r, now| r.add_signature(item_id, signature, now))
            .map(|e| self.view(item_id, e.record))
    }

    pub fn delete(&self, item_id: ItemId) -> Result<ItemRecord> {
        self.write(|r, now| r.delete(item_id, now))
            .map(|e| e.record)
    }

    /// Applies changes from a peer. Every payload the entries refer to must
    /// already be in the local content store.
    pub fn apply_changes(&self, changes: &ChangeSet) -> Result<ApplyReport> {
        for entry in &changes.entries {
            if let Some(d) = entry.record.content_digest {
                if !self.content.has(&d)? {
                    return Err(Error::MissingContent(d));
                }
            }
        }
        let mut log = self.log.lock().unwrap();
        let mut replica = self.replica.write().unwrap();
        let mut seen: BTreeMap<String, u64> = replica.since_vector();
        let report = replica.apply(changes)?;
        if let Some(log) = log.as_mut() {
            for entry in &changes.entries {
                let have = seen.entry(entry.origin().into()).or_insert(0);
                if entry.seq == *have + 1 {
                    log.append(entry)?;
                    *have = entry.seq;
                }
            }
        }
        Ok(report)
    }

    fn view(&self, id: ItemId, fallback: ItemRecord) -> ItemRecord {
        self.get(&id).unwrap_or(fallback)
    }
}
