//! Write-ahead journal linking fabric writes to their provenance batches.

use std::collections::BTreeMap;
use std::path::Path;

use provnote_core::fabric::ItemId;
use provnote_core::AssertionBatch;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::files::JsonLog;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum JournalRecord {
    /// About to create `item_id` and post `batch` for it.
    Pending {
        item_id: ItemId,
        batch: AssertionBatch,
    },
    Committed {
        item_id: ItemId,
    },
    Aborted {
        item_id: ItemId,
        reason: String,
    },
}

impl JournalRecord {
    pub fn item_id(&self) -> ItemId {
        match self {
            JournalRecord::Pending { item_id, .. }
            | JournalRecord::Committed { item_id }
            | JournalRecord::Aborted { item_id, .. } => *item_id,
        }
    }
}

/// Operations whose outcome is not yet recorded, in the order they began.
pub struct Journal {
    log: Option<JsonLog>,
    pending: BTreeMap<ItemId, (u64, AssertionBatch)>,
    written: u64,
}

impl Journal {
    pub fn in_memory() -> Self {
        Journal {
            log: None,
            pending: BTreeMap::new(),
            written: 0,
        }
    }

    pub fn open(path: &Path) -> Result<Self> {
        let (log, records) = JsonLog::open::<JournalRecord>(path)?;
        let mut journal = Journal {
            log: Some(log),
            ..Journal::in_memory()
        };
        for r in records {
            journal.track(r);
        }
        Ok(journal)
    }

    fn track(&mut self, record: JournalRecord) {
        self.written += 1;
        match record {
            JournalRecord::Pending { item_id, batch } => {
                self.pending.insert(item_id, (self.written, batch));
            }
            other => {
                self.pending.remove(&other.item_id());
            }
        }
    }

    pub fn append(&mut self, record: JournalRecord) -> Result<()> {
        if let Some(log) = self.log.as_mut() {
            log.append(&record)?;
        }
        self.track(record);
        Ok(())
    }

    pub fn unresolved(&self) -> Vec<(ItemId, AssertionBatch)> {
        let mut out: Vec<_> = self
            .pending
            .iter()
            .map(|(id, (n, b))| (*n, *id, b.clone()))
            .collect();
        out.sort_by_key(|(n, ..)| *n);
        out.into_iter().map(|(_, id, b)| (id, b)).collect()
    }
}
