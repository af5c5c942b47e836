use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::item::{parent_path, ItemId, ItemRecord, RevisionStamp};
use super::predicate::{BadPredicate, Predicate};
use crate::canonical::to_canonical_json;
use crate::digest::Digest;

/// Result of merging one record into an [`ItemTable`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Merge {
    Inserted,
    /// The incoming record won over `previous`.
    Replaced { previous: RevisionStamp },
    /// The stored record won; the incoming one was discarded.
    Lost { kept: RevisionStamp },
    Unchanged,
}

impl Merge {
    /// Stamps of two writes made at the same counter: neither saw the other.
    pub fn concurrent_pair(&self, incoming: &RevisionStamp) -> Option<(RevisionStamp, RevisionStamp)> {
        match self {
            Merge::Replaced { previous } if previous.counter == incoming.counter => {
                Some((incoming.clone(), previous.clone()))
            }
            Merge::Lost { kept } if kept.counter == incoming.counter => Some((kept.clone(), incoming.clone())),
            _ => None,
        }
    }
}

/// Last-writer-wins item table with a deterministic path view.
///
/// Each item-id holds the record with the greatest [`RevisionStamp`] seen.
/// When several live items share a path, the smallest item-id keeps it and
/// the others are shown at `<path>~conflict-<site>` (plus `-<n>` if that
/// is taken too). The view depends only on the stored records.
#[derive(Debug, Clone, Default)]
pub struct ItemTable {
    records: BTreeMap<ItemId, ItemRecord>,
    resolved: BTreeMap<ItemId, String>,
    by_path: BTreeMap<String, ItemId>,
}

impl ItemTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn live_count(&self) -> usize {
        self.by_path.len()
    }

    /// Merges without rebuilding the path view; call [`ItemTable::reindex`]
    /// afterwards.
    pub(crate) fn merge_unindexed(&mut self, record: ItemRecord) -> Merge {
        match self.records.get(&record.item_id) {
            None => {
                self.records.insert(record.item_id, record);
                Merge::Inserted
            }
            Some(existing) if record.revision > existing.revision => {
                let previous = existing.revision.clone();
                self.records.insert(record.item_id, record);
                Merge::Replaced { previous }
            }
            Some(existing) if record.revision < existing.revision => Merge::Lost {
                kept: existing.revision.clone(),
            },
            Some(_) => Merge::Unchanged,
        }
    }

    pub fn merge(&mut self, record: ItemRecord) -> Merge {
        let outcome = self.merge_unindexed(record);
        if outcome != Merge::Unchanged && !matches!(outcome, Merge::Lost { .. }) {
            self.reindex();
        }
        outcome
    }

    pub(crate) fn reindex(&mut self) {
        let mut groups: BTreeMap<&str, Vec<&ItemRecord>> = BTreeMap::new();
        for r in self.records.values().filter(|r| r.is_live()) {
            groups.entry(r.path.as_str()).or_default().push(r);
        }
        let mut taken: BTreeSet<String> = groups.keys().map(|p| String::from(*p)).collect();
        let mut resolved = BTreeMap::new();
        for (path, members) in &groups {
            // records iterate in item-id order, so members[0] is the smallest id
            resolved.insert(members[0].item_id, String::from(*path));
            for loser in &members[1..] {
                let base = format!("{path}~conflict-{}", loser.revision.site_id);
                let mut candidate = base.clone();
                let mut n = 2u64;
                while taken.contains(&candidate) {
                    candidate = format!("{base}-{n}");
                    n += 1;
                }
                taken.insert(candidate.clone());
                resolved.insert(loser.item_id, candidate);
            }
        }
        self.by_path = resolved.iter().map(|(id, p)| (p.clone(), *id)).collect();
        self.resolved = resolved;
    }

    /// The stored record, tombstoned or not, with its path as stored.
    pub fn raw(&self, id: &ItemId) -> Option<&ItemRecord> {
        self.records.get(id)
    }

    pub fn raw_records(&self) -> impl Iterator<Item = &ItemRecord> {
        self.records.values()
    }

    /// The record as seen through the path view. Tombstones keep their
    /// stored path.
    pub fn get(&self, id: &ItemId) -> Option<ItemRecord> {
        self.records.get(id).map(|r| self.view(r))
    }

    pub fn get_live(&self, id: &ItemId) -> Option<ItemRecord> {
        self.get(id).filter(ItemRecord::is_live)
    }

    pub fn resolved_path(&self, id: &ItemId) -> Option<&str> {
        self.resolved.get(id).map(String::as_str)
    }

    pub fn id_at(&self, path: &str) -> Option<ItemId> {
        self.by_path.get(path).copied()
    }

    pub fn at_path(&self, path: &str) -> Option<ItemRecord> {
        self.id_at(path).and_then(|id| self.get(&id))
    }

    pub fn is_path_taken(&self, path: &str) -> bool {
        self.by_path.contains_key(path)
    }

    /// Live items in path order.
    pub fn live(&self) -> impl Iterator<Item = ItemRecord> + '_ {
        self.by_path.values().filter_map(|id| self.get(id))
    }

    pub fn children<'a>(&'a self, path: &'a str) -> impl Iterator<Item = ItemRecord> + 'a {
        let start = format!("{path}/");
        self.by_path
            .range(start.clone()..)
            .take_while(move |(p, _)| p.starts_with(&start))
            .filter(move |(p, _)| parent_path(p) == Some(path))
            .filter_map(|(_, id)| self.get(id))
    }

    /// Live items matching `predicate`, ordered by path.
    pub fn query(&self, predicate: &Predicate) -> Result<Vec<ItemRecord>, BadPredicate> {
        predicate.validate()?;
        Ok(self.live().filter(|r| predicate.matches(r)).collect())
    }

    /// Canonical JSON of every record, tombstones included, sorted by item-id.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let rows: Vec<ItemRecord> = self.records.values().map(|r| self.view(r)).collect();
        to_canonical_json(&rows).unwrap_or_default()
    }

    pub fn state_digest(&self) -> Digest {
        Digest::of(&self.canonical_bytes())
    }

    fn view(&self, record: &ItemRecord) -> ItemRecord {
        let mut out = record.clone();
        if let Some(p) = self.resolved.get(&record.item_id) {
            if *p != out.path {
                out.path = p.clone();
            }
        }
        out
    }
}
