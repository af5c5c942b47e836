use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::item::{
    parent_path, validate_path, InvalidPath, ItemId, ItemKind, ItemRecord, RevisionStamp, ARCHIVAL_LOCATION_KEY,
};
use super::predicate::BadPredicate;
use super::table::ItemTable;
use crate::digest::Digest;
use crate::metadata::{MetaValue, Metadata};
use crate::signing::SignatureRecord;

/// Highest applied sequence number per origin site.
pub type SinceVector = BTreeMap<String, u64>;

/// Metadata changes: `Some` sets a key, `None` removes it.
pub type MetadataPatch = BTreeMap<String, Option<MetaValue>>;

/// One write, numbered within the log of the site that made it. The origin
/// is `record.revision.site_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeEntry {
    pub seq: u64,
    pub record: ItemRecord,
}

impl ChangeEntry {
    pub fn origin(&self) -> &str {
        &self.record.revision.site_id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeSet {
    /// Site that produced this set.
    pub site_id: String,
    pub entries: Vec<ChangeEntry>,
    /// Payload digests the entries refer to.
    pub content_digests: Vec<Digest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub item_id: ItemId,
    pub winner: RevisionStamp,
    pub loser: RevisionStamp,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplyReport {
    pub applied: usize,
    pub duplicates: usize,
    pub conflicts: Vec<Conflict>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FabricError {
    #[error(transparent)]
    InvalidPath(#[from] InvalidPath),
    #[error("path `{0}` is already taken")]
    PathTaken(String),
    #[error("parent collection `{0}` does not exist")]
    ParentMissing(String),
    #[error("parent `{0}` is not a collection")]
    ParentNotCollection(String),
    #[error("physical items need an `archival_location` metadata entry")]
    MissingArchivalLocation,
    #[error("{0:?} items {1}")]
    ContentRule(ItemKind, &'static str),
    #[error("unknown item {0}")]
    UnknownItem(ItemId),
    #[error("item id {0} is already in use")]
    ItemIdTaken(ItemId),
    #[error("collection `{0}` still has live children")]
    CollectionNotEmpty(String),
    #[error(transparent)]
    BadPredicate(#[from] BadPredicate),
    #[error("change from `{origin}` has seq {found}, expected {expected}")]
    SequenceGap { origin: String, expected: u64, found: u64 },
    #[error("malformed change record for {0}: {1}")]
    InvalidRecord(ItemId, String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewItem {
    pub path: String,
    pub kind: ItemKind,
    pub metadata: Metadata,
    /// Digest and size of the payload; files only.
    pub content: Option<(Digest, u64)>,
}

/// One site's copy of the item table plus the change logs it has seen.
///
/// Local writes go through the methods below and are numbered in this
/// site's own log. Remote entries are accepted in per-origin sequence order;
/// replays are ignored. Because the table keeps the greatest stamp per item,
/// the final state depends only on the set of entries received.
#[derive(Debug, Clone)]
pub struct Replica {
    site_id: String,
    table: ItemTable,
    logs: BTreeMap<String, Vec<ChangeEntry>>,
    conflicts: Vec<Conflict>,
}

impl Replica {
    pub fn new(site_id: &str) -> Self {
        Replica {
            site_id: site_id.into(),
            table: ItemTable::new(),
            logs: BTreeMap::new(),
            conflicts: Vec::new(),
        }
    }

    pub fn site_id(&self) -> &str {
        &self.site_id
    }

    pub fn table(&self) -> &ItemTable {
        &self.table
    }

    pub fn conflicts(&self) -> &[Conflict] {
        &self.conflicts
    }

    pub fn state_digest(&self) -> Digest {
        self.table.state_digest()
    }

    pub fn since_vector(&self) -> SinceVector {
        self.logs.iter().map(|(site, log)| (site.clone(), log.len() as u64)).collect()
    }

    pub fn query(&self, predicate: &super::Predicate) -> Result<Vec<ItemRecord>, FabricError> {
        Ok(self.table.query(predicate)?)
    }

    /// Entries the holder of `since` has not yet seen, grouped by origin.
    pub fn changes_since(&self, since: &SinceVector) -> ChangeSet {
        let mut entries = Vec::new();
        for (site, log) in &self.logs {
            let seen = since.get(site).copied().unwrap_or(0) as usize;
            entries.extend(log.iter().skip(seen).cloned());
        }
        let content_digests: BTreeSet<Digest> = entries.iter().filter_map(|e| e.record.content_digest).collect();
        ChangeSet {
            site_id: self.site_id.clone(),
            entries,
            content_digests: content_digests.into_iter().collect(),
        }
    }

    /// Applies a change set atomically: it is rejected whole if any entry is
    /// malformed or leaves a gap in its origin's sequence.
    pub fn apply(&mut self, changes: &ChangeSet) -> Result<ApplyReport, FabricError> {
        let mut next: BTreeMap<&str, u64> = BTreeMap::new();
        let mut accepted = Vec::new();
        let mut duplicates = 0;
        for entry in &changes.entries {
            check_record(&entry.record)?;
            let origin = entry.origin();
            let have = *next
                .entry(origin)
                .or_insert_with(|| self.logs.get(origin).map_or(0, |l| l.len() as u64));
            if entry.seq <= have {
                duplicates += 1;
            } else if entry.seq == have + 1 {
                next.insert(origin, entry.seq);
                accepted.push(entry);
            } else {
                return Err(FabricError::SequenceGap {
                    origin: origin.into(),
                    expected: have + 1,
                    found: entry.seq,
                });
            }
        }
        let mut report = ApplyReport {
            applied: accepted.len(),
            duplicates,
            conflicts: Vec::new(),
        };
        for entry in accepted {
            if let Some(c) = self.absorb(entry.clone()) {
                report.conflicts.push(c);
            }
        }
        self.table.reindex();
        Ok(report)
    }

    /// Replays one persisted entry, local or remote. Entries already present
    /// are ignored and reported as `false`.
    pub fn replay(&mut self, entry: ChangeEntry) -> Result<bool, FabricError> {
        check_record(&entry.record)?;
        let have = self.logs.get(entry.origin()).map_or(0, |l| l.len() as u64);
        if entry.seq <= have {
            return Ok(false);
        }
        if entry.seq != have + 1 {
            return Err(FabricError::SequenceGap {
                origin: entry.origin().into(),
                expected: have + 1,
                found: entry.seq,
            });
        }
        self.absorb(entry);
        self.table.reindex();
        Ok(true)
    }

    fn absorb(&mut self, entry: ChangeEntry) -> Option<Conflict> {
        let record = entry.record.clone();
        self.logs.entry(entry.origin().into()).or_default().push(entry);
        let incoming = record.revision.clone();
        let item_id = record.item_id;
        let outcome = self.table.merge_unindexed(record);
        let conflict = outcome.concurrent_pair(&incoming).map(|(winner, loser)| Conflict {
            item_id,
            winner,
            loser,
        });
        if let Some(c) = &conflict {
            self.conflicts.push(c.clone());
        }
        conflict
    }

    fn commit_local(&mut self, record: ItemRecord) -> ChangeEntry {
        let seq = self.logs.get(&self.site_id).map_or(0, |l| l.len() as u64) + 1;
        let entry = ChangeEntry { seq, record };
        self.absorb(entry.clone());
        self.table.reindex();
        entry
    }

    fn stamp_after(&self, previous: Option<&RevisionStamp>, now_ms: u64) -> RevisionStamp {
        RevisionStamp {
            counter: previous.map_or(1, |p| p.counter + 1),
            wall_time_ms: now_ms,
            site_id: self.site_id.clone(),
        }
    }

    /// Checks that a new item could be created at `path` with this shape.
    pub fn check_create(&self, item: &NewItem) -> Result<(), FabricError> {
        validate_path(&item.path)?;
        if self.table.is_path_taken(&item.path) {
            return Err(FabricError::PathTaken(item.path.clone()));
        }
        if let Some(parent) = parent_path(&item.path) {
            match self.table.at_path(parent) {
                None => return Err(FabricError::ParentMissing(parent.into())),
                Some(p) if p.kind != ItemKind::Collection => {
                    return Err(FabricError::ParentNotCollection(parent.into()))
                }
                Some(_) => {}
            }
        }
        check_shape(item.kind, item.content.is_some(), item.content.is_some(), &item.metadata)
    }

    pub fn create(&mut self, item_id: ItemId, item: NewItem, now_ms: u64) -> Result<ChangeEntry, FabricError> {
        if self.table.raw(&item_id).is_some() {
            return Err(FabricError::ItemIdTaken(item_id));
        }
        self.check_create(&item)?;
        let record = ItemRecord {
            item_id,
            path: item.path,
            kind: item.kind,
            content_digest: item.content.map(|c| c.0),
            size_bytes: item.content.map(|c| c.1),
            metadata: item.metadata,
            revision: self.stamp_after(None, now_ms),
            tombstone: false,
            signatures: Vec::new(),
        };
        Ok(self.commit_local(record))
    }

    fn live_for_write(&self, item_id: ItemId) -> Result<ItemRecord, FabricError> {
        self.table
            .raw(&item_id)
            .filter(|r| r.is_live())
            .cloned()
            .ok_or(FabricError::UnknownItem(item_id))
    }

    pub fn update_metadata(
        &mut self,
        item_id: ItemId,
        patch: &MetadataPatch,
        now_ms: u64,
    ) -> Result<ChangeEntry, FabricError> {
        let mut record = self.live_for_write(item_id)?;
        for (key, value) in patch {
            match value {
                Some(v) => record.metadata.insert(key.clone(), v.clone()),
                None => record.metadata.remove(key),
            };
        }
        check_shape(
            record.kind,
            record.content_digest.is_some(),
            record.size_bytes.is_some(),
            &record.metadata,
        )?;
        record.revision = self.stamp_after(Some(&record.revision), now_ms);
        Ok(self.commit_local(record))
    }

    pub fn add_signature(
        &mut self,
        item_id: ItemId,
        signature: SignatureRecord,
        now_ms: u64,
    ) -> Result<ChangeEntry, FabricError> {
        let mut record = self.live_for_write(item_id)?;
        record.signatures.push(signature);
        record.revision = self.stamp_after(Some(&record.revision), now_ms);
        Ok(self.commit_local(record))
    }

    pub fn delete(&mut self, item_id: ItemId, now_ms: u64) -> Result<ChangeEntry, FabricError> {
        let mut record = self.live_for_write(item_id)?;
        if record.kind == ItemKind::Collection {
            let path = self.table.resolved_path(&item_id).unwrap_or(&record.path);
            if self.table.children(path).next().is_some() {
                return Err(FabricError::CollectionNotEmpty(path.into()));
            }
        }
        record.tombstone = true;
        record.revision = self.stamp_after(Some(&record.revision), now_ms);
        Ok(self.commit_local(record))
    }
}

fn check_shape(kind: ItemKind, has_digest: bool, has_size: bool, metadata: &Metadata) -> Result<(), FabricError> {
    match kind {
        ItemKind::File if !(has_digest && has_size) => {
            return Err(FabricError::ContentRule(kind, "need a content digest and size"))
        }
        ItemKind::Collection | ItemKind::PhysicalItem if has_digest || has_size => {
            return Err(FabricError::ContentRule(kind, "carry no content"))
        }
        _ => {}
    }
    if kind == ItemKind::PhysicalItem && !metadata.contains_key(ARCHIVAL_LOCATION_KEY) {
        return Err(FabricError::MissingArchivalLocation);
    }
    Ok(())
}

fn check_record(record: &ItemRecord) -> Result<(), FabricError> {
    let invalid = |why: &str| FabricError::InvalidRecord(record.item_id, why.into());
    validate_path(&record.path).map_err(|_| invalid("bad path"))?;
    if record.revision.counter == 0 {
        return Err(invalid("zero revision counter"));
    }
    check_shape(
        record.kind,
        record.content_digest.is_some(),
        record.size_bytes.is_some(),
        &record.metadata,
    )
    .map_err(|_| invalid("content does not fit the item kind"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::{Comparison, Predicate};
    use crate::metadata::string_metadata;
    use alloc::format;
    use alloc::vec;
    use proptest::prelude::*;
    use uuid::Uuid;

    fn id(n: u128) -> ItemId {
        ItemId(Uuid::from_u128(n))
    }

    fn collection(path: &str) -> NewItem {
        NewItem {
            path: path.into(),
            kind: ItemKind::Collection,
            metadata: Metadata::new(),
            content: None,
        }
    }

    fn file(path: &str, seed: u8) -> NewItem {
        NewItem {
            path: path.into(),
            kind: ItemKind::File,
            metadata: string_metadata([("type", "raw-data")]),
            content: Some((Digest::of(&[seed]), 1)),
        }
    }

    fn sync(a: &mut Replica, b: &mut Replica) {
        let to_b = a.changes_since(&b.since_vector());
        b.apply(&to_b).unwrap();
        let to_a = b.changes_since(&a.since_vector());
        a.apply(&to_a).unwrap();
    }

    #[test]
    fn create_then_update_bumps_counter() {
        let mut r = Replica::new("a");
        let e = r.create(id(1), collection("/study1"), 10).unwrap();
        assert_eq!(e.record.revision.counter, 1);
        assert_eq!(e.seq, 1);
        let patch: MetadataPatch = [("note".into(), Some("x".into()))].into();
        let e = r.update_metadata(id(1), &patch, 11).unwrap();
        assert_eq!(e.record.revision.counter, 2);
        assert_eq!(e.seq, 2);
    }

    #[test]
    fn hierarchy_rules() {
        let mut r = Replica::new("a");
        r.create(id(1), collection("/study1"), 0).unwrap();
        r.create(id(2), file("/study1/data.csv", 1), 0).unwrap();
        assert_eq!(
            r.create(id(3), file("/study1/data.csv/inner", 2), 0),
            Err(FabricError::ParentNotCollection("/study1/data.csv".into()))
        );
        assert_eq!(
            r.create(id(3), file("/nowhere/x", 2), 0),
            Err(FabricError::ParentMissing("/nowhere".into()))
        );
        assert_eq!(
            r.create(id(3), file("/study1/data.csv", 2), 0),
            Err(FabricError::PathTaken("/study1/data.csv".into()))
        );
        assert!(matches!(r.create(id(2), collection("/other"), 0), Err(FabricError::ItemIdTaken(_))));
        assert!(matches!(r.delete(id(1), 1), Err(FabricError::CollectionNotEmpty(_))));
    }

    #[test]
    fn physical_items_need_a_location() {
        let mut r = Replica::new("a");
        let mut item = NewItem {
            path: "/sample".into(),
            kind: ItemKind::PhysicalItem,
            metadata: string_metadata([("type", "specimen")]),
            content: None,
        };
        assert_eq!(r.create(id(1), item.clone(), 0), Err(FabricError::MissingArchivalLocation));
        item.metadata.insert(ARCHIVAL_LOCATION_KEY.into(), "freezer 3".into());
        r.create(id(1), item, 0).unwrap();
        let patch: MetadataPatch = [(ARCHIVAL_LOCATION_KEY.into(), None)].into();
        assert_eq!(r.update_metadata(id(1), &patch, 1), Err(FabricError::MissingArchivalLocation));
    }

    #[test]
    fn tombstones_hide_items() {
        let mut r = Replica::new("a");
        r.create(id(1), file("/x", 1), 0).unwrap();
        assert_eq!(r.query(&Predicate::True).unwrap().len(), 1);
        r.delete(id(1), 1).unwrap();
        assert!(r.query(&Predicate::True).unwrap().is_empty());
        assert!(matches!(r.update_metadata(id(1), &MetadataPatch::new(), 2), Err(FabricError::UnknownItem(_))));
        // the path is free again
        r.create(id(2), file("/x", 2), 3).unwrap();
    }

    #[test]
    fn disjoint_writes_converge() {
        let mut a = Replica::new("a");
        let mut b = Replica::new("b");
        a.create(id(1), collection("/s1"), 0).unwrap();
        b.create(id(2), collection("/s2"), 0).unwrap();
        sync(&mut a, &mut b);
        assert_eq!(a.state_digest(), b.state_digest());
        assert_eq!(a.table().live_count(), 2);
        let full = a.changes_since(&SinceVector::new());
        assert_eq!(full.entries.len(), 2);
    }

    #[test]
    fn concurrent_edit_is_won_by_the_greater_stamp() {
        // every ordering of wall time and site id at equal counters
        for (wa, wb) in [(5, 9), (9, 5), (7, 7)] {
            let mut a = Replica::new("a");
            let mut b = Replica::new("b");
            a.create(id(1), collection("/s"), 0).unwrap();
            sync(&mut a, &mut b);
            let pa: MetadataPatch = [("v".into(), Some("from-a".into()))].into();
            let pb: MetadataPatch = [("v".into(), Some("from-b".into()))].into();
            let ea = a.update_metadata(id(1), &pa, wa).unwrap();
            let eb = b.update_metadata(id(1), &pb, wb).unwrap();
            let (winner, loser) = if ea.record.revision > eb.record.revision {
                (ea.record.revision.clone(), eb.record.revision.clone())
            } else {
                (eb.record.revision.clone(), ea.record.revision.clone())
            };
            let expected_value = if winner.site_id == "a" { "from-a" } else { "from-b" };
            let rep_b = b.apply(&a.changes_since(&b.since_vector())).unwrap();
            let rep_a = a.apply(&b.changes_since(&a.since_vector())).unwrap();
            let expected = vec![Conflict {
                item_id: id(1),
                winner,
                loser,
            }];
            assert_eq!(rep_a.conflicts, expected);
            assert_eq!(rep_b.conflicts, expected);
            assert_eq!(a.state_digest(), b.state_digest());
            assert_eq!(
                a.table().get(&id(1)).unwrap().metadata["v"],
                MetaValue::from(expected_value)
            );
        }
    }

    #[test]
    fn path_collision_gets_a_suffix() {
        let mut a = Replica::new("a");
        let mut b = Replica::new("b");
        a.create(id(7), collection("/s"), 0).unwrap();
        b.create(id(3), collection("/s"), 0).unwrap();
        sync(&mut a, &mut b);
        for r in [&a, &b] {
            assert_eq!(r.table().resolved_path(&id(3)), Some("/s"));
            assert_eq!(r.table().resolved_path(&id(7)), Some("/s~conflict-a"));
        }
        assert_eq!(a.state_digest(), b.state_digest());
        // an existing item already holding the suffixed path forces a counter
        let mut c = Replica::new("c");
        c.create(id(9), collection("/s~conflict-a"), 0).unwrap();
        sync(&mut a, &mut c);
        assert_eq!(a.table().resolved_path(&id(7)), Some("/s~conflict-a-2"));
        assert_eq!(a.table().resolved_path(&id(9)), Some("/s~conflict-a"));
    }

    #[test]
    fn replayed_old_record_does_not_resurrect() {
        let mut a = Replica::new("a");
        let created = a.create(id(1), file("/x", 1), 0).unwrap();
        a.delete(id(1), 1).unwrap();
        let mut stale = ChangeSet {
            site_id: "a".into(),
            entries: vec![created],
            content_digests: vec![],
        };
        let rep = a.apply(&stale).unwrap();
        assert_eq!(rep.duplicates, 1);
        // even a foreign copy of the old record under a new seq loses
        let mut old = a.table().raw(&id(1)).unwrap().clone();
        old.tombstone = false;
        old.revision.counter = 1;
        old.revision.site_id = "z".into();
        stale.entries = vec![ChangeEntry { seq: 1, record: old }];
        a.apply(&stale).unwrap();
        assert!(a.table().get_live(&id(1)).is_none());
    }

    #[test]
    fn gaps_reject_the_whole_set() {
        let mut a = Replica::new("a");
        let e1 = a.create(id(1), collection("/s1"), 0).unwrap();
        let _ = a.create(id(2), collection("/s2"), 0).unwrap();
        let e3 = a.create(id(3), collection("/s3"), 0).unwrap();
        let mut b = Replica::new("b");
        let cs = ChangeSet {
            site_id: "a".into(),
            entries: vec![e1, e3],
            content_digests: vec![],
        };
        assert!(matches!(b.apply(&cs), Err(FabricError::SequenceGap { expected: 2, found: 3, .. })));
        assert!(b.table().is_empty());
    }

    #[test]
    fn replay_rebuilds_identical_state() {
        let mut a = Replica::new("a");
        let mut log = vec![
            a.create(id(1), collection("/s"), 0).unwrap(),
            a.create(id(2), file("/s/f", 1), 1).unwrap(),
        ];
        let patch: MetadataPatch = [("k".into(), Some("v".into()))].into();
        log.push(a.update_metadata(id(2), &patch, 2).unwrap());
        log.push(a.delete(id(2), 3).unwrap());
        let mut restored = Replica::new("a");
        for e in log.iter().cloned() {
            assert!(restored.replay(e).unwrap());
        }
        assert!(!restored.replay(log[0].clone()).unwrap());
        assert_eq!(restored.state_digest(), a.state_digest());
        assert_eq!(restored.since_vector(), a.since_vector());
    }

    #[derive(Debug, Clone)]
    enum Op {
        Create { parent: usize, name: u8, kind: u8 },
        Update { target: usize, value: u8 },
        Delete { target: usize },
        Sync { other: usize },
    }

    fn arb_op() -> impl Strategy<Value = Op> {
        prop_oneof![
            4 => (any::<usize>(), 0u8..6, 0u8..3).prop_map(|(parent, name, kind)| Op::Create { parent, name, kind }),
            3 => (any::<usize>(), any::<u8>()).prop_map(|(target, value)| Op::Update { target, value }),
            1 => any::<usize>().prop_map(|target| Op::Delete { target }),
            2 => any::<usize>().prop_map(|other| Op::Sync { other }),
        ]
    }

    fn run_schedule(sites: usize, schedule: &[(usize, Op)]) -> Vec<Replica> {
        let mut replicas: Vec<Replica> = (0..sites).map(|i| Replica::new(&format!("site{i}"))).collect();
        let mut next_id = 1u128;
        for (step, (who, op)) in schedule.iter().enumerate() {
            let who = who % sites;
            let now = step as u64 / 3;
            let r = &mut replicas[who];
            let live: Vec<ItemRecord> = r.table().live().collect();
            match op {
                Op::Create { parent, name, kind } => {
                    let collections: Vec<&ItemRecord> =
                        live.iter().filter(|i| i.kind == ItemKind::Collection).collect();
                    let base = if collections.is_empty() || parent % 3 == 0 {
                        String::new()
                    } else {
                        collections[parent % collections.len()].path.clone()
                    };
                    let path = format!("{base}/n{name}");
                    let item = match kind {
                        0 => collection(&path),
                        1 => file(&path, *name),
                        _ => NewItem {
                            path,
                            kind: ItemKind::PhysicalItem,
                            metadata: string_metadata([(ARCHIVAL_LOCATION_KEY, "shelf")]),
                            content: None,
                        },
                    };
                    let _ = r.create(id(next_id), item, now);
                    next_id += 1;
                }
                Op::Update { target, value } if !live.is_empty() => {
                    let t = live[target % live.len()].item_id;
                    let patch: MetadataPatch = [("v".into(), Some(MetaValue::Number(f64::from(*value))))].into();
                    r.update_metadata(t, &patch, now).unwrap();
                }
                Op::Delete { target } if !live.is_empty() => {
                    let t = live[target % live.len()].item_id;
                    let _ = r.delete(t, now);
                }
                Op::Sync { other } => {
                    let other = other % sites;
                    if other != who {
                        let (lo, hi) = (who.min(other), who.max(other));
                        let (left, right) = replicas.split_at_mut(hi);
                        sync(&mut left[lo], &mut right[0]);
                    }
                }
                _ => {}
            }
        }
        // pairwise syncs until quiescence
        loop {
            let before: Vec<Digest> = replicas.iter().map(Replica::state_digest).collect();
            for i in 0..sites {
                for j in i + 1..sites {
                    let (left, right) = replicas.split_at_mut(j);
                    sync(&mut left[i], &mut right[0]);
                }
            }
            if replicas.iter().map(Replica::state_digest).collect::<Vec<_>>() == before {
                break;
            }
        }
        replicas
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn random_schedules_converge(
            sites in 2usize..=3,
            schedule in proptest::collection::vec((any::<usize>(), arb_op()), 1..120),
        ) {
            let replicas = run_schedule(sites, &schedule);
            let d0 = replicas[0].state_digest();
            for r in &replicas[1..] {
                prop_assert_eq!(r.state_digest(), d0);
                prop_assert_eq!(r.since_vector(), replicas[0].since_vector());
            }
            // live paths in the view are unique
            let paths: BTreeSet<String> = replicas[0].table().live().map(|r| r.path).collect();
            prop_assert_eq!(paths.len(), replicas[0].table().live_count());
        }

        #[test]
        fn change_sets_commute(
            schedule in proptest::collection::vec((0usize..2, arb_op()), 1..60),
        ) {
            // diverge two sites without syncing, then merge their sets in both orders
            let schedule: Vec<(usize, Op)> =
                schedule.into_iter().filter(|(_, op)| !matches!(op, Op::Sync { .. })).collect();
            let mut replicas: Vec<Replica> = (0..2).map(|i| Replica::new(&format!("site{i}"))).collect();
            let mut next_id = 1u128;
            for (step, (who, op)) in schedule.iter().enumerate() {
                let r = &mut replicas[*who];
                let live: Vec<ItemRecord> = r.table().live().collect();
                match op {
                    Op::Create { name, .. } => {
                        let _ = r.create(id(next_id), collection(&format!("/n{name}")), step as u64);
                        next_id += 1;
                    }
                    Op::Update { target, value } if !live.is_empty() => {
                        let t = live[target % live.len()].item_id;
                        let patch: MetadataPatch = [("v".into(), Some(MetaValue::Number(f64::from(*value))))].into();
                        r.update_metadata(t, &patch, step as u64).unwrap();
                    }
                    _ => {}
                }
            }
            let a = replicas[0].changes_since(&SinceVector::new());
            let b = replicas[1].changes_since(&SinceVector::new());
            let mut ab = Replica::new("x");
            ab.apply(&a).unwrap();
            ab.apply(&b).unwrap();
            let mut ba = Replica::new("x");
            ba.apply(&b).unwrap();
            ba.apply(&a).unwrap();
            prop_assert_eq!(ab.state_digest(), ba.state_digest());
        }

        #[test]
        fn query_matches_linear_scan(
            items in proptest::collection::vec((0u8..3, 0u8..4, 0u8..20, any::<bool>()), 500..600),
            cmp_value in 0u8..20,
        ) {
            let mut r = Replica::new("a");
            r.create(id(0), collection("/s"), 0).unwrap();
            for (i, (kind, ty, n, delete)) in items.iter().enumerate() {
                let ty = ["specimen", "raw-data", "report", "manual"][*ty as usize];
                let mut metadata = string_metadata([("type", ty), (ARCHIVAL_LOCATION_KEY, "shelf")]);
                metadata.insert("n".into(), MetaValue::Number(f64::from(*n)));
                let (kind, content) = match kind {
                    0 => (ItemKind::File, Some((Digest::of(&[*n]), 1))),
                    1 => (ItemKind::PhysicalItem, None),
                    _ => (ItemKind::Collection, None),
                };
                let iid = id(i as u128 + 1);
                r.create(iid, NewItem { path: format!("/s/i{i}"), kind, metadata, content }, 0).unwrap();
                if *delete {
                    r.delete(iid, 1).unwrap();
                }
            }
            let predicate = Predicate::or([
                Predicate::and([
                    Predicate::Kind { kind: ItemKind::PhysicalItem },
                    Predicate::meta("type", Comparison::Eq, "specimen"),
                ]),
                Predicate::negate(Predicate::meta("n", Comparison::Lt, f64::from(cmp_value))),
            ]);
            let got: Vec<ItemId> = r.query(&predicate).unwrap().into_iter().map(|i| i.item_id).collect();
            let mut expected: Vec<(String, ItemId)> = r
                .table()
                .raw_records()
                .filter(|rec| !rec.tombstone)
                .filter(|rec| {
                    let n = match rec.metadata.get("n") { Some(MetaValue::Number(n)) => Some(*n), _ => None };
                    let specimen = rec.kind == ItemKind::PhysicalItem
                        && rec.metadata.get("type") == Some(&MetaValue::from("specimen"));
                    let small = n.is_some_and(|n| n < f64::from(cmp_value));
                    specimen || !small
                })
                .map(|rec| (rec.path.clone(), rec.item_id))
                .collect();
            expected.sort();
            prop_assert_eq!(got, expected.into_iter().map(|(_, i)| i).collect::<Vec<_>>());
        }
    }
}
