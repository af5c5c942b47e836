//! The laboratory notebook: GLP-checked imports that record provenance,
//! copies, signatures, search and lineage questions.

use std::sync::{Arc, Mutex, RwLock};

use ed25519_dalek::{SigningKey, VerifyingKey};
use provnote_core::fabric::{
    parent_path, validate_path, ItemId, ItemKind, ItemRecord, MetadataPatch, NewItem,
    ARCHIVAL_LOCATION_KEY,
};
use provnote_core::glp::{Child, DataModelSpec, TYPE_KEY};
use provnote_core::opm::Annotations;
use provnote_core::query::{
    answer, Answer, AnswerContext, Question, Ruleset, SubjectSigned, STAGE_KEY,
};
use provnote_core::signing::{self, KeyRegistry, SignatureRecord, Verdict};
use provnote_core::{
    AssertionBatch, BatchReceipt, Digest, EdgeLabel, EdgeSpec, MetaValue, Metadata, NodeId,
    NodeKind, NodeRef, NodeSpec, ProvenanceStore,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fabric::FabricRepo;
use crate::journal::{Journal, JournalRecord};
use crate::provenance::ProvenanceSink;

/// Artifact annotation holding the item type.
pub const ITEM_TYPE_KEY: &str = "item_type";

/// Metadata keys every artifact in a lineage closure should carry.
pub const QUALITY_KEYS: [&str; 3] = ["creator", "created", ITEM_TYPE_KEY];

/// Places where an import can be made to stop, as if the process died.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrashPoint {
    AfterJournal,
    AfterFabricWrite,
    AfterProvenancePost,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Bytes(Vec<u8>),
    /// Content already in the store, e.g. uploaded through the REST API.
    Stored {
        digest: Digest,
        size: u64,
    },
    Physical {
        archival_location: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportRequest {
    /// Path of the collection receiving the item.
    pub target: String,
    pub item_type: String,
    /// Last path segment; defaults to `<item_type>-<short id>`.
    pub name: Option<String>,
    pub metadata: Metadata,
    pub payload: Payload,
    pub influences: Vec<ItemId>,
    pub actor_dn: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportOutcome {
    pub item: ItemRecord,
    pub batch_id: String,
    pub receipt: BatchReceipt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureCheck {
    pub signer_dn: String,
    pub valid: bool,
    pub verdict: Verdict,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub committed: usize,
    pub aborted: usize,
    pub still_pending: usize,
}

pub struct Notebook {
    spec: DataModelSpec,
    fabric: Arc<FabricRepo>,
    provenance: Arc<dyn ProvenanceSink>,
    /// Also serializes every orchestrated write.
    journal: Mutex<Journal>,
    keys: RwLock<KeyRegistry>,
    crash_at: Mutex<Option<CrashPoint>>,
    recovered: RecoveryReport,
}

impl Notebook {
    /// Builds a notebook and settles any operations a previous run left
    /// half done.
    pub fn new(
        spec: DataModelSpec,
        fabric: Arc<FabricRepo>,
        provenance: Arc<dyn ProvenanceSink>,
        journal: Journal,
        keys: KeyRegistry,
    ) -> Result<Self> {
        spec.check()?;
        let mut nb = Notebook {
            spec,
            fabric,
            provenance,
            journal: Mutex::new(journal),
            keys: RwLock::new(keys),
            crash_at: Mutex::new(None),
            recovered: RecoveryReport::default(),
        };
        nb.recovered = nb.retry_pending()?;
        Ok(nb)
    }

    /// A notebook with in-memory fabric, provenance store and journal.
    pub fn in_memory(
        spec: DataModelSpec,
        site_id: &str,
        clock: crate::files::Clock,
    ) -> Result<Self> {
        Notebook::new(
            spec,
            Arc::new(FabricRepo::in_memory(site_id, clock)),
            Arc::new(crate::provenance::LocalProvenance::in_memory()),
            Journal::in_memory(),
            KeyRegistry::default(),
        )
    }

    pub fn spec(&self) -> &DataModelSpec {
        &self.spec
    }

    pub fn fabric(&self) -> &Arc<FabricRepo> {
        &self.fabric
    }

    pub fn provenance(&self) -> &Arc<dyn ProvenanceSink> {
        &self.provenance
    }

    pub fn keys(&self) -> KeyRegistry {
        self.keys.read().unwrap().clone()
    }

    pub fn register_key(&self, dn: &str, key: &VerifyingKey) {
        self.keys.write().unwrap().register(dn, key);
    }

    /// What the constructor found and settled in the journal.
    pub fn recovery_report(&self) -> RecoveryReport {
        self.recovered
    }

    /// Fault injection: the next import stops at `point` and leaves its
    /// journal, fabric and provenance state exactly as they are.
    pub fn set_crash_point(&self, point: Option<CrashPoint>) {
        *self.crash_at.lock().unwrap() = point;
    }

    fn crash_check(&self, point: CrashPoint) -> Result<()> {
        let mut armed = self.crash_at.lock().unwrap();
        if *armed == Some(point) {
            *armed = None;
            return Err(Error::SimulatedCrash(point));
        }
        Ok(())
    }

    /// Re-posts the batches of journaled operations whose item exists and
    /// aborts the others.
    pub fn retry_pending(&self) -> Result<RecoveryReport> {
        let mut journal = self.journal.lock().unwrap();
        let mut report = RecoveryReport::default();
        for (item_id, batch) in journal.unresolved() {
            if self.fabric.get_live(&item_id).is_none() {
                journal.append(JournalRecord::Aborted {
                    item_id,
                    reason: "item was never written".into(),
                })?;
                report.aborted += 1;
                continue;
            }
            match self.provenance.post(&batch) {
                Ok(_) => {
                    journal.append(JournalRecord::Committed { item_id })?;
                    report.committed += 1;
                }
                Err(Error::ProvenanceUnavailable(_)) => report.still_pending += 1,
                Err(e) => {
                    self.fabric.delete(item_id)?;
                    journal.append(JournalRecord::Aborted {
                        item_id,
                        reason: e.to_string(),
                    })?;
                    report.aborted += 1;
                }
            }
        }
        Ok(report)
    }

    /// Type of the live collection at `path`.
    pub fn collection_type_at(&self, path: &str) -> Result<String> {
        let rec = self
            .fabric
            .at_path(path)
            .ok_or_else(|| provnote_core::fabric::FabricError::ParentMissing(path.into()))?;
        if rec.kind != ItemKind::Collection {
            return Err(
                provnote_core::fabric::FabricError::ParentNotCollection(path.into()).into(),
            );
        }
        Ok(rec
            .metadata
            .get(TYPE_KEY)
            .and_then(MetaValue::as_str)
            .unwrap_or_default()
            .to_string())
    }

    /// Creates a typed collection where the data model allows it.
    pub fn create_collection(
        &self,
        path: &str,
        collection_type: &str,
        mut metadata: Metadata,
    ) -> Result<ItemRecord> {
        validate_path(path).map_err(provnote_core::fabric::FabricError::from)?;
        self.spec.collection_type(collection_type)?;
        match parent_path(path) {
            None => self.spec.validate_root(collection_type)?,
            Some(parent) => {
                let parent_type = self.collection_type_at(parent)?;
                self.spec
                    .validate_placement(&parent_type, Child::Collection(collection_type))?;
            }
        }
        metadata.insert(TYPE_KEY.into(), collection_type.into());
        let _guard = self.journal.lock().unwrap();
        self.fabric.create(
            ItemId(uuid::Uuid::new_v4()),
            NewItem {
                path: path.into(),
                kind: ItemKind::Collection,
                metadata,
                content: None,
            },
        )
    }

    /// A root collection with one child per allowed child type, named after
    /// the type.
    pub fn create_study(
        &self,
        path: &str,
        root_type: &str,
        metadata: Metadata,
    ) -> Result<Vec<ItemRecord>> {
        let root = self.create_collection(path, root_type, metadata)?;
        let children = self
            .spec
            .collection_type(root_type)?
            .allowed_child_collections
            .clone();
        let mut out = vec![root];
        for child in children {
            out.push(self.create_collection(
                &format!("{path}/{child}"),
                &child,
                Metadata::new(),
            )?);
        }
        Ok(out)
    }

    pub fn import(&self, req: ImportRequest) -> Result<ImportOutcome> {
        let collection_type = self.collection_type_at(&req.target)?;
        self.spec
            .validate_placement(&collection_type, Child::Item(&req.item_type))?;
        let mut metadata = req.metadata;
        metadata
            .entry(TYPE_KEY.into())
            .or_insert_with(|| req.item_type.clone().into());
        let (kind, content) = match req.payload {
            Payload::Bytes(bytes) => (ItemKind::File, Some(self.fabric.put_content(&bytes)?)),
            Payload::Stored { digest, size } => (ItemKind::File, Some((digest, size))),
            Payload::Physical { archival_location } => {
                metadata.insert(ARCHIVAL_LOCATION_KEY.into(), archival_location.into());
                (ItemKind::PhysicalItem, None)
            }
        };
        let violations =
            self.spec
                .validate_metadata(&collection_type, &req.item_type, &metadata)?;
        if !violations.is_empty() {
            return Err(Error::MetadataViolation(violations));
        }
        for influence in &req.influences {
            if self.fabric.get_live(influence).is_none() {
                return Err(Error::UnknownInfluence(*influence));
            }
        }
        let item_id = ItemId(uuid::Uuid::new_v4());
        let name = req.name.unwrap_or_else(|| {
            format!("{}-{}", req.item_type, &item_id.0.simple().to_string()[..8])
        });
        let path = format!("{}/{name}", req.target);
        let item = NewItem {
            path,
            kind,
            metadata,
            content,
        };
        self.fabric.read().check_create(&item)?;
        let stage = self.spec.stage_of(&collection_type);
        let batch = ItemBatch::new("import", item_id, &req.actor_dn, stage.map(|s| s.as_str()))
            .artifact(&item, &req.item_type)
            .used(&req.influences)
            .finish();
        self.commit(item_id, item, batch)
    }

    /// Copies a file or physical item to `new_path` as a new item derived
    /// from the original.
    pub fn copy_item(
        &self,
        source: ItemId,
        new_path: &str,
        actor_dn: &str,
    ) -> Result<ImportOutcome> {
        let original = self.fabric.get_live(&source).ok_or(Error::Fabric(
            provnote_core::fabric::FabricError::UnknownItem(source),
        ))?;
        if original.kind == ItemKind::Collection {
            return Err(Error::InvalidArgument(
                "collections cannot be copied".into(),
            ));
        }
        validate_path(new_path).map_err(provnote_core::fabric::FabricError::from)?;
        let parent = parent_path(new_path).ok_or_else(|| {
            Error::InvalidArgument("a copy must be placed inside a collection".into())
        })?;
        let collection_type = self.collection_type_at(parent)?;
        let item_type = original
            .metadata
            .get(TYPE_KEY)
            .and_then(MetaValue::as_str)
            .unwrap_or_default()
            .to_string();
        self.spec
            .validate_placement(&collection_type, Child::Item(&item_type))?;
        let violations =
            self.spec
                .validate_metadata(&collection_type, &item_type, &original.metadata)?;
        if !violations.is_empty() {
            return Err(Error::MetadataViolation(violations));
        }
        let item_id = ItemId(uuid::Uuid::new_v4());
        let item = NewItem {
            path: new_path.into(),
            kind: original.kind,
            metadata: original.metadata.clone(),
            content: original.content_digest.zip(original.size_bytes),
        };
        self.fabric.read().check_create(&item)?;
        let stage = self.spec.stage_of(&collection_type);
        let batch = ItemBatch::new("copy", item_id, actor_dn, stage.map(|s| s.as_str()))
            .artifact(&item, &item_type)
            .used(&[source])
            .derived_from(source)
            .finish();
        self.commit(item_id, item, batch)
    }

    /// Journal, fabric write, provenance post, journal.
    fn commit(
        &self,
        item_id: ItemId,
        item: NewItem,
        batch: AssertionBatch,
    ) -> Result<ImportOutcome> {
        let mut journal = self.journal.lock().unwrap();
        journal.append(JournalRecord::Pending {
            item_id,
            batch: batch.clone(),
        })?;
        self.crash_check(CrashPoint::AfterJournal)?;
        let record = match self.fabric.create(item_id, item) {
            Ok(r) => r,
            Err(e) => {
                journal.append(JournalRecord::Aborted {
                    item_id,
                    reason: e.to_string(),
                })?;
                return Err(e);
            }
        };
        self.crash_check(CrashPoint::AfterFabricWrite)?;
        let receipt = match self.provenance.post(&batch) {
            Ok(r) => r,
            Err(e) => {
                self.fabric.delete(item_id)?;
                journal.append(JournalRecord::Aborted {
                    item_id,
                    reason: e.to_string(),
                })?;
                return Err(match e {
                    Error::ProvenanceUnavailable(_) | Error::Batch(_) => e,
                    other => Error::ProvenanceUnavailable(other.to_string()),
                });
            }
        };
        self.crash_check(CrashPoint::AfterProvenancePost)?;
        journal.append(JournalRecord::Committed { item_id })?;
        Ok(ImportOutcome {
            item: record,
            batch_id: batch.batch_id,
            receipt,
        })
    }

    /// Patches metadata, re-checking the data model for items inside typed
    /// collections.
    pub fn update_metadata(&self, item_id: ItemId, patch: &MetadataPatch) -> Result<ItemRecord> {
        let _guard = self.journal.lock().unwrap();
        let current = self
            .fabric
            .get_live(&item_id)
            .ok_or(provnote_core::fabric::FabricError::UnknownItem(item_id))?;
        if current.kind != ItemKind::Collection {
            if let Some(parent) = parent_path(&current.path) {
                let collection_type = self.collection_type_at(parent)?;
                if self.spec.collection_types.contains_key(&collection_type) {
                    let mut next = current.metadata.clone();
                    for (k, v) in patch {
                        match v {
                            Some(v) => next.insert(k.clone(), v.clone()),
                            None => next.remove(k),
                        };
                    }
                    let item_type = current
                        .metadata
                        .get(TYPE_KEY)
                        .and_then(MetaValue::as_str)
                        .unwrap_or_default();
                    let violations =
                        self.spec
                            .validate_metadata(&collection_type, item_type, &next)?;
                    if !violations.is_empty() {
                        return Err(Error::MetadataViolation(violations));
                    }
                }
            }
        }
        self.fabric.update_metadata(item_id, patch)
    }

    /// Tombstones an item. Its provenance stays.
    pub fn delete_item(&self, item_id: ItemId) -> Result<ItemRecord> {
        let _guard = self.journal.lock().unwrap();
        self.fabric.delete(item_id)
    }

    fn actual_content(&self, record: &ItemRecord) -> Result<Option<Digest>> {
        match &record.content_digest {
            None => Ok(None),
            Some(d) => Ok(Some(self.fabric.content().recompute_digest(d)?)),
        }
    }

    /// Signs the item's current content and metadata with `key`, which must
    /// be the key registered for `signer_dn`.
    pub fn sign_item(
        &self,
        item_id: ItemId,
        key: &SigningKey,
        signer_dn: &str,
    ) -> Result<SignatureRecord> {
        if self.keys.read().unwrap().get(signer_dn) != Some(key.verifying_key()) {
            return Err(Error::UnknownSignerKey(signer_dn.into()));
        }
        let record = self
            .fabric
            .get_live(&item_id)
            .ok_or(provnote_core::fabric::FabricError::UnknownItem(item_id))?;
        let content = self.actual_content(&record)?;
        let sig = signing::sign(
            key,
            signer_dn,
            content.as_ref(),
            &record.metadata,
            self.fabric.now_ms(),
        );
        let _guard = self.journal.lock().unwrap();
        self.fabric.add_signature(item_id, sig.clone())?;
        Ok(sig)
    }

    /// Appends a signature made elsewhere. It must be by `signer_dn` and
    /// verify against the item as it is now.
    pub fn attach_signature(
        &self,
        item_id: ItemId,
        sig: SignatureRecord,
        signer_dn: &str,
    ) -> Result<ItemRecord> {
        if sig.signer_dn != signer_dn {
            return Err(Error::UnknownSignerKey(sig.signer_dn));
        }
        let record = self
            .fabric
            .get_live(&item_id)
            .ok_or(provnote_core::fabric::FabricError::UnknownItem(item_id))?;
        let content = self.actual_content(&record)?;
        let verdict = signing::verify(
            &sig,
            &self.keys.read().unwrap(),
            content.as_ref(),
            &record.metadata,
        );
        if !verdict.is_valid() {
            return Err(Error::InvalidSignature(verdict));
        }
        let _guard = self.journal.lock().unwrap();
        self.fabric.add_signature(item_id, sig)
    }

    /// Checks every signature on the item against its current payload bytes
    /// and metadata.
    pub fn verify_item(&self, item_id: ItemId) -> Result<Vec<SignatureCheck>> {
        let record = self
            .fabric
            .get_live(&item_id)
            .ok_or(provnote_core::fabric::FabricError::UnknownItem(item_id))?;
        // unreadable payload bytes can match no signature
        let content = self.actual_content(&record).ok();
        let keys = self.keys.read().unwrap();
        Ok(record
            .signatures
            .iter()
            .map(|sig| {
                let verdict = match &content {
                    Some(c) => signing::verify(sig, &keys, c.as_ref(), &record.metadata),
                    None => Verdict::DigestMismatch,
                };
                SignatureCheck {
                    signer_dn: sig.signer_dn.clone(),
                    valid: verdict.is_valid(),
                    verdict,
                    timestamp_ms: sig.timestamp_ms,
                }
            })
            .collect())
    }

    /// Case-insensitive substring search over paths and string metadata of
    /// live items, in path order.
    pub fn search(&self, text: &str) -> Vec<ItemRecord> {
        let needle = text.to_lowercase();
        let repo = self.fabric.read();
        repo.table()
            .live()
            .filter(|r| {
                r.path.to_lowercase().contains(&needle)
                    || r.metadata
                        .values()
                        .flat_map(MetaValue::strings)
                        .any(|s| s.to_lowercase().contains(&needle))
            })
            .collect()
    }

    /// Artifact node of an item.
    pub fn subject_node(&self, store: &ProvenanceStore, item_id: ItemId) -> Result<NodeId> {
        find_node(store, NodeKind::Artifact, &item_id.to_string())
    }

    /// Answers a provenance question about an item. With `require_signature`
    /// the quality check also demands a valid signature on the subject.
    pub fn answer(
        &self,
        item_id: ItemId,
        question: Question,
        require_signature: bool,
    ) -> Result<(Arc<ProvenanceStore>, Answer)> {
        let store = self.provenance.view();
        let subject = self.subject_node(&store, item_id)?;
        let mut ruleset = Ruleset::builtin(&QUALITY_KEYS);
        if require_signature && question == Question::Quality {
            let checks = match self.fabric.get_live(&item_id) {
                Some(_) => self.verify_item(item_id)?,
                None => Vec::new(),
            };
            let verified = (!checks.is_empty()).then(|| checks.iter().all(|c| c.valid));
            ruleset = ruleset.with(SubjectSigned { verified });
        }
        let a = answer(
            store.graph(),
            question,
            subject,
            AnswerContext {
                ruleset: Some(&ruleset),
            },
        )?;
        Ok((store, a))
    }
}

pub fn find_node(store: &ProvenanceStore, kind: NodeKind, identifier: &str) -> Result<NodeId> {
    store
        .graph()
        .find(kind, identifier)
        .ok_or_else(|| Error::UnknownNode {
            kind,
            identifier: identifier.into(),
        })
}

/// Annotations an artifact node carries for an item.
pub fn artifact_annotations(item: &NewItem, item_type: &str) -> Annotations {
    let mut out = Annotations::new();
    for (k, v) in &item.metadata {
        if k == provnote_core::opm::TYPE_KEY || k == provnote_core::opm::IDENTIFIER_KEY {
            continue;
        }
        let text = match v {
            MetaValue::String(s) => s.clone(),
            MetaValue::Number(n) => {
                serde_json::Number::from_f64(*n).map_or_else(|| n.to_string(), |n| n.to_string())
            }
            MetaValue::Bool(b) => b.to_string(),
            MetaValue::List(items) => items.join(", "),
        };
        out.insert(k.clone(), text);
    }
    out.insert(ITEM_TYPE_KEY.into(), item_type.into());
    out.insert("path".into(), item.path.clone());
    out.insert("kind".into(), item.kind.as_str().into());
    out
}

/// The batch recorded for one new item: artifact, generating process,
/// acting agent, and the artifacts the process used.
struct ItemBatch {
    batch: AssertionBatch,
    artifact: NodeRef,
    process: NodeRef,
}

impl ItemBatch {
    fn new(action: &str, item_id: ItemId, actor_dn: &str, stage: Option<&str>) -> Self {
        let process_id = format!("{action}:{item_id}");
        let mut batch = AssertionBatch::new(process_id.clone());
        let mut process =
            NodeSpec::new(NodeKind::Process, process_id.clone()).annotate("action", action);
        if let Some(stage) = stage {
            process = process.annotate(STAGE_KEY, stage);
        }
        batch.nodes.push(process);
        batch
            .nodes
            .push(NodeSpec::new(NodeKind::Agent, actor_dn).reuse());
        let process = NodeRef::new(NodeKind::Process, process_id);
        batch.edges.push(EdgeSpec::new(
            EdgeLabel::WasUndertakenBy,
            process.clone(),
            NodeRef::new(NodeKind::Agent, actor_dn),
        ));
        ItemBatch {
            batch,
            artifact: NodeRef::new(NodeKind::Artifact, item_id.to_string()),
            process,
        }
    }

    fn artifact(mut self, item: &NewItem, item_type: &str) -> Self {
        let mut node = NodeSpec::new(NodeKind::Artifact, self.artifact.identifier.clone());
        node.annotations = artifact_annotations(item, item_type);
        self.batch.nodes.insert(0, node);
        self.batch.edges.insert(
            0,
            EdgeSpec::new(
                EdgeLabel::WasGeneratedBy,
                self.artifact.clone(),
                self.process.clone(),
            ),
        );
        self
    }

    fn used(mut self, inputs: &[ItemId]) -> Self {
        for input in inputs {
            let id = input.to_string();
            if !self
                .batch
                .nodes
                .iter()
                .any(|n| n.kind == NodeKind::Artifact && n.identifier == id)
            {
                self.batch
                    .nodes
                    .push(NodeSpec::new(NodeKind::Artifact, id.clone()).reuse());
            }
            self.batch.edges.push(EdgeSpec::new(
                EdgeLabel::Used,
                self.process.clone(),
                NodeRef::new(NodeKind::Artifact, id),
            ));
        }
        self
    }

    fn derived_from(mut self, source: ItemId) -> Self {
        self.batch.edges.push(EdgeSpec::new(
            EdgeLabel::WasDerivedFrom,
            self.artifact.clone(),
            NodeRef::new(NodeKind::Artifact, source.to_string()),
        ));
        self
    }

    fn finish(self) -> AssertionBatch {
        self.batch
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicBool, Ordering};

    use super::*;
    use crate::content::{ContentStore, MemChunkStore};
    use crate::files::counter_clock;
    use crate::provenance::LocalProvenance;
    use crate::sample::{file_import, seed_study};
    use provnote_core::glp::default_glp_spec;
    use provnote_core::query::Progress;

    const ALICE: &str = "CN=Alice,O=Lab";
    const BOB: &str = "CN=Bob,O=Lab";

    /// Local store that can be switched off.
    #[derive(Default)]
    struct Flaky {
        inner: LocalProvenance,
        down: AtomicBool,
    }

    impl Default for LocalProvenance {
        fn default() -> Self {
            LocalProvenance::in_memory()
        }
    }

    impl ProvenanceSink for Flaky {
        fn post(&self, batch: &AssertionBatch) -> Result<BatchReceipt> {
            if self.down.load(Ordering::SeqCst) {
                return Err(Error::ProvenanceUnavailable("switched off".into()));
            }
            self.inner.post(batch)
        }

        fn view(&self) -> Arc<ProvenanceStore> {
            self.inner.view()
        }
    }

    fn notebook() -> Notebook {
        let nb = Notebook::in_memory(default_glp_spec(), "site", counter_clock(1_000)).unwrap();
        nb.create_study("/study1", "study", Metadata::new())
            .unwrap();
        nb
    }

    fn edges_from(store: &ProvenanceStore, node: NodeId, label: EdgeLabel) -> Vec<NodeId> {
        store
            .graph()
            .edges()
            .filter(|e| e.source == node && e.label == label)
            .map(|e| e.target)
            .collect()
    }

    #[test]
    fn import_records_artifact_process_and_agent() {
        let nb = notebook();
        let plan = nb
            .import(file_import(
                "/study1/preparation",
                "study-plan",
                "plan",
                b"p",
                &[],
                ALICE,
            ))
            .unwrap();
        let raw = nb
            .import(file_import(
                "/study1/execution",
                "raw-data",
                "raw",
                b"r",
                &[plan.item.item_id],
                ALICE,
            ))
            .unwrap();
        assert_eq!(raw.item.path, "/study1/execution/raw");
        assert_eq!(raw.batch_id, format!("import:{}", raw.item.item_id));
        // artifact, process, reused agent, reused influence
        assert_eq!(raw.receipt.node_ids.len(), 4);
        assert_eq!(raw.receipt.edge_ids.len(), 3);

        let store = nb.provenance().view();
        let art = nb.subject_node(&store, raw.item.item_id).unwrap();
        let process = edges_from(&store, art, EdgeLabel::WasGeneratedBy);
        assert_eq!(process.len(), 1);
        let p = store.graph().node(process[0]).unwrap();
        assert_eq!(
            p.annotations.get(STAGE_KEY).map(String::as_str),
            Some("execution")
        );
        let agents = edges_from(&store, process[0], EdgeLabel::WasUndertakenBy);
        assert_eq!(store.graph().node(agents[0]).unwrap().identifier, ALICE);
        let used = edges_from(&store, process[0], EdgeLabel::Used);
        assert_eq!(used, [nb.subject_node(&store, plan.item.item_id).unwrap()]);
        // one agent node for both imports
        assert_eq!(
            store
                .graph()
                .nodes()
                .filter(|n| n.kind == NodeKind::Agent)
                .count(),
            1
        );
        let a = store.graph().node(art).unwrap();
        assert_eq!(
            a.annotations.get(ITEM_TYPE_KEY).map(String::as_str),
            Some("raw-data")
        );
        assert_eq!(
            a.annotations.get("creator").map(String::as_str),
            Some(ALICE)
        );
    }

    #[test]
    fn placement_metadata_and_influence_are_checked() {
        let nb = notebook();
        let wrong_stage = nb.import(file_import(
            "/study1/preparation",
            "raw-data",
            "x",
            b"x",
            &[],
            ALICE,
        ));
        assert!(matches!(wrong_stage, Err(Error::Placement(_))));

        let mut missing = file_import("/study1/execution", "raw-data", "x", b"x", &[], ALICE);
        missing.metadata.remove("created");
        assert!(matches!(nb.import(missing), Err(Error::MetadataViolation(v)) if v.len() == 1));

        let mut bad_date = file_import("/study1/execution", "raw-data", "x", b"x", &[], ALICE);
        bad_date
            .metadata
            .insert("created".into(), "yesterday".into());
        assert!(matches!(
            nb.import(bad_date),
            Err(Error::MetadataViolation(_))
        ));

        let gone = nb
            .import(file_import(
                "/study1/preparation",
                "study-plan",
                "plan",
                b"p",
                &[],
                ALICE,
            ))
            .unwrap();
        nb.delete_item(gone.item.item_id).unwrap();
        let stale = nb.import(file_import(
            "/study1/execution",
            "raw-data",
            "x",
            b"x",
            &[gone.item.item_id],
            ALICE,
        ));
        assert!(matches!(stale, Err(Error::UnknownInfluence(id)) if id == gone.item.item_id));

        let nowhere = nb.import(file_import(
            "/study1/nowhere",
            "raw-data",
            "x",
            b"x",
            &[],
            ALICE,
        ));
        assert!(matches!(nowhere, Err(Error::Fabric(_))));
        assert_eq!(
            nb.fabric()
                .read()
                .table()
                .live()
                .filter(|r| r.kind != ItemKind::Collection)
                .count(),
            0
        );
    }

    #[test]
    fn physical_items_need_a_location() {
        let nb = notebook();
        let mut req = file_import("/study1/execution", "physical-sample", "s", b"", &[], ALICE);
        req.payload = Payload::Physical {
            archival_location: "shelf 2".into(),
        };
        let out = nb.import(req).unwrap();
        assert_eq!(out.item.kind, ItemKind::PhysicalItem);
        assert_eq!(out.item.content_digest, None);
        assert_eq!(
            out.item.metadata[ARCHIVAL_LOCATION_KEY],
            MetaValue::from("shelf 2")
        );
    }

    #[test]
    fn collections_follow_the_model() {
        let nb = notebook();
        assert!(matches!(
            nb.create_collection("/loose", "execution", Metadata::new()),
            Err(Error::Placement(_))
        ));
        assert!(matches!(
            nb.create_collection("/study1/execution/inner", "preparation", Metadata::new()),
            Err(Error::Placement(_))
        ));
        let made = nb
            .create_study("/exp", "experiment", Metadata::new())
            .unwrap();
        assert_eq!(made.len(), 6);
        assert_eq!(
            nb.collection_type_at("/exp/archiving").unwrap(),
            "archiving"
        );
    }

    #[test]
    fn copy_is_derived_from_the_original() {
        let nb = notebook();
        nb.create_study("/study2", "study", Metadata::new())
            .unwrap();
        let raw = nb
            .import(file_import(
                "/study1/execution",
                "raw-data",
                "raw",
                b"bytes",
                &[],
                ALICE,
            ))
            .unwrap();
        let copy = nb
            .copy_item(raw.item.item_id, "/study2/execution/raw", BOB)
            .unwrap();
        assert_ne!(copy.item.item_id, raw.item.item_id);
        assert_eq!(copy.item.content_digest, raw.item.content_digest);
        assert_eq!(copy.item.metadata, raw.item.metadata);

        let store = nb.provenance().view();
        let new = nb.subject_node(&store, copy.item.item_id).unwrap();
        let old = nb.subject_node(&store, raw.item.item_id).unwrap();
        assert_eq!(edges_from(&store, new, EdgeLabel::WasDerivedFrom), [old]);
        assert_eq!(edges_from(&store, new, EdgeLabel::WasGeneratedBy).len(), 1);
        let (_, origin) = nb
            .answer(copy.item.item_id, Question::Origin, false)
            .unwrap();
        assert_eq!(origin, Answer::Nodes([old].into()));

        let taken = nb.copy_item(raw.item.item_id, "/study2/execution/raw", BOB);
        assert!(matches!(
            taken,
            Err(Error::Fabric(
                provnote_core::fabric::FabricError::PathTaken(_)
            ))
        ));
        let misplaced = nb.copy_item(raw.item.item_id, "/study2/preparation/raw", BOB);
        assert!(matches!(misplaced, Err(Error::Placement(_))));
    }

    #[test]
    fn signatures_detect_tampering() {
        let mem = Arc::new(MemChunkStore::new());
        let fabric = FabricRepo::in_memory("site", counter_clock(0))
            .with_content(ContentStore::new(mem.clone()));
        let nb = Notebook::new(
            default_glp_spec(),
            Arc::new(fabric),
            Arc::new(LocalProvenance::in_memory()),
            Journal::in_memory(),
            KeyRegistry::default(),
        )
        .unwrap();
        nb.create_study("/s", "study", Metadata::new()).unwrap();
        let key = SigningKey::from_bytes(&[7; 32]);
        let a = nb
            .import(file_import(
                "/s/execution",
                "raw-data",
                "a",
                b"alpha",
                &[],
                ALICE,
            ))
            .unwrap()
            .item;
        let b = nb
            .import(file_import(
                "/s/execution",
                "raw-data",
                "b",
                b"beta",
                &[],
                ALICE,
            ))
            .unwrap()
            .item;

        assert!(matches!(
            nb.sign_item(a.item_id, &key, ALICE),
            Err(Error::UnknownSignerKey(_))
        ));
        nb.register_key(ALICE, &key.verifying_key());
        nb.sign_item(a.item_id, &key, ALICE).unwrap();
        nb.sign_item(b.item_id, &key, ALICE).unwrap();
        assert!(nb.verify_item(a.item_id).unwrap().iter().all(|c| c.valid));

        mem.tamper(&a.content_digest.unwrap(), |bytes| bytes[0] ^= 1);
        let checks = nb.verify_item(a.item_id).unwrap();
        assert_eq!(checks.len(), 1);
        assert!(!checks[0].valid);

        let patch = MetadataPatch::from([("note".to_string(), Some(MetaValue::from("edited")))]);
        nb.update_metadata(b.item_id, &patch).unwrap();
        assert_eq!(
            nb.verify_item(b.item_id).unwrap()[0].verdict,
            Verdict::DigestMismatch
        );
    }

    #[test]
    fn attached_signatures_must_verify() {
        let nb = notebook();
        let key = SigningKey::from_bytes(&[9; 32]);
        nb.register_key(BOB, &key.verifying_key());
        let item = nb
            .import(file_import(
                "/study1/execution",
                "raw-data",
                "a",
                b"a",
                &[],
                ALICE,
            ))
            .unwrap()
            .item;
        let good = signing::sign(&key, BOB, item.content_digest.as_ref(), &item.metadata, 5);
        let mut forged = good.clone();
        forged.signed_digest = Digest::of(b"other");
        assert!(matches!(
            nb.attach_signature(item.item_id, forged, BOB),
            Err(Error::InvalidSignature(_))
        ));
        assert!(matches!(
            nb.attach_signature(item.item_id, good.clone(), ALICE),
            Err(Error::UnknownSignerKey(_))
        ));
        let rec = nb.attach_signature(item.item_id, good, BOB).unwrap();
        assert_eq!(rec.signatures.len(), 1);
        let (_, quality) = nb.answer(item.item_id, Question::Quality, true).unwrap();
        let Answer::Quality(report) = quality else {
            panic!()
        };
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn search_matches_paths_and_string_metadata() {
        let nb = notebook();
        let study = seed_study(&nb, "/seeded", ALICE, BOB).unwrap();
        let hits: Vec<_> = nb
            .search("SPECIMEN")
            .into_iter()
            .map(|r| r.item_id)
            .collect();
        assert_eq!(hits, [study.specimen]);
        let all = nb.search("");
        assert_eq!(all.len(), nb.fabric().read().table().live().count());
        let paths: Vec<_> = all.iter().map(|r| r.path.clone()).collect();
        let mut sorted = paths.clone();
        sorted.sort();
        assert_eq!(paths, sorted);
        nb.delete_item(study.specimen).unwrap();
        assert!(nb.search("specimen").is_empty());
        assert_eq!(nb.search("raw-data").len(), 1);
    }

    #[test]
    fn progress_tracks_archiving() {
        let nb = notebook();
        let study = seed_study(&nb, "/seeded", ALICE, BOB).unwrap();
        let (_, p) = nb.answer(study.plan, Question::Progress, false).unwrap();
        assert_eq!(
            p,
            Answer::Progress(Progress {
                stage: provnote_core::glp::Stage::Preparation,
                finalized: true,
            })
        );
        let (_, p) = nb.answer(study.package, Question::Progress, false).unwrap();
        assert!(matches!(
            p,
            Answer::Progress(Progress {
                finalized: false,
                ..
            })
        ));
    }

    #[test]
    fn outage_rolls_the_import_back() {
        let sink = Arc::new(Flaky::default());
        let nb = Notebook::new(
            default_glp_spec(),
            Arc::new(FabricRepo::in_memory("site", counter_clock(0))),
            sink.clone(),
            Journal::in_memory(),
            KeyRegistry::default(),
        )
        .unwrap();
        nb.create_study("/s", "study", Metadata::new()).unwrap();
        sink.down.store(true, Ordering::SeqCst);
        let err = nb
            .import(file_import(
                "/s/execution",
                "raw-data",
                "a",
                b"a",
                &[],
                ALICE,
            ))
            .unwrap_err();
        assert!(matches!(err, Error::ProvenanceUnavailable(_)));
        assert!(nb.fabric().at_path("/s/execution/a").is_none());
        sink.down.store(false, Ordering::SeqCst);
        assert_eq!(nb.retry_pending().unwrap(), RecoveryReport::default());
        // the path is free again
        nb.import(file_import(
            "/s/execution",
            "raw-data",
            "a",
            b"a",
            &[],
            ALICE,
        ))
        .unwrap();
    }

    #[test]
    fn crashes_are_repaired_on_restart() {
        for point in [
            CrashPoint::AfterJournal,
            CrashPoint::AfterFabricWrite,
            CrashPoint::AfterProvenancePost,
        ] {
            let dir = tempfile::tempdir().unwrap();
            let open = || {
                Notebook::new(
                    default_glp_spec(),
                    Arc::new(
                        FabricRepo::open(&dir.path().join("fabric"), "site", counter_clock(0))
                            .unwrap(),
                    ),
                    Arc::new(LocalProvenance::open(&dir.path().join("store.snap")).unwrap()),
                    Journal::open(&dir.path().join("journal.log")).unwrap(),
                    KeyRegistry::default(),
                )
                .unwrap()
            };
            let nb = open();
            nb.create_study("/s", "study", Metadata::new()).unwrap();
            nb.set_crash_point(Some(point));
            let err = nb
                .import(file_import(
                    "/s/execution",
                    "raw-data",
                    "a",
                    b"a",
                    &[],
                    ALICE,
                ))
                .unwrap_err();
            assert!(matches!(err, Error::SimulatedCrash(p) if p == point));
            drop(nb);

            let nb = open();
            let report = nb.recovery_report();
            let item = nb.fabric().at_path("/s/execution/a");
            let store = nb.provenance().view();
            match point {
                CrashPoint::AfterJournal => {
                    assert_eq!(report.aborted, 1);
                    assert!(item.is_none());
                }
                _ => {
                    assert_eq!(report.committed, 1);
                    let item = item.unwrap();
                    let node = nb.subject_node(&store, item.item_id).unwrap();
                    assert_eq!(edges_from(&store, node, EdgeLabel::WasGeneratedBy).len(), 1);
                }
            }
            assert!(nb.retry_pending().unwrap() == RecoveryReport::default());
        }
    }
}
