//! Evidential archive export: a report, everything that influenced it,
//! their payloads and the provenance subgraph, as a plain directory tree.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use provnote_core::canonical::to_canonical_json;
use provnote_core::fabric::{FabricError, ItemId, ItemRecord};
use provnote_core::opm::{OpmEdge, OpmNode};
use provnote_core::query::{lineage, LineageDirection};
use provnote_core::{Digest, NodeKind};
use serde::{Deserialize, Serialize};

use crate::content::ContentError;
use crate::error::{Error, Result};
use crate::files::write_atomic;
use crate::notebook::Notebook;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PROVENANCE_FILE: &str = "provenance.json";
pub const PAYLOAD_DIR: &str = "payload";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub report: ItemId,
    /// Sorted by item id.
    pub items: Vec<ItemRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceExport {
    pub nodes: Vec<OpmNode>,
    pub edges: Vec<OpmEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveSummary {
    pub report: ItemId,
    pub items: usize,
    pub payload_files: usize,
    pub total_bytes: u64,
    pub provenance_nodes: usize,
    pub provenance_edges: usize,
}

/// Item ids of the report and every artifact among its ancestors.
pub fn archive_closure(
    nb: &Notebook,
    report: ItemId,
) -> Result<(BTreeSet<ItemId>, ProvenanceExport)> {
    let store = nb.provenance().view();
    let graph = store.graph();
    let subject = graph
        .find(NodeKind::Artifact, &report.to_string())
        .ok_or_else(|| {
            Error::ProvenanceUnavailable(format!("no artifact node for report {report}"))
        })?;
    let mut keep = lineage(graph, subject, LineageDirection::Ancestors, None)
        .map_err(provnote_core::query::AnswerError::from)?;
    keep.insert(subject);
    let mut items = BTreeSet::new();
    for id in &keep {
        let node = graph.node(*id).expect("lineage yields existing nodes");
        if node.kind != NodeKind::Artifact {
            continue;
        }
        let item: ItemId = node
            .identifier
            .parse()
            .map_err(|_| Error::UnresolvedArtifact(node.identifier.clone()))?;
        items.insert(item);
    }
    let sub = graph.induced(&keep);
    let export = ProvenanceExport {
        nodes: sub.nodes().cloned().collect(),
        edges: sub.edges().cloned().collect(),
    };
    Ok((items, export))
}

pub fn export_archive(nb: &Notebook, report: ItemId, out: &Path) -> Result<ArchiveSummary> {
    nb.fabric()
        .get_live(&report)
        .ok_or(FabricError::UnknownItem(report))?;
    let (ids, provenance) = archive_closure(nb, report)?;
    let mut items = Vec::with_capacity(ids.len());
    for id in &ids {
        // tombstoned ancestors are still part of the record
        items.push(
            nb.fabric()
                .get(id)
                .ok_or_else(|| Error::UnresolvedArtifact(id.to_string()))?,
        );
    }

    let payload_dir = out.join(PAYLOAD_DIR);
    fs::create_dir_all(&payload_dir)?;
    let mut digests = BTreeSet::new();
    let mut total_bytes = 0;
    for item in &items {
        let Some(digest) = item.content_digest else {
            continue;
        };
        if !digests.insert(digest) {
            continue;
        }
        let path = payload_dir.join(digest.to_hex());
        let mut w = BufWriter::new(File::create(&path)?);
        total_bytes += nb
            .fabric()
            .content()
            .copy_to(&digest, &mut w)
            .map_err(|e| match e {
                ContentError::ChunkMissing { .. } | ContentError::UnknownDigest(_) => {
                    Error::MissingPayload(digest)
                }
                e => e.into(),
            })?;
        w.flush()?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    }

    let summary = ArchiveSummary {
        report,
        items: items.len(),
        payload_files: digests.len(),
        total_bytes,
        provenance_nodes: provenance.nodes.len(),
        provenance_edges: provenance.edges.len(),
    };
    write_atomic(&out.join(PROVENANCE_FILE), &to_canonical_json(&provenance)?)?;
    write_atomic(
        &out.join(MANIFEST_FILE),
        &to_canonical_json(&Manifest { report, items })?,
    )?;
    Ok(summary)
}

/// Re-hashes every payload named by the manifest. Returns the manifest on
/// success.
pub fn verify_archive(dir: &Path) -> Result<Manifest> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    let _: ProvenanceExport = serde_json::from_slice(&fs::read(dir.join(PROVENANCE_FILE))?)?;
    for item in &manifest.items {
        let Some(expected) = item.content_digest else {
            continue;
        };
        let path = dir.join(PAYLOAD_DIR).join(expected.to_hex());
        let bytes = fs::read(&path).map_err(|_| Error::MissingPayload(expected))?;
        let actual = Digest::of(&bytes);
        if actual != expected {
            return Err(Error::DigestMismatch { expected, actual });
        }
    }
    Ok(manifest)
}
