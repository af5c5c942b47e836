//! Binary snapshot of a [`Graph`].
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    b"OPMSNAP1"
//! u64      next node id
//! u64      next edge id
//! u32      node count, then per node:  u32 record length, record
//! u32      edge count, then per edge:  u32 record length, record
//! [u8; 32] SHA-256 of every preceding byte
//! ```
//!
//! A node record is `u64 id, u8 kind, str identifier, annotations`; an edge
//! record is `u64 id, u8 label, u64 source, u64 target, annotations`. A `str`
//! is a `u32` byte length followed by UTF-8; `annotations` is a `u32` count of
//! `str key, str value` pairs in key order. Records appear in ascending id
//! order, so equal graphs produce identical bytes. The `type`, `identifier`
//! and `label` annotations are implied and not written.

use alloc::string::String;
use alloc::vec::Vec;

use crate::digest::Digest;
use crate::opm::{
    Annotations, EdgeId, EdgeLabel, Graph, GraphError, NodeId, NodeKind, OpmEdge, OpmNode, IDENTIFIER_KEY,
    LABEL_KEY, TYPE_KEY,
};

pub const MAGIC: &[u8; 8] = b"OPMSNAP1";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SnapshotError {
    #[error("corrupt snapshot at byte offset {offset}")]
    Corrupt { offset: usize },
    #[error("snapshot violates graph invariants: {0}")]
    Invalid(#[from] GraphError),
}

pub fn encode(graph: &Graph) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let (next_node, next_edge) = graph.id_counters();
    out.extend_from_slice(&next_node.to_le_bytes());
    out.extend_from_slice(&next_edge.to_le_bytes());

    out.extend_from_slice(&(graph.node_count() as u32).to_le_bytes());
    let mut rec = Vec::new();
    for node in graph.nodes() {
        rec.clear();
        rec.extend_from_slice(&node.id.0.to_le_bytes());
        rec.push(node.kind.code());
        put_str(&mut rec, &node.identifier);
        put_annotations(&mut rec, &node.annotations, &[TYPE_KEY, IDENTIFIER_KEY]);
        put_record(&mut out, &rec);
    }

    out.extend_from_slice(&(graph.edge_count() as u32).to_le_bytes());
    for edge in graph.edges() {
        rec.clear();
        rec.extend_from_slice(&edge.id.0.to_le_bytes());
        rec.push(edge.label.code());
        rec.extend_from_slice(&edge.source.0.to_le_bytes());
        rec.extend_from_slice(&edge.target.0.to_le_bytes());
        put_annotations(&mut rec, &edge.annotations, &[LABEL_KEY]);
        put_record(&mut out, &rec);
    }

    let checksum = Digest::of(&out);
    out.extend_from_slice(checksum.as_bytes());
    out
}

/// Decodes and re-validates a snapshot: endpoint typing and identifier
/// uniqueness are checked again, not trusted.
pub fn decode(bytes: &[u8]) -> Result<Graph, SnapshotError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(SnapshotError::Corrupt { offset: 0 });
    }
    let next_node = r.u64()?;
    let next_edge = r.u64()?;

    let node_count = r.u32()? as usize;
    let mut nodes = Vec::with_capacity(node_count.min(1 << 16));
    for _ in 0..node_count {
        let mut rec = r.record()?;
        let id = NodeId(rec.u64()?);
        let kind_at = rec.absolute();
        let kind = NodeKind::from_code(rec.u8()?).ok_or(SnapshotError::Corrupt { offset: kind_at })?;
        let identifier = rec.string()?;
        let annotations = rec.annotations()?;
        rec.finish()?;
        nodes.push(OpmNode {
            id,
            kind,
            identifier,
            annotations,
        });
    }

    let edge_count = r.u32()? as usize;
    let mut edges = Vec::with_capacity(edge_count.min(1 << 16));
    for _ in 0..edge_count {
        let mut rec = r.record()?;
        let id = EdgeId(rec.u64()?);
        let label_at = rec.absolute();
        let label = EdgeLabel::from_code(rec.u8()?).ok_or(SnapshotError::Corrupt { offset: label_at })?;
        let source = NodeId(rec.u64()?);
        let target = NodeId(rec.u64()?);
        let annotations = rec.annotations()?;
        rec.finish()?;
        edges.push(OpmEdge {
            id,
            label,
            source,
            target,
            annotations,
        });
    }

    let body_end = r.pos;
    let stored = r.take(32)?;
    if r.pos != bytes.len() {
        return Err(SnapshotError::Corrupt { offset: r.pos });
    }
    if Digest::of(&bytes[..body_end]).as_bytes() != stored {
        return Err(SnapshotError::Corrupt { offset: body_end });
    }
    check_ascending(nodes.iter().map(|n| n.id.0))?;
    check_ascending(edges.iter().map(|e| e.id.0))?;
    Ok(Graph::from_parts(nodes, edges, next_node, next_edge)?)
}

fn check_ascending(ids: impl Iterator<Item = u64>) -> Result<(), SnapshotError> {
    let mut last = None;
    for id in ids {
        if last.is_some_and(|l| l >= id) {
            return Err(SnapshotError::Invalid(GraphError::UnknownNode(NodeId(id))));
        }
        last = Some(id);
    }
    Ok(())
}

fn put_record(out: &mut Vec<u8>, rec: &[u8]) {
    out.extend_from_slice(&(rec.len() as u32).to_le_bytes());
    out.extend_from_slice(rec);
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_annotations(out: &mut Vec<u8>, annotations: &Annotations, implied: &[&str]) {
    let kept: Vec<(&String, &String)> = annotations
        .iter()
        .filter(|(k, _)| !implied.contains(&k.as_str()))
        .collect();
    out.extend_from_slice(&(kept.len() as u32).to_le_bytes());
    for (k, v) in kept {
        put_str(out, k);
        put_str(out, v);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

struct RecordReader<'a> {
    inner: Reader<'a>,
    base: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|end| *end <= self.bytes.len())
            .ok_or(SnapshotError::Corrupt { offset: self.pos })?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, SnapshotError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap_or([0; 4])))
    }

    fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap_or([0; 8])))
    }

    fn record(&mut self) -> Result<RecordReader<'a>, SnapshotError> {
        let len = self.u32()? as usize;
        let base = self.pos;
        let bytes = self.take(len)?;
        Ok(RecordReader {
            inner: Reader { bytes, pos: 0 },
            base,
        })
    }
}

impl RecordReader<'_> {
    fn absolute(&self) -> usize {
        self.base + self.inner.pos
    }

    fn wrap<T>(&self, r: Result<T, SnapshotError>) -> Result<T, SnapshotError> {
        r.map_err(|e| match e {
            SnapshotError::Corrupt { offset } => SnapshotError::Corrupt {
                offset: self.base + offset,
            },
            other => other,
        })
    }

    fn u8(&mut self) -> Result<u8, SnapshotError> {
        let r = self.inner.u8();
        self.wrap(r)
    }

    fn u32(&mut self) -> Result<u32, SnapshotError> {
        let r = self.inner.u32();
        self.wrap(r)
    }

    fn u64(&mut self) -> Result<u64, SnapshotError> {
        let r = self.inner.u64();
        self.wrap(r)
    }

    fn string(&mut self) -> Result<String, SnapshotError> {
        let len = self.u32()? as usize;
        let at = self.absolute();
        let r = self.inner.take(len);
        let bytes = self.wrap(r)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| SnapshotError::Corrupt { offset: at })
    }

    fn annotations(&mut self) -> Result<Annotations, SnapshotError> {
        let count = self.u32()?;
        let mut out = Annotations::new();
        for _ in 0..count {
            let at = self.absolute();
            let k = self.string()?;
            let v = self.string()?;
            if out.insert(k, v).is_some() {
                return Err(SnapshotError::Corrupt { offset: at });
            }
        }
        Ok(out)
    }

    fn finish(&self) -> Result<(), SnapshotError> {
        if self.inner.pos == self.inner.bytes.len() {
            Ok(())
        } else {
            Err(SnapshotError::Corrupt {
                offset: self.absolute(),
            })
        }
    }
}
