//! Provenance store: a [`Graph`] plus the batch-id registry that makes
//! assertion batches idempotent.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::opm::{check_endpoints, Annotations, EdgeId, EdgeLabel, Graph, GraphError, NodeId, NodeKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub kind: NodeKind,
    pub identifier: String,
    #[serde(default)]
    pub annotations: Annotations,
    /// Reuse an existing node with the same kind and identifier instead of
    /// failing with `DuplicateIdentifier`.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub if_absent: bool,
}

impl NodeSpec {
    pub fn new(kind: NodeKind, identifier: impl Into<String>) -> Self {
        NodeSpec {
            kind,
            identifier: identifier.into(),
            annotations: Annotations::new(),
            if_absent: false,
        }
    }

    pub fn annotate(mut self, key: &str, value: impl Into<String>) -> Self {
        self.annotations.insert(key.into(), value.into());
        self
    }

    pub fn reuse(mut self) -> Self {
        self.if_absent = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeRef {
    pub kind: NodeKind,
    pub identifier: String,
}

impl NodeRef {
    pub fn new(kind: NodeKind, identifier: impl Into<String>) -> Self {
        NodeRef {
            kind,
            identifier: identifier.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub label: EdgeLabel,
    pub source: NodeRef,
    pub target: NodeRef,
    #[serde(default)]
    pub annotations: Annotations,
}

impl EdgeSpec {
    pub fn new(label: EdgeLabel, source: NodeRef, target: NodeRef) -> Self {
        EdgeSpec {
            label,
            source,
            target,
            annotations: Annotations::new(),
        }
    }
}

/// Nodes and edges emitted by one notebook action, applied all-or-nothing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionBatch {
    pub batch_id: String,
    #[serde(default)]
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
}

impl AssertionBatch {
    pub fn new(batch_id: impl Into<String>) -> Self {
        AssertionBatch {
            batch_id: batch_id.into(),
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchReceipt {
    pub node_ids: Vec<NodeId>,
    pub edge_ids: Vec<EdgeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BatchError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("edge endpoint {} `{}` is neither in the batch nor in the store", .0.kind, .0.identifier)]
    UnknownNodeRef(NodeRef),
    #[error("batch id must not be empty")]
    EmptyBatchId,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreStats {
    pub nodes: usize,
    pub edges: usize,
    pub batches: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProvenanceStore {
    graph: Graph,
    receipts: BTreeMap<String, BatchReceipt>,
}

impl ProvenanceStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(graph: Graph, receipts: BTreeMap<String, BatchReceipt>) -> Self {
        ProvenanceStore { graph, receipts }
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn receipts(&self) -> &BTreeMap<String, BatchReceipt> {
        &self.receipts
    }

    pub fn receipt(&self, batch_id: &str) -> Option<&BatchReceipt> {
        self.receipts.get(batch_id)
    }

    pub fn stats(&self) -> StoreStats {
        StoreStats {
            nodes: self.graph.node_count(),
            edges: self.graph.edge_count(),
            batches: self.receipts.len(),
        }
    }

    /// Applies `batch` atomically. A batch id seen before returns the
    /// original receipt and leaves the graph unchanged.
    pub fn apply(&mut self, batch: &AssertionBatch) -> Result<BatchReceipt, BatchError> {
        if batch.batch_id.is_empty() {
            return Err(BatchError::EmptyBatchId);
        }
        if let Some(receipt) = self.receipts.get(&batch.batch_id) {
            return Ok(receipt.clone());
        }

        // validation pass: nothing below mutates until every check passed
        let mut planned: BTreeMap<NodeRef, Option<NodeId>> = BTreeMap::new();
        for spec in &batch.nodes {
            let key = NodeRef::new(spec.kind, spec.identifier.clone());
            if planned.contains_key(&key) {
                if spec.if_absent {
                    continue;
                }
                return Err(GraphError::DuplicateIdentifier {
                    kind: spec.kind,
                    identifier: spec.identifier.clone(),
                }
                .into());
            }
            match self.graph.check_new_node(spec.kind, &spec.identifier) {
                Ok(()) => {
                    planned.insert(key, None);
                }
                Err(GraphError::DuplicateIdentifier { .. }) if spec.if_absent => {
                    planned.insert(key, self.graph.find(spec.kind, &spec.identifier));
                }
                Err(e) => return Err(e.into()),
            }
        }
        let kind_of = |r: &NodeRef| -> Result<NodeKind, BatchError> {
            if planned.contains_key(r) || self.graph.find(r.kind, &r.identifier).is_some() {
                Ok(r.kind)
            } else {
                Err(BatchError::UnknownNodeRef(r.clone()))
            }
        };
        for edge in &batch.edges {
            let sk = kind_of(&edge.source)?;
            let tk = kind_of(&edge.target)?;
            check_endpoints(edge.label, sk, tk)?;
        }

        let mut receipt = BatchReceipt::default();
        let mut seen = BTreeSet::new();
        for spec in &batch.nodes {
            let key = NodeRef::new(spec.kind, spec.identifier.clone());
            if !seen.insert(key.clone()) {
                continue;
            }
            let id = match planned.get(&key).copied().flatten() {
                Some(existing) => existing,
                None => self
                    .graph
                    .add_node(spec.kind, &spec.identifier, spec.annotations.clone())?,
            };
            receipt.node_ids.push(id);
        }
        for edge in &batch.edges {
            let resolve = |r: &NodeRef| {
                self.graph
                    .find(r.kind, &r.identifier)
                    .ok_or_else(|| BatchError::UnknownNodeRef(r.clone()))
            };
            let (s, t) = (resolve(&edge.source)?, resolve(&edge.target)?);
            receipt
                .edge_ids
                .push(self.graph.add_edge(edge.label, s, t, edge.annotations.clone())?);
        }
        self.receipts.insert(batch.batch_id.clone(), receipt.clone());
        Ok(receipt)
    }
}
