//! Open Provenance Model property graph.
//!
//! Nodes are artifacts, processes or agents; edges are directed causal
//! relations whose endpoint kinds are fixed per label. Every node carries a
//! `type` annotation (its lowercase kind) and an `identifier` annotation, and
//! every annotation is indexed so that `get_by_key` is an index lookup rather
//! than a scan. Edges carry a `label` annotation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

/// Annotation key holding a node's lowercase kind name.
pub const TYPE_KEY: &str = "type";
/// Annotation key mirroring a node's identifier.
pub const IDENTIFIER_KEY: &str = "identifier";
/// Annotation key holding an edge's label name.
pub const LABEL_KEY: &str = "label";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Artifact,
    Process,
    Agent,
}

impl NodeKind {
    pub const ALL: [NodeKind; 3] = [NodeKind::Artifact, NodeKind::Process, NodeKind::Agent];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Artifact => "artifact",
            NodeKind::Process => "process",
            NodeKind::Agent => "agent",
        }
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown name `{0}`")]
pub struct UnknownName(pub String);

impl FromStr for NodeKind {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownName(s.into()))
    }
}

/// Causal relation labels. Each edge points from the effect to its cause.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeLabel {
    #[serde(rename = "used")]
    Used,
    #[serde(rename = "wasUndertakenBy")]
    WasUndertakenBy,
    #[serde(rename = "wasTriggeredBy")]
    WasTriggeredBy,
    #[serde(rename = "wasDerivedFrom")]
    WasDerivedFrom,
    #[serde(rename = "isBasedOn")]
    IsBasedOn,
    #[serde(rename = "wasGeneratedBy")]
    WasGeneratedBy,
}

impl EdgeLabel {
    pub const ALL: [EdgeLabel; 6] = [
        EdgeLabel::Used,
        EdgeLabel::WasUndertakenBy,
        EdgeLabel::WasTriggeredBy,
        EdgeLabel::WasDerivedFrom,
        EdgeLabel::IsBasedOn,
        EdgeLabel::WasGeneratedBy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeLabel::Used => "used",
            EdgeLabel::WasUndertakenBy => "wasUndertakenBy",
            EdgeLabel::WasTriggeredBy => "wasTriggeredBy",
            EdgeLabel::WasDerivedFrom => "wasDerivedFrom",
            EdgeLabel::IsBasedOn => "isBasedOn",
            EdgeLabel::WasGeneratedBy => "wasGeneratedBy",
        }
    }

    /// Required (source, target) kinds.
    pub fn endpoint_kinds(self) -> (NodeKind, NodeKind) {
        use NodeKind::*;
        match self {
            EdgeLabel::Used => (Process, Artifact),
            EdgeLabel::WasUndertakenBy => (Process, Agent),
            EdgeLabel::WasTriggeredBy => (Process, Process),
            EdgeLabel::WasDerivedFrom => (Artifact, Artifact),
            EdgeLabel::IsBasedOn => (Artifact, Artifact),
            EdgeLabel::WasGeneratedBy => (Artifact, Process),
        }
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for EdgeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeLabel {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| UnknownName(s.into()))
    }
}

pub type Annotations = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpmNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub identifier: String,
    pub annotations: Annotations,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpmEdge {
    pub id: EdgeId,
    pub label: EdgeLabel,
    pub source: NodeId,
    pub target: NodeId,
    pub annotations: Annotations,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Incoming,
    Outgoing,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("identifier must not be empty")]
    EmptyIdentifier,
    #[error("{kind} `{identifier}` already exists")]
    DuplicateIdentifier { kind: NodeKind, identifier: String },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown edge {0}")]
    UnknownEdge(EdgeId),
    #[error("`{label}` cannot connect {source_kind} -> {target_kind}")]
    EndpointKindViolation {
        label: EdgeLabel,
        source_kind: NodeKind,
        target_kind: NodeKind,
    },
    #[error("annotation `{0}` is maintained by the graph")]
    ReservedAnnotation(String),
}

/// Embedded OPM graph.
///
/// Mutation goes through `&mut self`; a shared `&Graph` (or an `Arc<Graph>`
/// view) can be read from any number of threads.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: BTreeMap<NodeId, OpmNode>,
    edges: BTreeMap<EdgeId, OpmEdge>,
    identifiers: BTreeMap<(NodeKind, String), NodeId>,
    key_index: BTreeMap<String, BTreeMap<String, BTreeSet<NodeId>>>,
    outgoing: BTreeMap<NodeId, Vec<EdgeId>>,
    incoming: BTreeMap<NodeId, Vec<EdgeId>>,
    next_node: u64,
    next_edge: u64,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Next ids to be handed out; ids are never reused.
    pub fn id_counters(&self) -> (u64, u64) {
        (self.next_node, self.next_edge)
    }

    pub fn add_node(
        &mut self,
        kind: NodeKind,
        identifier: &str,
        annotations: Annotations,
    ) -> Result<NodeId, GraphError> {
        self.check_new_node(kind, identifier)?;
        let id = NodeId(self.next_node);
        self.insert_node_unchecked(id, kind, identifier, annotations);
        Ok(id)
    }

    pub(crate) fn check_new_node(&self, kind: NodeKind, identifier: &str) -> Result<(), GraphError> {
        if identifier.is_empty() {
            return Err(GraphError::EmptyIdentifier);
        }
        if self.identifiers.contains_key(&(kind, String::from(identifier))) {
            return Err(GraphError::DuplicateIdentifier {
                kind,
                identifier: identifier.into(),
            });
        }
        Ok(())
    }

    fn insert_node_unchecked(
        &mut self,
        id: NodeId,
        kind: NodeKind,
        identifier: &str,
        mut annotations: Annotations,
    ) {
        annotations.insert(TYPE_KEY.into(), kind.as_str().into());
        annotations.insert(IDENTIFIER_KEY.into(), identifier.into());
        for (k, v) in &annotations {
            self.index_insert(k, v, id);
        }
        self.identifiers.insert((kind, identifier.into()), id);
        self.nodes.insert(
            id,
            OpmNode {
                id,
                kind,
                identifier: identifier.into(),
                annotations,
            },
        );
        self.next_node = self.next_node.max(id.0 + 1);
    }

    pub fn add_edge(
        &mut self,
        label: EdgeLabel,
        source: NodeId,
        target: NodeId,
        annotations: Annotations,
    ) -> Result<EdgeId, GraphError> {
        let source_kind = self.node(source).ok_or(GraphError::UnknownNode(source))?.kind;
        let target_kind = self.node(target).ok_or(GraphError::UnknownNode(target))?.kind;
        check_endpoints(label, source_kind, target_kind)?;
        let id = EdgeId(self.next_edge);
        self.insert_edge_unchecked(id, label, source, target, annotations);
        Ok(id)
    }

    fn insert_edge_unchecked(
        &mut self,
        id: EdgeId,
        label: EdgeLabel,
        source: NodeId,
        target: NodeId,
        mut annotations: Annotations,
    ) {
        annotations.insert(LABEL_KEY.into(), label.as_str().into());
        insert_sorted(self.outgoing.entry(source).or_default(), id);
        insert_sorted(self.incoming.entry(target).or_default(), id);
        self.edges.insert(
            id,
            OpmEdge {
                id,
                label,
                source,
                target,
                annotations,
            },
        );
        self.next_edge = self.next_edge.max(id.0 + 1);
    }

    /// Sets a node annotation, keeping the key index in step.
    pub fn set_annotation(&mut self, node: NodeId, key: &str, value: &str) -> Result<(), GraphError> {
        if key == TYPE_KEY || key == IDENTIFIER_KEY {
            return Err(GraphError::ReservedAnnotation(key.into()));
        }
        let entry = self.nodes.get_mut(&node).ok_or(GraphError::UnknownNode(node))?;
        let old = entry.annotations.insert(key.into(), value.into());
        if let Some(old) = old {
            self.index_remove(key, &old, node);
        }
        self.index_insert(key, value, node);
        Ok(())
    }

    pub fn set_edge_annotation(&mut self, edge: EdgeId, key: &str, value: &str) -> Result<(), GraphError> {
        if key == LABEL_KEY {
            return Err(GraphError::ReservedAnnotation(key.into()));
        }
        let entry = self.edges.get_mut(&edge).ok_or(GraphError::UnknownEdge(edge))?;
        entry.annotations.insert(key.into(), value.into());
        Ok(())
    }

    fn index_insert(&mut self, key: &str, value: &str, node: NodeId) {
        self.key_index
            .entry(key.into())
            .or_default()
            .entry(value.into())
            .or_default()
            .insert(node);
    }

    fn index_remove(&mut self, key: &str, value: &str, node: NodeId) {
        if let Some(values) = self.key_index.get_mut(key) {
            if let Some(set) = values.get_mut(value) {
                set.remove(&node);
                if set.is_empty() {
                    values.remove(value);
                }
            }
            if values.is_empty() {
                self.key_index.remove(key);
            }
        }
    }

    pub fn node(&self, id: NodeId) -> Option<&OpmNode> {
        self.nodes.get(&id)
    }

    pub fn edge(&self, id: EdgeId) -> Option<&OpmEdge> {
        self.edges.get(&id)
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn find(&self, kind: NodeKind, identifier: &str) -> Option<NodeId> {
        self.identifiers.get(&(kind, String::from(identifier))).copied()
    }

    /// Nodes in ascending id order.
    pub fn nodes(&self) -> impl Iterator<Item = &OpmNode> {
        self.nodes.values()
    }

    /// Edges in ascending id order.
    pub fn edges(&self) -> impl Iterator<Item = &OpmEdge> {
        self.edges.values()
    }

    /// Nodes whose annotations contain `property = value`.
    pub fn get_by_key(&self, property: &str, value: &str) -> BTreeSet<NodeId> {
        self.key_index
            .get(property)
            .and_then(|values| values.get(value))
            .cloned()
            .unwrap_or_default()
    }

    pub(crate) fn key_set(&self, property: &str, value: &str) -> Option<&BTreeSet<NodeId>> {
        self.key_index.get(property).and_then(|values| values.get(value))
    }

    /// Adjacent edges of `node` paired with the node at the other end, by
    /// ascending edge id.
    pub fn neighbors(
        &self,
        node: NodeId,
        direction: Direction,
        label: Option<EdgeLabel>,
    ) -> Result<Vec<(EdgeId, NodeId)>, GraphError> {
        if !self.contains_node(node) {
            return Err(GraphError::UnknownNode(node));
        }
        Ok(self
            .adjacent(node, direction)
            .iter()
            .map(|id| &self.edges[id])
            .filter(|e| label.is_none_or(|l| e.label == l))
            .map(|e| match direction {
                Direction::Incoming => (e.id, e.source),
                Direction::Outgoing => (e.id, e.target),
            })
            .collect())
    }

    /// Edge ids adjacent to `node`, ascending. Empty for unknown nodes.
    pub fn adjacent(&self, node: NodeId, direction: Direction) -> &[EdgeId] {
        let map = match direction {
            Direction::Incoming => &self.incoming,
            Direction::Outgoing => &self.outgoing,
        };
        map.get(&node).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Rebuilds a graph from stored elements, validating every invariant and
    /// preserving ids.
    pub fn from_parts(
        nodes: Vec<OpmNode>,
        edges: Vec<OpmEdge>,
        next_node: u64,
        next_edge: u64,
    ) -> Result<Self, GraphError> {
        let mut g = Graph::new();
        for node in nodes {
            g.check_new_node(node.kind, &node.identifier)?;
            if g.nodes.contains_key(&node.id) {
                return Err(GraphError::DuplicateIdentifier {
                    kind: node.kind,
                    identifier: node.identifier,
                });
            }
            g.insert_node_unchecked(node.id, node.kind, &node.identifier, node.annotations);
        }
        for edge in edges {
            let sk = g.node(edge.source).ok_or(GraphError::UnknownNode(edge.source))?.kind;
            let tk = g.node(edge.target).ok_or(GraphError::UnknownNode(edge.target))?.kind;
            check_endpoints(edge.label, sk, tk)?;
            if g.edges.contains_key(&edge.id) {
                return Err(GraphError::UnknownEdge(edge.id));
            }
            g.insert_edge_unchecked(edge.id, edge.label, edge.source, edge.target, edge.annotations);
        }
        g.next_node = g.next_node.max(next_node);
        g.next_edge = g.next_edge.max(next_edge);
        Ok(g)
    }

    /// Subgraph induced by `keep`, with original ids.
    pub fn induced(&self, keep: &BTreeSet<NodeId>) -> Graph {
        let nodes = keep.iter().filter_map(|id| self.nodes.get(id).cloned()).collect();
        let edges = self
            .edges
            .values()
            .filter(|e| keep.contains(&e.source) && keep.contains(&e.target))
            .cloned()
            .collect();
        // elements come from a valid graph, so re-validation cannot fail
        Graph::from_parts(nodes, edges, self.next_node, self.next_edge).unwrap_or_default()
    }

    /// Stable textual description used to compare graphs structurally.
    pub fn describe(&self, id: NodeId) -> String {
        match self.node(id) {
            Some(n) => alloc::format!("{}:{}", n.kind, n.identifier),
            None => id.to_string(),
        }
    }
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
            && self.edges == other.edges
            && self.next_node == other.next_node
            && self.next_edge == other.next_edge
    }
}

impl Eq for Graph {}

pub(crate) fn check_endpoints(
    label: EdgeLabel,
    source_kind: NodeKind,
    target_kind: NodeKind,
) -> Result<(), GraphError> {
    if label.endpoint_kinds() == (source_kind, target_kind) {
        Ok(())
    } else {
        Err(GraphError::EndpointKindViolation {
            label,
            source_kind,
            target_kind,
        })
    }
}

fn insert_sorted(list: &mut Vec<EdgeId>, id: EdgeId) {
    match list.last() {
        Some(last) if *last > id => {
            let pos = list.partition_point(|e| *e < id);
            list.insert(pos, id);
        }
        _ => list.push(id),
    }
}
