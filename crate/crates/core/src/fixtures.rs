//! Reference provenance graphs shared by unit tests, integration tests and
//! the acceptance suite.

use alloc::collections::BTreeMap;
use alloc::string::String;

use crate::opm::{EdgeLabel, Graph, NodeId, NodeKind};
use crate::store::{AssertionBatch, EdgeSpec, NodeRef, NodeSpec, ProvenanceStore};

use EdgeLabel::*;
use NodeKind::*;

/// Biological-study example: a scientist's thinking yields a discovery and
/// triggers experimenting on specimen samples, which generates results that
/// a research paper is based on.
pub const FIG3_NODES: &[(NodeKind, &str)] = &[
    (Agent, "scientistX"),
    (Process, "thinking"),
    (Artifact, "discovery"),
    (Process, "experimenting"),
    (Artifact, "specimen samples"),
    (Artifact, "results"),
    (Artifact, "research paper"),
];

pub type EdgeRow = (EdgeLabel, (NodeKind, &'static str), (NodeKind, &'static str));

pub const FIG3_EDGES: &[EdgeRow] = &[
    (WasUndertakenBy, (Process, "thinking"), (Agent, "scientistX")),
    (WasGeneratedBy, (Artifact, "discovery"), (Process, "thinking")),
    (WasTriggeredBy, (Process, "experimenting"), (Process, "thinking")),
    (Used, (Process, "experimenting"), (Artifact, "specimen samples")),
    (WasUndertakenBy, (Process, "experimenting"), (Agent, "scientistX")),
    (WasGeneratedBy, (Artifact, "results"), (Process, "experimenting")),
    (IsBasedOn, (Artifact, "research paper"), (Artifact, "results")),
];

fn batch_from(
    batch_id: &str,
    nodes: &[(NodeKind, &str)],
    annotations: &[(&str, &[(&str, &str)])],
    edges: &[EdgeRow],
) -> AssertionBatch {
    let mut batch = AssertionBatch::new(batch_id);
    for (kind, ident) in nodes {
        let mut spec = NodeSpec::new(*kind, *ident);
        if let Some((_, pairs)) = annotations.iter().find(|(name, _)| name == ident) {
            for (k, v) in pairs.iter() {
                spec = spec.annotate(k, *v);
            }
        }
        batch.nodes.push(spec);
    }
    for (label, (sk, s), (tk, t)) in edges {
        batch
            .edges
            .push(EdgeSpec::new(*label, NodeRef::new(*sk, *s), NodeRef::new(*tk, *t)));
    }
    batch
}

fn graph_from(batch: &AssertionBatch) -> Graph {
    let mut store = ProvenanceStore::new();
    store.apply(batch).expect("fixture batch is valid");
    store.graph().clone()
}

fn named(g: Graph, nodes: &'static [(NodeKind, &'static str)]) -> (Graph, BTreeMap<&'static str, NodeId>) {
    let ids = nodes
        .iter()
        .map(|(k, name)| (*name, g.find(*k, name).expect("fixture node")))
        .collect();
    (g, ids)
}

pub fn fig3_batch() -> AssertionBatch {
    batch_from("fig3", FIG3_NODES, &[], FIG3_EDGES)
}

pub fn fig3() -> (Graph, BTreeMap<&'static str, NodeId>) {
    named(graph_from(&fig3_batch()), FIG3_NODES)
}

/// A study whose five GLP stages are all populated.
pub const GLP_NODES: &[(NodeKind, &str)] = &[
    (Agent, "CN=Alice"),
    (Agent, "CN=Bob"),
    (Process, "preparation"),
    (Process, "execution"),
    (Process, "evaluation"),
    (Process, "interpretation"),
    (Process, "archiving"),
    (Artifact, "study-plan"),
    (Artifact, "manual"),
    (Artifact, "specimen"),
    (Artifact, "raw-data"),
    (Artifact, "processed-data"),
    (Artifact, "reference-data"),
    (Artifact, "report"),
    (Artifact, "archive-package"),
];

pub const GLP_ANNOTATIONS: &[(&str, &[(&str, &str)])] = &[
    ("preparation", &[("stage", "preparation")]),
    ("execution", &[("stage", "execution")]),
    ("evaluation", &[("stage", "evaluation")]),
    ("interpretation", &[("stage", "interpretation")]),
    ("archiving", &[("stage", "archiving")]),
    ("study-plan", &[("project", "study1"), ("creator", "CN=Alice"), ("created", "2011-07-01"), ("item_type", "study-plan")]),
    ("manual", &[("project", "study1"), ("creator", "CN=Alice"), ("created", "2011-07-01"), ("item_type", "manual")]),
    ("specimen", &[("project", "biobank"), ("creator", "CN=Bob"), ("created", "2011-06-20"), ("item_type", "physical-sample")]),
    ("raw-data", &[("project", "study1"), ("creator", "CN=Bob"), ("created", "2011-07-04"), ("item_type", "raw-data")]),
    ("processed-data", &[("project", "study1"), ("creator", "CN=Alice"), ("created", "2011-07-05"), ("item_type", "processed-data")]),
    ("reference-data", &[("project", "other"), ("creator", "CN=Carol"), ("created", "2010-01-10"), ("item_type", "processed-data")]),
    ("report", &[("project", "study1"), ("creator", "CN=Alice"), ("created", "2011-07-08"), ("item_type", "report")]),
    ("archive-package", &[("project", "study1"), ("creator", "CN=Bob"), ("created", "2011-07-10"), ("item_type", "archive-package")]),
];

pub const GLP_EDGES: &[EdgeRow] = &[
    (WasUndertakenBy, (Process, "preparation"), (Agent, "CN=Alice")),
    (WasGeneratedBy, (Artifact, "study-plan"), (Process, "preparation")),
    (WasGeneratedBy, (Artifact, "manual"), (Process, "preparation")),
    (WasTriggeredBy, (Process, "execution"), (Process, "preparation")),
    (Used, (Process, "execution"), (Artifact, "study-plan")),
    (Used, (Process, "execution"), (Artifact, "specimen")),
    (WasUndertakenBy, (Process, "execution"), (Agent, "CN=Bob")),
    (WasGeneratedBy, (Artifact, "raw-data"), (Process, "execution")),
    (Used, (Process, "evaluation"), (Artifact, "raw-data")),
    (WasUndertakenBy, (Process, "evaluation"), (Agent, "CN=Alice")),
    (WasGeneratedBy, (Artifact, "processed-data"), (Process, "evaluation")),
    (Used, (Process, "interpretation"), (Artifact, "processed-data")),
    (Used, (Process, "interpretation"), (Artifact, "reference-data")),
    (WasUndertakenBy, (Process, "interpretation"), (Agent, "CN=Alice")),
    (WasGeneratedBy, (Artifact, "report"), (Process, "interpretation")),
    (IsBasedOn, (Artifact, "report"), (Artifact, "processed-data")),
    (Used, (Process, "archiving"), (Artifact, "report")),
    (Used, (Process, "archiving"), (Artifact, "raw-data")),
    (WasUndertakenBy, (Process, "archiving"), (Agent, "CN=Bob")),
    (WasGeneratedBy, (Artifact, "archive-package"), (Process, "archiving")),
];

pub fn glp_study_batch() -> AssertionBatch {
    batch_from("glp-study", GLP_NODES, GLP_ANNOTATIONS, GLP_EDGES)
}

pub fn glp_study() -> (Graph, BTreeMap<&'static str, NodeId>) {
    named(graph_from(&glp_study_batch()), GLP_NODES)
}

/// Identifier of a node, or an empty string if it does not exist.
pub fn label_of(g: &Graph, id: NodeId) -> String {
    g.node(id).map(|n| n.identifier.clone()).unwrap_or_default()
}
