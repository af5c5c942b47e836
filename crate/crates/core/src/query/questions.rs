//! Canned answers to the six provenance question types a lab notebook gets
//! asked: origin, inheritance, participants, dependencies, progress, quality.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::lineage::{lineage, LineageDirection};
use crate::glp::Stage;
use crate::opm::{Direction, EdgeLabel, Graph, GraphError, NodeId, NodeKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Question {
    /// Which artifacts were used to produce the subject.
    Origin,
    /// Which artifacts were produced from the subject.
    Inheritance,
    /// Which agents took part anywhere in the subject's lineage.
    Participants,
    /// Which origin artifacts belong to another project.
    Dependencies,
    /// Which stage produced the subject, and whether it has been archived.
    Progress,
    /// Which quality rules the lineage violates.
    Quality,
}

impl Question {
    pub const ALL: [Question; 6] = [
        Question::Origin,
        Question::Inheritance,
        Question::Participants,
        Question::Dependencies,
        Question::Progress,
        Question::Quality,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Question::Origin => "origin",
            Question::Inheritance => "inheritance",
            Question::Participants => "participants",
            Question::Dependencies => "dependencies",
            Question::Progress => "progress",
            Question::Quality => "quality",
        }
    }
}

impl core::str::FromStr for Question {
    type Err = crate::opm::UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|q| q.as_str() == s)
            .ok_or_else(|| crate::opm::UnknownName(s.into()))
    }
}

/// Annotation key scoping artifacts to a project.
pub const PROJECT_KEY: &str = "project";
/// Annotation key holding a process's GLP stage.
pub const STAGE_KEY: &str = "stage";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub stage: Stage,
    pub finalized: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityViolation {
    pub rule: String,
    pub node: NodeId,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityReport {
    pub subject: NodeId,
    /// Nodes examined: the subject and all its ancestors.
    pub checked: usize,
    pub violations: Vec<QualityViolation>,
}

impl QualityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Answer {
    Nodes(BTreeSet<NodeId>),
    Progress(Progress),
    Quality(QualityReport),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnswerError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("the quality question needs a ruleset")]
    MissingRuleset,
    #[error("no stage annotation on the process generating {0}")]
    NoStage(NodeId),
}

pub trait QualityRule: Send + Sync {
    fn name(&self) -> &str;

    /// Appends violations found among `closure` (subject included).
    fn check(&self, graph: &Graph, subject: NodeId, closure: &BTreeSet<NodeId>, out: &mut Vec<QualityViolation>);
}

/// Every artifact carries each of `keys` as an annotation.
pub struct MetadataCompleteness {
    pub keys: Vec<String>,
}

impl QualityRule for MetadataCompleteness {
    fn name(&self) -> &str {
        "metadata-completeness"
    }

    fn check(&self, graph: &Graph, _subject: NodeId, closure: &BTreeSet<NodeId>, out: &mut Vec<QualityViolation>) {
        for node in closure.iter().filter_map(|id| graph.node(*id)) {
            if node.kind != NodeKind::Artifact {
                continue;
            }
            for key in &self.keys {
                if !node.annotations.contains_key(key) {
                    out.push(QualityViolation {
                        rule: self.name().into(),
                        node: node.id,
                        detail: format!("artifact `{}` lacks `{key}`", node.identifier),
                    });
                }
            }
        }
    }
}

/// Every process was undertaken by at least one agent.
pub struct AgentPresence;

impl QualityRule for AgentPresence {
    fn name(&self) -> &str {
        "agent-presence"
    }

    fn check(&self, graph: &Graph, _subject: NodeId, closure: &BTreeSet<NodeId>, out: &mut Vec<QualityViolation>) {
        for node in closure.iter().filter_map(|id| graph.node(*id)) {
            if node.kind != NodeKind::Process {
                continue;
            }
            let has_agent = graph
                .neighbors(node.id, Direction::Outgoing, Some(EdgeLabel::WasUndertakenBy))
                .is_ok_and(|n| !n.is_empty());
            if !has_agent {
                out.push(QualityViolation {
                    rule: self.name().into(),
                    node: node.id,
                    detail: format!("process `{}` has no wasUndertakenBy edge", node.identifier),
                });
            }
        }
    }
}

/// The subject carries a signature that verified. The verdict is computed by
/// the caller, which holds the payloads and keys.
pub struct SubjectSigned {
    pub verified: Option<bool>,
}

impl QualityRule for SubjectSigned {
    fn name(&self) -> &str {
        "subject-signed"
    }

    fn check(&self, graph: &Graph, subject: NodeId, _closure: &BTreeSet<NodeId>, out: &mut Vec<QualityViolation>) {
        let detail = match self.verified {
            Some(true) => return,
            Some(false) => "signature does not verify",
            None => "subject is not signed",
        };
        out.push(QualityViolation {
            rule: self.name().into(),
            node: subject,
            detail: format!("`{}`: {detail}", graph.describe(subject)),
        });
    }
}

#[derive(Default)]
pub struct Ruleset {
    rules: Vec<Box<dyn QualityRule>>,
}

impl Ruleset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Metadata completeness over `keys` plus agent presence.
    pub fn builtin<S: AsRef<str>>(keys: &[S]) -> Self {
        Ruleset::new()
            .with(MetadataCompleteness {
                keys: keys.iter().map(|k| String::from(k.as_ref())).collect(),
            })
            .with(AgentPresence)
    }

    pub fn with(mut self, rule: impl QualityRule + 'static) -> Self {
        self.rules.push(Box::new(rule));
        self
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

#[derive(Default, Clone, Copy)]
pub struct AnswerContext<'a> {
    pub ruleset: Option<&'a Ruleset>,
}

pub fn answer(graph: &Graph, question: Question, subject: NodeId, ctx: AnswerContext<'_>) -> Result<Answer, AnswerError> {
    if !graph.contains_node(subject) {
        return Err(GraphError::UnknownNode(subject).into());
    }
    let of_kind = |set: BTreeSet<NodeId>, kind: NodeKind| -> BTreeSet<NodeId> {
        set.into_iter()
            .filter(|id| graph.node(*id).is_some_and(|n| n.kind == kind))
            .collect()
    };
    Ok(match question {
        Question::Origin => Answer::Nodes(origin(graph, subject)?),
        Question::Inheritance => Answer::Nodes(of_kind(
            lineage(graph, subject, LineageDirection::Descendants, None)?,
            NodeKind::Artifact,
        )),
        Question::Participants => Answer::Nodes(participants(graph, subject)?),
        Question::Dependencies => {
            let own = project_of(graph, subject);
            Answer::Nodes(
                origin(graph, subject)?
                    .into_iter()
                    .filter(|id| project_of(graph, *id) != own)
                    .collect(),
            )
        }
        Question::Progress => Answer::Progress(progress(graph, subject)?),
        Question::Quality => {
            let ruleset = ctx.ruleset.ok_or(AnswerError::MissingRuleset)?;
            let mut closure = lineage(graph, subject, LineageDirection::Ancestors, None)?;
            closure.insert(subject);
            let mut violations = Vec::new();
            for rule in &ruleset.rules {
                rule.check(graph, subject, &closure, &mut violations);
            }
            Answer::Quality(QualityReport {
                subject,
                checked: closure.len(),
                violations,
            })
        }
    })
}

fn origin(graph: &Graph, subject: NodeId) -> Result<BTreeSet<NodeId>, GraphError> {
    Ok(lineage(graph, subject, LineageDirection::Ancestors, None)?
        .into_iter()
        .filter(|id| graph.node(*id).is_some_and(|n| n.kind == NodeKind::Artifact))
        .collect())
}

/// Agents undertaking any process among the subject, its ancestors and its
/// descendants.
fn participants(graph: &Graph, subject: NodeId) -> Result<BTreeSet<NodeId>, GraphError> {
    let mut closure = lineage(graph, subject, LineageDirection::Ancestors, None)?;
    closure.extend(lineage(graph, subject, LineageDirection::Descendants, None)?);
    closure.insert(subject);
    let mut agents = BTreeSet::new();
    for id in closure {
        if graph.node(id).is_some_and(|n| n.kind == NodeKind::Process) {
            for (_, agent) in graph.neighbors(id, Direction::Outgoing, Some(EdgeLabel::WasUndertakenBy))? {
                agents.insert(agent);
            }
        }
    }
    Ok(agents)
}

fn project_of(graph: &Graph, id: NodeId) -> Option<&str> {
    graph
        .node(id)
        .and_then(|n| n.annotations.get(PROJECT_KEY))
        .map(String::as_str)
}

fn stage_of(graph: &Graph, process: NodeId) -> Option<Stage> {
    graph
        .node(process)
        .and_then(|n| n.annotations.get(STAGE_KEY))
        .and_then(|s| s.parse().ok())
}

/// Stage of the process that generated the subject (a process subject
/// stands for itself). Finalized iff an archiving-stage process is among the
/// subject's descendants.
fn progress(graph: &Graph, subject: NodeId) -> Result<Progress, AnswerError> {
    let node = graph.node(subject).ok_or(GraphError::UnknownNode(subject))?;
    let generator = match node.kind {
        NodeKind::Process => Some(subject),
        NodeKind::Artifact => graph
            .neighbors(subject, Direction::Outgoing, Some(EdgeLabel::WasGeneratedBy))?
            .first()
            .map(|(_, p)| *p),
        NodeKind::Agent => None,
    };
    let stage = generator
        .and_then(|p| stage_of(graph, p))
        .ok_or(AnswerError::NoStage(subject))?;
    let finalized = lineage(graph, subject, LineageDirection::Descendants, None)?
        .into_iter()
        .any(|id| {
            graph.node(id).is_some_and(|n| n.kind == NodeKind::Process) && stage_of(graph, id) == Some(Stage::Archiving)
        });
    Ok(Progress { stage, finalized })
}
