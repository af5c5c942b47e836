use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ast::{Query, SetKind, Source, Step, GRAPH_VAR};
use crate::opm::{Direction, EdgeId, Graph, NodeId};

/// Value of a traversal expression. Node and edge sets are ascending by id;
/// value lists keep first-occurrence order. Never contains duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "items", rename_all = "lowercase")]
pub enum ResultSet {
    Nodes(Vec<NodeId>),
    Edges(Vec<EdgeId>),
    Values(Vec<String>),
}

impl ResultSet {
    pub fn kind(&self) -> SetKind {
        match self {
            ResultSet::Nodes(_) => SetKind::Nodes,
            ResultSet::Edges(_) => SetKind::Edges,
            ResultSet::Values(_) => SetKind::Values,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ResultSet::Nodes(v) => v.len(),
            ResultSet::Edges(v) => v.len(),
            ResultSet::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evaluation {
    /// Every `$name` bound by the query, at its final value.
    pub bindings: BTreeMap<String, ResultSet>,
    /// Value of the last statement.
    pub last: ResultSet,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("step {step} cannot apply to a set of {operand}")]
    TypeMismatch { step: &'static str, operand: SetKind },
    #[error("unbound variable ${0}")]
    UnboundVariable(String),
}

pub fn evaluate(graph: &Graph, query: &Query) -> Result<Evaluation, EvalError> {
    let mut bindings: BTreeMap<String, ResultSet> = BTreeMap::new();
    let mut last = ResultSet::Nodes(Vec::new());
    for stmt in &query.statements {
        let start = match &stmt.expr.source {
            Source::Var(name) => lookup(graph, &bindings, name)?,
            Source::Key {
                within,
                property,
                value,
            } => match lookup(graph, &bindings, within)? {
                ResultSet::Nodes(nodes) => ResultSet::Nodes(key_lookup(graph, within, &bindings, &nodes, property, value)),
                other => {
                    return Err(EvalError::TypeMismatch {
                        step: "g:key",
                        operand: other.kind(),
                    })
                }
            },
        };
        let mut current = start;
        for step in &stmt.expr.steps {
            current = apply_step(graph, step, current)?;
        }
        if let Some(name) = &stmt.binding {
            bindings.insert(name.clone(), current.clone());
        }
        last = current;
    }
    Ok(Evaluation { bindings, last })
}

fn lookup(graph: &Graph, bindings: &BTreeMap<String, ResultSet>, name: &str) -> Result<ResultSet, EvalError> {
    if let Some(set) = bindings.get(name) {
        return Ok(set.clone());
    }
    if name == GRAPH_VAR {
        return Ok(ResultSet::Nodes(graph.nodes().map(|n| n.id).collect()));
    }
    Err(EvalError::UnboundVariable(name.into()))
}

fn key_lookup(
    graph: &Graph,
    within: &str,
    bindings: &BTreeMap<String, ResultSet>,
    nodes: &[NodeId],
    property: &str,
    value: &str,
) -> Vec<NodeId> {
    let Some(hits) = graph.key_set(property, value) else {
        return Vec::new();
    };
    if within == GRAPH_VAR && !bindings.contains_key(GRAPH_VAR) {
        return hits.iter().copied().collect();
    }
    nodes.iter().copied().filter(|id| hits.contains(id)).collect()
}

fn apply_step(graph: &Graph, step: &Step, input: ResultSet) -> Result<ResultSet, EvalError> {
    let mismatch = |input: &ResultSet| EvalError::TypeMismatch {
        step: step.name(),
        operand: input.kind(),
    };
    Ok(match (step, input) {
        (Step::InE, ResultSet::Nodes(nodes)) => ResultSet::Edges(adjacent(graph, &nodes, Direction::Incoming)),
        (Step::OutE, ResultSet::Nodes(nodes)) => ResultSet::Edges(adjacent(graph, &nodes, Direction::Outgoing)),
        (Step::OutV, ResultSet::Edges(edges)) => ResultSet::Nodes(
            edges
                .iter()
                .filter_map(|e| graph.edge(*e).map(|e| e.source))
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
        ),
        (Step::InV, ResultSet::Edges(edges)) => ResultSet::Nodes(
            edges
                .iter()
                .filter_map(|e| graph.edge(*e).map(|e| e.target))
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
        ),
        (Step::Filter { property, value }, ResultSet::Nodes(nodes)) => ResultSet::Nodes(
            nodes
                .into_iter()
                .filter(|id| {
                    graph
                        .node(*id)
                        .and_then(|n| n.annotations.get(property))
                        .is_some_and(|v| v == value)
                })
                .collect(),
        ),
        (Step::Filter { property, value }, ResultSet::Edges(edges)) => ResultSet::Edges(
            edges
                .into_iter()
                .filter(|id| {
                    graph
                        .edge(*id)
                        .and_then(|e| e.annotations.get(property))
                        .is_some_and(|v| v == value)
                })
                .collect(),
        ),
        (Step::Project(property), ResultSet::Nodes(nodes)) => ResultSet::Values(first_occurrences(
            nodes
                .iter()
                .filter_map(|id| graph.node(*id).and_then(|n| n.annotations.get(property))),
        )),
        (Step::Project(property), ResultSet::Edges(edges)) => ResultSet::Values(first_occurrences(
            edges
                .iter()
                .filter_map(|id| graph.edge(*id).and_then(|e| e.annotations.get(property))),
        )),
        (_, other) => return Err(mismatch(&other)),
    })
}

fn adjacent(graph: &Graph, nodes: &[NodeId], direction: Direction) -> Vec<EdgeId> {
    let set: BTreeSet<EdgeId> = nodes
        .iter()
        .flat_map(|n| graph.adjacent(*n, direction).iter().copied())
        .collect();
    set.into_iter().collect()
}

fn first_occurrences<'a>(values: impl Iterator<Item = &'a String>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    values.filter(|v| seen.insert(*v)).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::opm::{Annotations, EdgeLabel, NodeKind};
    use crate::query::parse;
    use alloc::vec;

    fn run(graph: &Graph, text: &str) -> ResultSet {
        evaluate(graph, &parse(text).unwrap()).unwrap().last
    }

    /// Brute-force edge scan used as the oracle for single-hop traversals.
    fn sources_into(graph: &Graph, target: NodeId) -> BTreeSet<NodeId> {
        graph.edges().filter(|e| e.target == target).map(|e| e.source).collect()
    }

    #[test]
    fn thinking_in_edges_out_vertices() {
        let (g, ids) = fixtures::fig3();
        let expected: Vec<String> = sources_into(&g, ids["thinking"])
            .into_iter()
            .map(|n| g.node(n).unwrap().identifier.clone())
            .collect();
        // discovery is generated by thinking; experimenting is triggered by it
        assert_eq!(expected, ["discovery", "experimenting"]);
        assert_eq!(
            run(&g, "$d := g:key($_g,'identifier','thinking')/inE/outV[@identifier]"),
            ResultSet::Values(expected)
        );
    }

    #[test]
    fn discovery_query_with_label_filter() {
        let (g, _) = fixtures::fig3();
        let q = "$scientists := g:key($_g, 'type', 'agent')\n\
                 $scientistX := g:key($scientists, 'identifier', 'scientistX')\n\
                 $thinking := $scientistX/inE/outV[@identifier='thinking']\n\
                 $discoveries := $thinking/inE[@label='wasGeneratedBy']/outV[@identifier]";
        let eval = evaluate(&g, &parse(q).unwrap()).unwrap();
        assert_eq!(eval.last, ResultSet::Values(vec!["discovery".into()]));
        assert_eq!(eval.bindings.len(), 4);
    }

    #[test]
    fn empty_graph_is_vacuous() {
        let g = Graph::new();
        let eval = evaluate(
            &g,
            &parse("$a := g:key($_g,'type','agent')\n$b := $a/inE\n$c := $b/outV[@identifier]").unwrap(),
        )
        .unwrap();
        assert_eq!(eval.bindings["a"], ResultSet::Nodes(vec![]));
        assert_eq!(eval.bindings["b"], ResultSet::Edges(vec![]));
        assert_eq!(eval.bindings["c"], ResultSet::Values(vec![]));
    }

    #[test]
    fn round_trip_over_single_edge() {
        let mut g = Graph::new();
        let a = g.add_node(NodeKind::Artifact, "a", Annotations::new()).unwrap();
        let b = g.add_node(NodeKind::Artifact, "b", Annotations::new()).unwrap();
        g.add_edge(EdgeLabel::WasDerivedFrom, a, b, Annotations::new()).unwrap();
        // from b: incoming edge a->b, its source a, a's outgoing edge, its target b
        assert_eq!(
            run(&g, "$a := g:key($_g,'identifier','b')\n$r := $a/inE/outV/outE/inV"),
            ResultSet::Nodes(vec![b])
        );
        assert_eq!(run(&g, "$r := g:key($_g,'identifier','b')/inE/outV"), ResultSet::Nodes(vec![a]));
    }

    #[test]
    fn key_lookup_respects_the_input_set() {
        let (g, ids) = fixtures::fig3();
        assert_eq!(
            run(&g, "$a := g:key($_g,'type','artifact')\n$b := g:key($a,'identifier','thinking')"),
            ResultSet::Nodes(vec![])
        );
        assert_eq!(
            run(&g, "$p := g:key($_g,'type','process')\n$b := g:key($p,'identifier','thinking')"),
            ResultSet::Nodes(vec![ids["thinking"]])
        );
    }

    #[test]
    fn projection_deduplicates() {
        let (g, _) = fixtures::fig3();
        assert_eq!(
            run(&g, "$t := $_g[@type]"),
            ResultSet::Values(vec!["agent".into(), "process".into(), "artifact".into()])
        );
        assert_eq!(
            run(&g, "$t := $_g/outE[@label]"),
            ResultSet::Values(vec![
                "wasUndertakenBy".into(),
                "wasGeneratedBy".into(),
                "wasTriggeredBy".into(),
                "used".into(),
                "isBasedOn".into()
            ])
        );
    }

    #[test]
    fn hand_built_ast_mismatch_is_reported() {
        let (g, _) = fixtures::fig3();
        let q = crate::query::Query {
            statements: vec![crate::query::Statement {
                binding: None,
                expr: crate::query::Expr {
                    source: Source::Var(GRAPH_VAR.into()),
                    steps: vec![Step::InV],
                },
            }],
        };
        assert_eq!(
            evaluate(&g, &q),
            Err(EvalError::TypeMismatch {
                step: "inV",
                operand: SetKind::Nodes
            })
        );
    }

    #[test]
    fn evaluation_is_deterministic() {
        let (g, _) = fixtures::glp_study();
        let q = parse("$p := g:key($_g,'type','process')/inE/outV/outE/inV[@identifier]").unwrap();
        let first = evaluate(&g, &q).unwrap();
        for _ in 0..5 {
            assert_eq!(evaluate(&g, &q).unwrap(), first);
        }
    }

    #[test]
    fn result_set_json_shape() {
        let json = serde_json::to_string(&ResultSet::Values(vec!["discovery".into()])).unwrap();
        assert_eq!(json, r#"{"type":"values","items":["discovery"]}"#);
    }
}
