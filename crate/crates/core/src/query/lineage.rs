use alloc::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::opm::{Direction, EdgeLabel, Graph, GraphError, NodeId};

/// Every edge points from an effect to its cause, so ancestors are reached
/// along outgoing edges and descendants along incoming ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineageDirection {
    Ancestors,
    Descendants,
}

impl core::str::FromStr for LineageDirection {
    type Err = crate::opm::UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ancestors" => Ok(LineageDirection::Ancestors),
            "descendants" => Ok(LineageDirection::Descendants),
            other => Err(crate::opm::UnknownName(other.into())),
        }
    }
}

/// Transitive closure from `start`, excluding `start` itself. With `labels`,
/// only edges carrying one of those labels are followed.
pub fn lineage(
    graph: &Graph,
    start: NodeId,
    direction: LineageDirection,
    labels: Option<&BTreeSet<EdgeLabel>>,
) -> Result<BTreeSet<NodeId>, GraphError> {
    if !graph.contains_node(start) {
        return Err(GraphError::UnknownNode(start));
    }
    let dir = match direction {
        LineageDirection::Ancestors => Direction::Outgoing,
        LineageDirection::Descendants => Direction::Incoming,
    };
    let mut seen = BTreeSet::new();
    seen.insert(start);
    let mut queue = VecDeque::from([start]);
    while let Some(node) = queue.pop_front() {
        for edge_id in graph.adjacent(node, dir) {
            let Some(edge) = graph.edge(*edge_id) else { continue };
            if labels.is_some_and(|ls| !ls.contains(&edge.label)) {
                continue;
            }
            let next = match dir {
                Direction::Outgoing => edge.target,
                Direction::Incoming => edge.source,
            };
            if seen.insert(next) {
                queue.push_back(next);
            }
        }
    }
    seen.remove(&start);
    Ok(seen)
}
