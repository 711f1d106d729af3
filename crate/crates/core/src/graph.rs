//! Reduction of (case, topology) to the effective electrical graph.
//!
//! Each substation contributes one node per busbar that has at least one
//! assigned element; disconnected lines contribute no edge. Islands are
//! labelled by connected-component search.

use serde::{Deserialize, Serialize};

use crate::case::{ElementId, GridCase, LineId, SubId};
use crate::topology::{Busbar, TopologyState};

/// An effective electrical node: one busbar of one substation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub sub: SubId,
    pub busbar: Busbar,
}

/// An in-service line mapped onto effective nodes, with its branch parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub line: LineId,
    pub from_node: usize,
    pub to_node: usize,
    pub r: f64,
    pub x: f64,
    pub b: f64,
    pub i_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    /// island label per node, 0-based
    pub island: Vec<usize>,
    pub n_islands: usize,
    /// node index per element (canonical element order)
    pub node_of_element: Vec<usize>,
    /// node carrying the slack generator, if its substation has one
    pub slack_node: Option<usize>,
}

impl EffectiveGraph {
    /// Nodes of the island containing the slack node.
    pub fn slack_island(&self) -> Option<usize> {
        self.slack_node.map(|n| self.island[n])
    }
}

/// Builds the effective electrical graph for a topology.
pub fn build_effective_graph(case: &GridCase, topo: &TopologyState) -> EffectiveGraph {
    let elements = case.elements();
    debug_assert_eq!(elements.len(), topo.element_busbar.len());

    // Node per (substation, busbar) with >= 1 assigned element.
    let mut node_index: Vec<[Option<usize>; 2]> = vec![[None; 2]; case.substations.len()];
    let mut nodes = Vec::new();
    let mut node_of_element = vec![usize::MAX; elements.len()];
    for (i, &e) in elements.iter().enumerate() {
        let sub = case.element_sub(e).expect("element belongs to case");
        let si = case.sub_index(sub).expect("substation exists");
        let bb = topo.element_busbar[i];
        let slot = &mut node_index[si][bb.index()];
        let ni = match *slot {
            Some(ni) => ni,
            None => {
                let ni = nodes.len();
                nodes.push(Node { sub, busbar: bb });
                *slot = Some(ni);
                ni
            }
        };
        node_of_element[i] = ni;
    }

    let mut edges = Vec::new();
    for (li, line) in case.lines.iter().enumerate() {
        if !topo.line_status[li] {
            continue;
        }
        let from_el = case.element_index(ElementId::LineFrom(line.id)).unwrap();
        let to_el = case.element_index(ElementId::LineTo(line.id)).unwrap();
        edges.push(Edge {
            line: line.id,
            from_node: node_of_element[from_el],
            to_node: node_of_element[to_el],
            r: line.r,
            x: line.x,
            b: line.b,
            i_max: line.i_max,
        });
    }

    // Island labels by union-find over edges.
    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for e in &edges {
        let a = find(&mut parent, e.from_node);
        let b = find(&mut parent, e.to_node);
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut island = vec![usize::MAX; nodes.len()];
    let mut n_islands = 0;
    for i in 0..nodes.len() {
        let root = find(&mut parent, i);
        if island[root] == usize::MAX {
            island[root] = n_islands;
            n_islands += 1;
        }
        island[i] = island[root];
    }

    // Slack node: the node of the first generator at the slack substation.
    let slack_node = case
        .generators
        .iter()
        .find(|g| g.sub == case.slack)
        .and_then(|g| case.element_index(ElementId::Gen(g.id)))
        .map(|i| node_of_element[i]);

    EffectiveGraph {
        nodes,
        edges,
        island,
        n_islands,
        node_of_element,
        slack_node,
    }
}
