use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{haversine_km, DistanceBinning, Poi, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    /// Number of training transitions `src -> dst`.
    pub count: usize,
    /// Distance interval of the endpoint pair.
    pub bin: usize,
}

/// Which endpoint's perspective defines a node's neighbourhood during
/// aggregation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborDirection {
    /// Predecessors: `j` is a neighbour of `i` when `j -> i` is an edge.
    #[default]
    In,
    /// Successors: `j` is a neighbour of `i` when `i -> j` is an edge.
    Out,
}

/// Directed POI transition graph built from training trajectories only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionGraph {
    pub num_nodes: usize,
    /// Sorted by `(src, dst)`.
    pub edges: Vec<Edge>,
    /// Sorted predecessor lists, including the node itself when `self_loops`.
    pub in_neighbors: Vec<Vec<usize>>,
    pub self_loops: bool,
}

impl TransitionGraph {
    /// Neighbour lists under the given direction and self-loop policy. Each
    /// list is sorted and free of duplicates.
    pub fn neighbors(&self, direction: NeighborDirection, self_loops: bool) -> Vec<Vec<usize>> {
        let mut lists = vec![Vec::new(); self.num_nodes];
        for e in &self.edges {
            match direction {
                NeighborDirection::In => lists[e.dst].push(e.src),
                NeighborDirection::Out => lists[e.src].push(e.dst),
            }
        }
        for (i, l) in lists.iter_mut().enumerate() {
            if self_loops {
                l.push(i);
            }
            l.sort_unstable();
            l.dedup();
        }
        lists
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }
}

pub fn build_transition_graph(
    pois: &[Poi],
    train: &[Trajectory],
    binning: DistanceBinning,
    add_self_loops: bool,
) -> TransitionGraph {
    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for t in train {
        for w in t.events.windows(2) {
            *counts.entry((w[0].poi, w[1].poi)).or_default() += 1;
        }
    }
    let edges: Vec<Edge> = counts
        .into_iter()
        .map(|((src, dst), count)| {
            let (a, b) = (&pois[src], &pois[dst]);
            let km = haversine_km(a.latitude, a.longitude, b.latitude, b.longitude);
            Edge {
                src,
                dst,
                count,
                bin: binning.bin(km),
            }
        })
        .collect();
    let mut g = TransitionGraph {
        num_nodes: pois.len(),
        edges,
        in_neighbors: Vec::new(),
        self_loops: add_self_loops,
    };
    g.in_neighbors = g.neighbors(NeighborDirection::In, add_self_loops);
    g
}
