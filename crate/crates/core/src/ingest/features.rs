use serde::{Deserialize, Serialize};

use super::{TransitionGraph, Trajectory};

pub const HOURS: usize = 24;

/// Per-POI context: category, distance-interval distributions as transition
/// origin and destination, and the 24-hour check-in profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextFeatures {
    pub category: Vec<usize>,
    pub d_src: Vec<Vec<f64>>,
    pub d_dst: Vec<Vec<f64>>,
    pub hourly: Vec<Vec<f64>>,
    pub dmax: usize,
}

impl ContextFeatures {
    pub fn num_pois(&self) -> usize {
        self.category.len()
    }
}

fn normalize_rows(rows: &mut [Vec<f64>]) {
    for r in rows {
        let s: f64 = r.iter().sum();
        if s > 0.0 {
            r.iter_mut().for_each(|v| *v /= s);
        }
    }
}

/// POIs without any relevant training event keep all-zero rows.
pub fn extract_context_features(
    categories: &[usize],
    train: &[Trajectory],
    graph: &TransitionGraph,
    dmax: usize,
) -> ContextFeatures {
    let n = graph.num_nodes;
    let mut d_src = vec![vec![0.0; dmax]; n];
    let mut d_dst = vec![vec![0.0; dmax]; n];
    for e in &graph.edges {
        d_src[e.src][e.bin] += e.count as f64;
        d_dst[e.dst][e.bin] += e.count as f64;
    }
    let mut hourly = vec![vec![0.0; HOURS]; n];
    for t in train {
        for v in &t.events {
            hourly[v.poi][v.slot as usize] += 1.0;
        }
    }
    normalize_rows(&mut d_src);
    normalize_rows(&mut d_dst);
    normalize_rows(&mut hourly);
    ContextFeatures {
        category: categories.to_vec(),
        d_src,
        d_dst,
        hourly,
        dmax,
    }
}
