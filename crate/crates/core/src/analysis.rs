//! Diagnostics over trained or initialized models: per-edge attention dumps,
//! attention histograms, per-node case studies, ablation sweeps and a
//! plug-in mutual-information probe.

use std::collections::HashMap;
use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph_encoder::{ContextSwitches, GraphInputs};
use crate::ingest::NeighborDirection;
use crate::tensor::{seeded_rng, Scalar, Tape, TensorError};
use crate::train::{train, Ablation, EvalReport, Metrics, Model, TrainConfig, TrainData, TrainError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("node {0} has no neighbours")]
    NoNeighbors(usize),
    #[error("need at least 2 distinct labels, found {0}")]
    DegenerateLabels(usize),
    #[error("embeddings and labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Which attention is being inspected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    ContextAdaptive,
    StandardGat,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::ContextAdaptive => "context_adaptive",
            Variant::StandardGat => "standard_gat",
        }
    }
}

/// Normalized attention of every layer for one encoder run.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerAttention {
    /// 1-based layer index.
    pub layer: usize,
    /// Softmax of the plain GAT logits.
    pub alpha_gat: Vec<f64>,
    /// Context multiplier per edge, all ones without adaptive attention.
    pub multiplier: Vec<f64>,
    /// Attention used for aggregation.
    pub alpha: Vec<f64>,
}

/// Runs the graph encoder on frozen parameters and collects per-layer attention.
pub fn attention_trace<T: Scalar>(
    model: &Model<T>,
    inputs: &GraphInputs<T>,
    switches: ContextSwitches,
    slope: T,
) -> Result<Vec<LayerAttention>, TensorError> {
    let tape = Tape::new();
    let bound = model.store.bind_frozen(&tape);
    let enc = model.params.encode_graph(&tape, &bound, inputs, switches, slope)?;
    Ok(enc
        .layers
        .iter()
        .enumerate()
        .map(|(l, tr)| LayerAttention {
            layer: l + 1,
            alpha_gat: tape.value(tr.alpha_gat).to_f64_vec(),
            multiplier: match tr.multiplier {
                Some(m) => tape.value(m).to_f64_vec(),
                None => vec![1.0; inputs.edges.len()],
            },
            alpha: tape.value(tr.alpha).to_f64_vec(),
        })
        .collect())
}

/// The variant's final-layer attention per edge.
pub fn final_layer_attention<T: Scalar>(
    model: &Model<T>,
    inputs: &GraphInputs<T>,
    variant: Variant,
    switches: ContextSwitches,
    slope: T,
) -> Result<Vec<f64>, TensorError> {
    let sw = match variant {
        Variant::ContextAdaptive => switches,
        Variant::StandardGat => ContextSwitches::STANDARD_GAT,
    };
    let mut trace = attention_trace(model, inputs, sw, slope)?;
    Ok(trace.pop().expect("at least one layer").alpha)
}

/// Message direction of attention edge `e`: `src` sends, `dst` aggregates.
pub fn edge_endpoints<T>(inputs: &GraphInputs<T>, direction: NeighborDirection, e: usize) -> (usize, usize) {
    let (c, n) = (inputs.edges.centers[e], inputs.edges.neighbors[e]);
    match direction {
        NeighborDirection::In => (n, c),
        NeighborDirection::Out => (c, n),
    }
}

/// Writes `src,dst,layer,alpha_gat,alpha_context,alpha_final`.
pub fn write_edge_dump<T, W: Write>(
    out: W,
    inputs: &GraphInputs<T>,
    direction: NeighborDirection,
    trace: &[LayerAttention],
) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["src", "dst", "layer", "alpha_gat", "alpha_context", "alpha_final"])?;
    for la in trace {
        for e in 0..inputs.edges.len() {
            let (s, d) = edge_endpoints(inputs, direction, e);
            w.serialize((s, d, la.layer, la.alpha_gat[e], la.multiplier[e], la.alpha[e]))?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub const HIST_BINS: usize = 10;

/// Counts over ten bins of width 0.1; bin `b` holds `[b/10, (b+1)/10)` and
/// the top bin also holds exactly 1.0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: [usize; HIST_BINS],
}

impl Histogram {
    pub fn of(weights: &[f64]) -> Self {
        let mut counts = [0; HIST_BINS];
        for &w in weights {
            let b = ((w * HIST_BINS as f64).floor().max(0.0) as usize).min(HIST_BINS - 1);
            counts[b] += 1;
        }
        Self { counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `log10(1 + count)` per bin.
    pub fn log_counts(&self) -> [f64; HIST_BINS] {
        self.counts.map(|c| (1.0 + c as f64).log10())
    }

    pub fn bounds(bin: usize) -> (f64, f64) {
        (bin as f64 / HIST_BINS as f64, (bin + 1) as f64 / HIST_BINS as f64)
    }
}

pub fn attention_histogram<T: Scalar>(
    model: &Model<T>,
    inputs: &GraphInputs<T>,
    variant: Variant,
    switches: ContextSwitches,
    slope: T,
) -> Result<Histogram, TensorError> {
    Ok(Histogram::of(&final_layer_attention(model, inputs, variant, switches, slope)?))
}

/// Writes `bin_low,bin_high,count,variant` rows for each histogram.
pub fn write_histograms<W: Write>(out: W, hists: &[(Variant, Histogram)]) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin_low", "bin_high", "count", "variant"])?;
    for (v, h) in hists {
        for (b, &c) in h.counts.iter().enumerate() {
            let (lo, hi) = Histogram::bounds(b);
            w.serialize((lo, hi, c, v.name()))?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub const SUPPRESS_CONTEXT_MAX: f64 = 1e-4;
pub const SUPPRESS_GAT_MIN: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub neighbor: usize,
    pub category: usize,
    pub alpha_gat: f64,
    pub alpha_context_adaptive: f64,
    /// Context-adaptive weight below 1e-4 while the GAT weight is at least 1e-2.
    pub suppressed: bool,
}

/// Final-layer attention of both variants over `node`'s neighbourhood.
pub fn case_study<T: Scalar>(
    model: &Model<T>,
    inputs: &GraphInputs<T>,
    node: usize,
    switches: ContextSwitches,
    slope: T,
) -> Result<Vec<CaseRecord>, AnalysisError> {
    let edges = &inputs.edges;
    if node >= edges.num_nodes() {
        return Err(AnalysisError::UnknownNode(node.to_string()));
    }
    let range = edges.offsets[node]..edges.offsets[node + 1];
    if range.is_empty() {
        return Err(AnalysisError::NoNeighbors(node));
    }
    let ctx = final_layer_attention(model, inputs, Variant::ContextAdaptive, switches, slope)?;
    let gat = final_layer_attention(model, inputs, Variant::StandardGat, switches, slope)?;
    Ok(range
        .map(|e| CaseRecord {
            neighbor: edges.neighbors[e],
            category: inputs.neighbor_categories[e],
            alpha_gat: gat[e],
            alpha_context_adaptive: ctx[e],
            suppressed: ctx[e] < SUPPRESS_CONTEXT_MAX && gat[e] >= SUPPRESS_GAT_MIN,
        })
        .collect())
}

/// One trained variant of an ablation sweep.
#[derive(Clone, Debug)]
pub struct AblationRun {
    pub variant: &'static str,
    pub seed: u64,
    pub report: EvalReport,
}

/// Trains every variant in `variants` from the same seed and data.
pub fn ablation_suite(
    data: &TrainData,
    base: &TrainConfig,
    variants: &[&'static str],
) -> Result<Vec<AblationRun>, AnalysisError> {
    let mut out = Vec::with_capacity(variants.len());
    for &v in variants {
        let ab = Ablation::from_variant(v).ok_or_else(|| TrainError::Config(format!("unknown variant `{v}`")))?;
        let cfg = base.with_ablation(ab);
        let res = train::<f64>(data, &cfg)?;
        out.push(AblationRun {
            variant: v,
            seed: cfg.seed,
            report: res.report,
        });
    }
    Ok(out)
}

/// Writes `variant,seed,split,hr1,hr5,hr10,ndcg1,ndcg5,ndcg10,best_epoch`.
pub fn write_ablation_table<W: Write>(out: W, runs: &[AblationRun]) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["variant", "seed", "split", "hr1", "hr5", "hr10", "ndcg1", "ndcg5", "ndcg10", "best_epoch"])?;
    for r in runs {
        let splits: [(&str, &Option<Metrics>); 2] = [("val", &r.report.val), ("test", &r.report.test)];
        for (name, m) in splits {
            if let Some(m) = m {
                w.serialize((
                    r.variant,
                    r.seed,
                    name,
                    m.hr[0],
                    m.hr[1],
                    m.hr[2],
                    m.ndcg[0],
                    m.ndcg[1],
                    m.ndcg[2],
                    r.report.best_epoch,
                ))?;
            }
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Plug-in mutual information between quantized embeddings and labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    /// `I(cell; label)` in nats.
    pub mi: f64,
    /// Same estimator after shuffling labels.
    pub shuffled_mi: f64,
    /// Plug-in `H(label)` in nats.
    pub label_entropy: f64,
    /// Occupied quantization cells.
    pub cells: usize,
    pub samples: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

const KMEANS_ITERS: usize = 50;

/// Cell index per point: k-means with farthest-first seeding from point 0.
/// Fewer than `k` cells are used when there are fewer distinct points.
pub fn kmeans_assign(points: &[Vec<f64>], k: usize) -> Vec<usize> {
    if points.is_empty() || k == 0 {
        return vec![0; points.len()];
    }
    let mut centers = vec![points[0].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let (far, &d) = nearest
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("nonempty");
        if d == 0.0 {
            break;
        }
        centers.push(points[far].clone());
        let c = centers.last().expect("pushed");
        for (n, p) in nearest.iter_mut().zip(points) {
            *n = n.min(sq_dist(p, c));
        }
    }
    let closest = |p: &[f64], centers: &[Vec<f64>]| {
        (0..centers.len())
            .min_by(|&a, &b| sq_dist(p, &centers[a]).total_cmp(&sq_dist(p, &centers[b])))
            .expect("nonempty")
    };
    let mut assign: Vec<usize> = points.iter().map(|p| closest(p, &centers)).collect();
    for _ in 0..KMEANS_ITERS {
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (p, &a) in points.iter().zip(&assign) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for ((c, s), &n) in centers.iter_mut().zip(sums).zip(&counts) {
            if n > 0 {
                *c = s.into_iter().map(|v| v / n as f64).collect();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| closest(p, &centers)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    assign
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Plug-in `I(X; Y) = H(X) + H(Y) - H(X, Y)` from paired discrete samples.
pub fn plugin_mi(cells: &[usize], labels: &[usize]) -> f64 {
    let n = cells.len() as f64;
    let mut cx: HashMap<usize, usize> = HashMap::new();
    let mut cy: HashMap<usize, usize> = HashMap::new();
    let mut cxy: HashMap<(usize, usize), usize> = HashMap::new();
    for (&x, &y) in cells.iter().zip(labels) {
        *cx.entry(x).or_default() += 1;
        *cy.entry(y).or_default() += 1;
        *cxy.entry((x, y)).or_default() += 1;
    }
    let mi = entropy(cx.into_values(), n) + entropy(cy.into_values(), n) - entropy(cxy.into_values(), n);
    mi.max(0.0)
}

pub fn mi_probe(
    embeddings: &[Vec<f64>],
    labels: &[usize],
    num_bins: usize,
    seed: u64,
) -> Result<MiEstimate, AnalysisError> {
    if embeddings.len() != labels.len() {
        return Err(AnalysisError::LengthMismatch(embeddings.len(), labels.len()));
    }
    let mut distinct = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(AnalysisError::DegenerateLabels(distinct.len()));
    }
    let cells = kmeans_assign(embeddings, num_bins);
    let mut occupied = cells.clone();
    occupied.sort_unstable();
    occupied.dedup();
    let mut shuffled = labels.to_vec();
    shuffled.shuffle(&mut seeded_rng(seed));
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    Ok(MiEstimate {
        mi: plugin_mi(&cells, labels),
        shuffled_mi: plugin_mi(&cells, &shuffled),
        label_entropy: entropy(counts.into_values(), labels.len() as f64),
        cells: occupied.len(),
        samples: labels.len(),
    })
}
