//! Graph-based preference extractor: GAT propagation over the transition
//! graph where each edge logit is scaled by a context multiplier built from
//! category, spatial and temporal disparity scores.
//!
//! Per layer `l` and attention edge `(i, j)` (`i` the central node, `j` a
//! neighbour):
//!
//! ```text
//! gat_ij   = a^T [W h_i || W h_j]
//! mult_ij  = exp(-b_c r_c) * exp(-b_d r_d) * exp(-b_t r_t)
//! alpha_ij = softmax_{j in N(i)} LeakyReLU(gat_ij * mult_ij)
//! h_i'     = ReLU(sum_j alpha_ij W h_j)
//! ```
//!
//! The `r_*` scores come from [`ada_att`] on the edge's context pair, and
//! `(b_c, b_d, b_t)` is the softmax of three free logits. The encoder output
//! is the mean of the layer outputs `1..=L`.
//!
//! Matrices act on row vectors (`h W`), so `W` here is the transpose of the
//! column-vector form.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::ingest::{ContextFeatures, NeighborDirection, TransitionGraph, HOURS};
use crate::tensor::{Bound, ParamId, Scalar, Tape, Tensor, TensorError, Var};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug)]
pub struct GatLayerParams {
    /// `dim × dim`.
    pub w: ParamId,
    /// `2·dim × 1`; first half scores the central node, second half the neighbour.
    pub a: ParamId,
}

/// MLP stages of one context scorer. Stage 0 maps `2·dim -> dim`, later
/// stages `dim -> dim`. Each entry is `(weight, bias)` with bias `1 × dim`.
#[derive(Clone, Debug)]
pub struct AdaAttParams {
    pub stages: Vec<(ParamId, ParamId)>,
}

/// How the context scorers relate to GAT layers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaSharing {
    /// One deep MLP per context; GAT layer `l` reads the mean of stage `l`.
    #[default]
    Staged,
    /// An independent single-stage MLP per context per GAT layer.
    PerLayer,
}

/// Scorers for one context type, arranged by [`AdaSharing`].
#[derive(Clone, Debug)]
pub struct ContextMlp {
    pub sharing: AdaSharing,
    /// One entry for `Staged` (with `L` stages); `L` single-stage entries for `PerLayer`.
    pub mlps: Vec<AdaAttParams>,
}

/// Three logits whose softmax gives `(b_c, b_d, b_t)`.
#[derive(Clone, Copy, Debug)]
pub struct ContextBalance {
    /// `1 × 3`.
    pub logits: ParamId,
}

impl ContextBalance {
    /// Simplex weights for the given logits.
    pub fn weights<T: Scalar>(logits: &Tensor<T>) -> [T; 3] {
        let d = logits.data();
        let m = d.iter().copied().fold(T::neg_infinity(), T::max);
        let e: Vec<T> = d.iter().map(|&v| (v - m).exp()).collect();
        let s = e[0] + e[1] + e[2];
        [e[0] / s, e[1] / s, e[2] / s]
    }
}

#[derive(Clone, Debug)]
pub struct GraphEncoderParams {
    pub poi_emb: ParamId,
    pub cat_emb: ParamId,
    pub dist_emb: ParamId,
    pub slot_emb: ParamId,
    pub layers: Vec<GatLayerParams>,
    pub category: ContextMlp,
    pub spatial: ContextMlp,
    pub temporal: ContextMlp,
    pub balance: ContextBalance,
}

/// Which parts of the context-adaptive attention are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ContextSwitches {
    /// `false` drops the multiplier entirely (standard GAT).
    pub adaptive: bool,
    pub category: bool,
    pub spatial: bool,
    pub temporal: bool,
}

impl ContextSwitches {
    pub const FULL: Self = Self {
        adaptive: true,
        category: true,
        spatial: true,
        temporal: true,
    };
    pub const STANDARD_GAT: Self = Self {
        adaptive: false,
        category: false,
        spatial: false,
        temporal: false,
    };
}

impl Default for ContextSwitches {
    fn default() -> Self {
        Self::FULL
    }
}

/// Attention edges grouped by central node: group `i` spans
/// `offsets[i]..offsets[i + 1]` of `centers` / `neighbors`.
#[derive(Clone, Debug)]
pub struct AttentionEdges {
    pub centers: Rc<[usize]>,
    pub neighbors: Rc<[usize]>,
    pub offsets: Rc<[usize]>,
}

impl AttentionEdges {
    pub fn from_lists(lists: &[Vec<usize>]) -> Self {
        let mut centers = Vec::new();
        let mut neighbors = Vec::new();
        let mut offsets = vec![0];
        for (i, l) in lists.iter().enumerate() {
            for &j in l {
                centers.push(i);
                neighbors.push(j);
            }
            offsets.push(centers.len());
        }
        Self {
            centers: centers.into(),
            neighbors: neighbors.into(),
            offsets: offsets.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }
}

/// Non-learnable graph inputs, prepared once per graph.
#[derive(Clone, Debug)]
pub struct GraphInputs<T> {
    pub edges: AttentionEdges,
    pub center_categories: Rc<[usize]>,
    pub neighbor_categories: Rc<[usize]>,
    /// `|V| × dmax`.
    pub d_src: Tensor<T>,
    /// `|V| × dmax`.
    pub d_dst: Tensor<T>,
    /// `|V| × 24`.
    pub hourly: Tensor<T>,
}

impl<T: Scalar> GraphInputs<T> {
    pub fn new(
        graph: &TransitionGraph,
        features: &ContextFeatures,
        direction: NeighborDirection,
        self_loops: bool,
    ) -> Result<Self, TensorError> {
        let edges = AttentionEdges::from_lists(&graph.neighbors(direction, self_loops));
        Self::with_edges(edges, features)
    }

    pub fn with_edges(edges: AttentionEdges, features: &ContextFeatures) -> Result<Self, TensorError> {
        let to_tensor = |rows: &[Vec<f64>], cols: usize| -> Result<Tensor<T>, TensorError> {
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            Tensor::from_f64(rows.len(), cols, &flat)
        };
        let cat = &features.category;
        Ok(Self {
            center_categories: edges.centers.iter().map(|&i| cat[i]).collect(),
            neighbor_categories: edges.neighbors.iter().map(|&j| cat[j]).collect(),
            d_src: to_tensor(&features.d_src, features.dmax)?,
            d_dst: to_tensor(&features.d_dst, features.dmax)?,
            hourly: to_tensor(&features.hourly, HOURS)?,
            edges,
        })
    }
}

/// `a^T [W h_i || W h_j]` for every attention edge, given `wh = H W`. `E × 1`.
pub fn gat_logit<T: Scalar>(
    tape: &Tape<T>,
    wh: Var,
    edges: &AttentionEdges,
    a: Var,
) -> Result<Var, TensorError> {
    let hc = tape.gather_rows(wh, edges.centers.clone())?;
    let hn = tape.gather_rows(wh, edges.neighbors.clone())?;
    tape.matmul(tape.concat(&[hc, hn], 1)?, a)
}

/// Runs the first `stage` MLP stages (ReLU after each) on the `E × 2·dim`
/// input and returns the row means after stages `1..=stage`, each `E × 1`.
pub fn ada_att<T: Scalar>(
    tape: &Tape<T>,
    bound: &Bound,
    x: Var,
    mlp: &AdaAttParams,
    stage: usize,
) -> Result<Vec<Var>, TensorError> {
    if stage == 0 || stage > mlp.stages.len() {
        return Err(TensorError::IndexOutOfRange {
            op: "ada_att",
            index: stage,
            bound: mlp.stages.len(),
        });
    }
    let mut m = x;
    let mut means = Vec::with_capacity(stage);
    for &(w, b) in &mlp.stages[..stage] {
        m = tape.relu(tape.add_row(tape.matmul(m, bound[w])?, bound[b])?);
        means.push(tape.mean(m, 1)?);
    }
    Ok(means)
}

/// Concatenated context pairs for every attention edge, each `E × 2·dim`:
/// category `[C c_i || C c_j]`, spatial `[d_src(i) D || d_dst(j) D]`,
/// temporal `[hourly(i) T || hourly(j) T]`.
pub fn context_features_for_edge<T: Scalar>(
    tape: &Tape<T>,
    bound: &Bound,
    params: &GraphEncoderParams,
    inputs: &GraphInputs<T>,
) -> Result<[Var; 3], TensorError> {
    let e = &inputs.edges;
    let cat = bound[params.cat_emb];
    let cat_pair = tape.concat(
        &[
            tape.gather_rows(cat, inputs.center_categories.clone())?,
            tape.gather_rows(cat, inputs.neighbor_categories.clone())?,
        ],
        1,
    )?;
    let dist = bound[params.dist_emb];
    let src = tape.matmul(tape.constant(inputs.d_src.clone()), dist)?;
    let dst = tape.matmul(tape.constant(inputs.d_dst.clone()), dist)?;
    let spat_pair = tape.concat(
        &[
            tape.gather_rows(src, e.centers.clone())?,
            tape.gather_rows(dst, e.neighbors.clone())?,
        ],
        1,
    )?;
    let tt = tape.matmul(tape.constant(inputs.hourly.clone()), bound[params.slot_emb])?;
    let temp_pair = tape.concat(
        &[
            tape.gather_rows(tt, e.centers.clone())?,
            tape.gather_rows(tt, e.neighbors.clone())?,
        ],
        1,
    )?;
    Ok([cat_pair, spat_pair, temp_pair])
}

/// Softmax of the balance logits, `1 × 3`.
pub fn balance_weights<T: Scalar>(tape: &Tape<T>, logits: Var) -> Result<Var, TensorError> {
    tape.softmax(logits, 1)
}

/// `exp(-(b_c r_c + b_d r_d + b_t r_t))` per edge, `E × 1`.
pub fn context_multiplier<T: Scalar>(
    tape: &Tape<T>,
    raw: [Var; 3],
    beta: Var,
) -> Result<Var, TensorError> {
    let stacked = tape.concat(&raw, 1)?;
    let weighted = tape.matmul(stacked, tape.transpose(beta))?;
    Ok(tape.exp(tape.neg(weighted)))
}

/// Tape handles for one propagated layer.
#[derive(Clone, Copy, Debug)]
pub struct LayerTrace {
    /// Raw `a^T [W h_i || W h_j]`, `E × 1`.
    pub gat_logit: Var,
    /// Standard-GAT normalized attention for the same logits, `E × 1`.
    pub alpha_gat: Var,
    /// Context multiplier, absent when adaptive attention is off.
    pub multiplier: Option<Var>,
    /// Final normalized attention, `E × 1`.
    pub alpha: Var,
    /// Layer output, `|V| × dim`.
    pub output: Var,
}

/// One GAT layer with optional context scaling of the logits.
#[allow(clippy::too_many_arguments)]
pub fn propagate_layer<T: Scalar>(
    tape: &Tape<T>,
    h: Var,
    edges: &AttentionEdges,
    w: Var,
    a: Var,
    raw: Option<[Var; 3]>,
    beta: Var,
    slope: T,
) -> Result<LayerTrace, TensorError> {
    let wh = tape.matmul(h, w)?;
    let gat = gat_logit(tape, wh, edges, a)?;
    let alpha_gat = tape.segment_softmax(tape.leaky_relu(gat, slope), edges.offsets.clone())?;
    let (multiplier, alpha) = match raw {
        Some(raw) => {
            let m = context_multiplier(tape, raw, beta)?;
            let scaled = tape.elementwise_mul(gat, m)?;
            let alpha = tape.segment_softmax(tape.leaky_relu(scaled, slope), edges.offsets.clone())?;
            (Some(m), alpha)
        }
        None => (None, alpha_gat),
    };
    let msg = tape.scale_rows(tape.gather_rows(wh, edges.neighbors.clone())?, alpha)?;
    let output = tape.relu(tape.segment_sum(msg, edges.offsets.clone())?);
    Ok(LayerTrace {
        gat_logit: gat,
        alpha_gat,
        multiplier,
        alpha,
        output,
    })
}

#[derive(Clone, Debug)]
pub struct GraphEncoding {
    /// `|V| × dim`.
    pub hg: Var,
    pub layers: Vec<LayerTrace>,
    /// Balance weights used, `1 × 3`.
    pub beta: Var,
}

fn raw_scores<T: Scalar>(
    tape: &Tape<T>,
    bound: &Bound,
    x: Var,
    mlp: &ContextMlp,
    layers: usize,
) -> Result<Vec<Var>, TensorError> {
    match mlp.sharing {
        AdaSharing::Staged => ada_att(tape, bound, x, &mlp.mlps[0], layers),
        AdaSharing::PerLayer => mlp.mlps[..layers]
            .iter()
            .map(|m| Ok(ada_att(tape, bound, x, m, 1)?[0]))
            .collect(),
    }
}

/// Runs all GAT layers from the POI embedding table and averages their outputs.
pub fn encode_graph<T: Scalar>(
    tape: &Tape<T>,
    bound: &Bound,
    params: &GraphEncoderParams,
    inputs: &GraphInputs<T>,
    switches: ContextSwitches,
    slope: T,
) -> Result<GraphEncoding, TensorError> {
    let n_layers = params.layers.len();
    if n_layers == 0 {
        return Err(TensorError::Empty { op: "encode_graph" });
    }
    let beta = balance_weights(tape, bound[params.balance.logits])?;
    // Context pairs do not depend on the layer; only the MLP stage advances.
    let raw_per_layer: Option<Vec<[Var; 3]>> = if switches.adaptive {
        let pairs = context_features_for_edge(tape, bound, params, inputs)?;
        let zeros = || tape.constant(Tensor::zeros(inputs.edges.len(), 1));
        let score = |on: bool, x: Var, mlp: &ContextMlp| -> Result<Vec<Var>, TensorError> {
            if on {
                raw_scores(tape, bound, x, mlp, n_layers)
            } else {
                let z = zeros();
                Ok(vec![z; n_layers])
            }
        };
        let c = score(switches.category, pairs[0], &params.category)?;
        let d = score(switches.spatial, pairs[1], &params.spatial)?;
        let t = score(switches.temporal, pairs[2], &params.temporal)?;
        Some((0..n_layers).map(|l| [c[l], d[l], t[l]]).collect())
    } else {
        None
    };

    let mut h = bound[params.poi_emb];
    let mut layers = Vec::with_capacity(n_layers);
    let mut acc: Option<Var> = None;
    for (l, lp) in params.layers.iter().enumerate() {
        let raw = raw_per_layer.as_ref().map(|r| r[l]);
        let trace = propagate_layer(tape, h, &inputs.edges, bound[lp.w], bound[lp.a], raw, beta, slope)?;
        h = trace.output;
        acc = Some(match acc {
            None => h,
            Some(s) => tape.add(s, h)?,
        });
        layers.push(trace);
    }
    let sum = acc.expect("at least one layer");
    let hg = if n_layers == 1 {
        sum
    } else {
        tape.scalar_mul(sum, T::one() / T::from_usize(n_layers).expect("small"))
    };
    Ok(GraphEncoding { hg, layers, beta })
}
