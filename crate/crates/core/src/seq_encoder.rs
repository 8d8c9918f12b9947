//! Sequential preference extractor: per-event `[user || poi || slot]`
//! embeddings through stacked single-head scaled dot-product attention with
//! no causal mask.

use std::rc::Rc;

use crate::tensor::{Bound, ParamId, Scalar, Tape, TensorError, Var};

/// One prefix-to-next sample drawn from a trajectory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeqBatch {
    pub user: usize,
    pub pois: Vec<usize>,
    pub slots: Vec<usize>,
    pub target: usize,
}

impl SeqBatch {
    pub fn len(&self) -> usize {
        self.pois.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pois.is_empty()
    }
}

/// Every prefix of `events` paired with the event that follows it; a trajectory
/// of length `m` yields `m - 1` samples.
pub fn expand_prefixes(user: usize, events: &[(usize, usize)]) -> Vec<SeqBatch> {
    (1..events.len())
        .map(|k| SeqBatch {
            user,
            pois: events[..k].iter().map(|e| e.0).collect(),
            slots: events[..k].iter().map(|e| e.1).collect(),
            target: events[k].0,
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct TransformerLayerParams {
    pub q: ParamId,
    pub k: ParamId,
    pub v: ParamId,
}

#[derive(Clone, Debug)]
pub struct TransformerParams {
    pub layers: Vec<TransformerLayerParams>,
    pub residual: bool,
}

/// `k × 3·dim` matrix whose row `t` is `[U[user] || V[poi_t] || T[slot_t]]`.
pub fn embed_sequence<T: Scalar>(
    tape: &Tape<T>,
    batch: &SeqBatch,
    user_table: Var,
    poi_table: Var,
    slot_table: Var,
) -> Result<Var, TensorError> {
    if batch.is_empty() || batch.slots.len() != batch.pois.len() {
        return Err(TensorError::Empty { op: "embed_sequence" });
    }
    let users: Rc<[usize]> = vec![batch.user; batch.len()].into();
    let u = tape.gather_rows(user_table, users)?;
    let v = tape.gather_rows(poi_table, batch.pois.as_slice().into())?;
    let t = tape.gather_rows(slot_table, batch.slots.as_slice().into())?;
    tape.concat(&[u, v, t], 1)
}

/// Attention weights `softmax(Q K^T / sqrt(width))`, `k × k`, and the output
/// `weights · V`.
pub fn attention<T: Scalar>(
    tape: &Tape<T>,
    e: Var,
    layer: &TransformerLayerParams,
    bound: &Bound,
) -> Result<(Var, Var), TensorError> {
    let q = tape.matmul(e, bound[layer.q])?;
    let k = tape.matmul(e, bound[layer.k])?;
    let v = tape.matmul(e, bound[layer.v])?;
    let width = tape.shape(e)[1];
    let scale = T::one() / T::from_usize(width).expect("small").sqrt();
    let logits = tape.scalar_mul(tape.matmul(q, tape.transpose(k))?, scale);
    let w = tape.softmax(logits, 1)?;
    Ok((w, tape.matmul(w, v)?))
}

pub fn transformer_layer<T: Scalar>(
    tape: &Tape<T>,
    e: Var,
    layer: &TransformerLayerParams,
    bound: &Bound,
    residual: bool,
) -> Result<Var, TensorError> {
    let (_, h) = attention(tape, e, layer, bound)?;
    if residual {
        tape.add(e, h)
    } else {
        Ok(h)
    }
}

/// Applies every layer in order; the input passes through untouched when
/// there are no layers.
pub fn encode_sequence<T: Scalar>(
    tape: &Tape<T>,
    e: Var,
    params: &TransformerParams,
    bound: &Bound,
) -> Result<Var, TensorError> {
    let mut h = e;
    for layer in &params.layers {
        h = transformer_layer(tape, h, layer, bound, params.residual)?;
    }
    Ok(h)
}
