//! Bidirectional KL alignment between per-sequence distributions induced by
//! the graph and sequence extractors.

use serde::{Deserialize, Serialize};

use crate::tensor::{Scalar, Tape, TensorError, Var};

/// How each branch's `k × width` matrix becomes a distribution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignMode {
    /// Row means, softmax over positions.
    #[default]
    PositionMean,
    /// Sequence side projected to `dim`, softmax over positions per column,
    /// KL averaged over columns.
    Projection,
}

/// `softmax_t(mean(H[t, :]))` as a `1 × k` row.
pub fn position_distribution<T: Scalar>(tape: &Tape<T>, h: Var) -> Result<Var, TensorError> {
    let scores = tape.transpose(tape.mean(h, 1)?);
    tape.softmax(scores, 1)
}

/// `sum P log(P / Q)` with both logs clamped at the floor.
pub fn kl<T: Scalar>(tape: &Tape<T>, p: Var, q: Var) -> Result<Var, TensorError> {
    let (sp, sq) = (tape.shape(p), tape.shape(q));
    if sp != sq {
        return Err(TensorError::ShapeMismatch {
            op: "kl",
            lhs: sp,
            rhs: sq,
        });
    }
    let diff = tape.add(tape.log(p), tape.neg(tape.log(q)))?;
    Ok(tape.sum_all(tape.elementwise_mul(p, diff)?))
}

/// `KL(P_s || P_g) + KL(P_g || P_s)` for one sequence.
pub fn mutual_loss<T: Scalar>(tape: &Tape<T>, h_seq: Var, h_graph: Var) -> Result<Var, TensorError> {
    let ps = position_distribution(tape, h_seq)?;
    let pg = position_distribution(tape, h_graph)?;
    symmetric_kl(tape, ps, pg)
}

pub fn symmetric_kl<T: Scalar>(tape: &Tape<T>, p: Var, q: Var) -> Result<Var, TensorError> {
    tape.add(kl(tape, p, q)?, kl(tape, q, p)?)
}

/// Projection variant: `H_seq · proj` (`k × dim`) and `H_graph` are each
/// softmaxed down the positions; the symmetric KL is averaged over columns.
pub fn mutual_loss_projected<T: Scalar>(
    tape: &Tape<T>,
    h_seq: Var,
    h_graph: Var,
    proj: Var,
) -> Result<Var, TensorError> {
    let ps = tape.softmax(tape.matmul(h_seq, proj)?, 0)?;
    let pg = tape.softmax(h_graph, 0)?;
    let cols = tape.shape(pg)[1];
    let total = symmetric_kl(tape, ps, pg)?;
    Ok(tape.scalar_mul(total, T::one() / T::from_usize(cols).expect("small")))
}
