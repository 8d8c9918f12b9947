use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use crate::align::{mutual_loss, mutual_loss_projected, AlignMode};
use crate::graph_encoder::{
    encode_graph, AdaAttParams, AdaSharing, ContextBalance, ContextMlp, ContextSwitches, GatLayerParams,
    GraphEncoderParams, GraphEncoding, GraphInputs,
};
use crate::ingest::HOURS;
use crate::seq_encoder::{embed_sequence, encode_sequence, SeqBatch, TransformerLayerParams, TransformerParams};
use crate::tensor::{init_params, seeded_rng, Bound, ParamId, ParamStore, Scalar, Tape, Tensor, TensorError, Var};

/// Vocabulary sizes and embedding width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub users: usize,
    pub pois: usize,
    pub categories: usize,
    pub dmax: usize,
    pub dim: usize,
}

/// Handles into a [`ParamStore`] for every learnable tensor.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub user_emb: ParamId,
    pub graph: GraphEncoderParams,
    pub seq: TransformerParams,
    /// `3·dim × |V|`.
    pub head_w: ParamId,
    /// `1 × |V|`.
    pub head_b: ParamId,
    /// `3·dim × dim`, only in projection alignment mode.
    pub align_proj: Option<ParamId>,
}

/// Parameters plus their values.
#[derive(Clone, Debug)]
pub struct Model<T> {
    pub store: ParamStore<T>,
    pub params: ModelParams,
}

struct Builder<'a, T> {
    store: &'a mut ParamStore<T>,
    rng: &'a mut ChaCha8Rng,
}

impl<T: Scalar> Builder<'_, T> {
    fn uniform(&mut self, name: String, rows: usize, cols: usize, fan_in: usize) -> ParamId {
        let t = init_params(self.rng, rows, cols, fan_in);
        self.store.add(name, t)
    }

    fn zeros(&mut self, name: String, rows: usize, cols: usize) -> ParamId {
        self.store.add(name, Tensor::zeros(rows, cols))
    }

    fn mlp(&mut self, prefix: &str, stages: usize, dim: usize) -> AdaAttParams {
        let stages = (0..stages)
            .map(|s| {
                let fan_in = if s == 0 { 2 * dim } else { dim };
                let w = self.uniform(format!("{prefix}.{s}.w"), fan_in, dim, fan_in);
                let b = self.zeros(format!("{prefix}.{s}.b"), 1, dim);
                (w, b)
            })
            .collect();
        AdaAttParams { stages }
    }

    fn context(&mut self, ctx: &str, sharing: AdaSharing, layers: usize, dim: usize) -> ContextMlp {
        let mlps = match sharing {
            AdaSharing::Staged => vec![self.mlp(&format!("ada.{ctx}.0"), layers, dim)],
            AdaSharing::PerLayer => (0..layers).map(|m| self.mlp(&format!("ada.{ctx}.{m}"), 1, dim)).collect(),
        };
        ContextMlp { sharing, mlps }
    }
}

impl<T: Scalar> Model<T> {
    /// Fresh parameters drawn from `cfg.seed`.
    pub fn new(dims: ModelDims, cfg: &TrainConfig) -> Self {
        let mut rng = seeded_rng(cfg.seed);
        Self::with_rng(dims, cfg, &mut rng)
    }

    pub fn with_rng(dims: ModelDims, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Self {
        let d = dims.dim;
        let w3 = 3 * d;
        let mut store = ParamStore::new();
        let mut b = Builder { store: &mut store, rng };
        let user_emb = b.uniform("emb.user".into(), dims.users, d, d);
        let poi_emb = b.uniform("emb.poi".into(), dims.pois, d, d);
        let slot_emb = b.uniform("emb.slot".into(), HOURS, d, d);
        let cat_emb = b.uniform("emb.category".into(), dims.categories, d, d);
        let dist_emb = b.uniform("emb.distance".into(), dims.dmax, d, d);
        let layers = (0..cfg.gat_layers)
            .map(|l| GatLayerParams {
                w: b.uniform(format!("gat.{l}.w"), d, d, d),
                a: b.uniform(format!("gat.{l}.a"), 2 * d, 1, 2 * d),
            })
            .collect();
        let category = b.context("category", cfg.ada_sharing, cfg.gat_layers, d);
        let spatial = b.context("spatial", cfg.ada_sharing, cfg.gat_layers, d);
        let temporal = b.context("temporal", cfg.ada_sharing, cfg.gat_layers, d);
        let balance = ContextBalance {
            logits: b.zeros("balance".into(), 1, 3),
        };
        let seq_layers = (0..cfg.transformer_layers)
            .map(|l| TransformerLayerParams {
                q: b.uniform(format!("trans.{l}.q"), w3, w3, w3),
                k: b.uniform(format!("trans.{l}.k"), w3, w3, w3),
                v: b.uniform(format!("trans.{l}.v"), w3, w3, w3),
            })
            .collect();
        let head_w = b.uniform("head.w".into(), w3, dims.pois, w3);
        let head_b = b.zeros("head.b".into(), 1, dims.pois);
        let align_proj = match cfg.align_mode {
            AlignMode::PositionMean => None,
            AlignMode::Projection => Some(b.uniform("align.proj".into(), w3, d, w3)),
        };
        let params = ModelParams {
            dims,
            user_emb,
            graph: GraphEncoderParams {
                poi_emb,
                cat_emb,
                dist_emb,
                slot_emb,
                layers,
                category,
                spatial,
                temporal,
                balance,
            },
            seq: TransformerParams {
                layers: seq_layers,
                residual: cfg.transformer_residual,
            },
            head_w,
            head_b,
            align_proj,
        };
        Self { store, params }
    }

    /// Current balance weights `(b_c, b_d, b_t)`.
    pub fn balance(&self) -> [T; 3] {
        ContextBalance::weights(self.store.get(self.params.graph.balance.logits))
    }
}

impl ModelParams {
    pub fn encode_graph<T: Scalar>(
        &self,
        tape: &Tape<T>,
        bound: &Bound,
        inputs: &GraphInputs<T>,
        switches: ContextSwitches,
        slope: T,
    ) -> Result<GraphEncoding, TensorError> {
        encode_graph(tape, bound, &self.graph, inputs, switches, slope)
    }

    /// `k × 3·dim` sequence representation.
    pub fn encode_sequence<T: Scalar>(&self, tape: &Tape<T>, bound: &Bound, batch: &SeqBatch) -> Result<Var, TensorError> {
        let e = embed_sequence(
            tape,
            batch,
            bound[self.user_emb],
            bound[self.graph.poi_emb],
            bound[self.graph.slot_emb],
        )?;
        encode_sequence(tape, e, &self.seq, bound)
    }

    /// `softmax(h_last W_s + b_s)`, `1 × |V|`.
    pub fn predict<T: Scalar>(&self, tape: &Tape<T>, bound: &Bound, h_seq: Var) -> Result<Var, TensorError> {
        let k = tape.shape(h_seq)[0];
        let last = tape.gather_rows(h_seq, vec![k - 1].into())?;
        predict_scores(tape, last, bound[self.head_w], bound[self.head_b])
    }

    /// Alignment loss for one sequence given the graph representation `H_g`.
    pub fn mutual<T: Scalar>(
        &self,
        tape: &Tape<T>,
        bound: &Bound,
        batch: &SeqBatch,
        h_seq: Var,
        hg: Var,
    ) -> Result<Var, TensorError> {
        let hg_seq = tape.gather_rows(hg, batch.pois.as_slice().into())?;
        match self.align_proj {
            None => mutual_loss(tape, h_seq, hg_seq),
            Some(p) => mutual_loss_projected(tape, h_seq, hg_seq, bound[p]),
        }
    }

    /// Per-sample objective terms. `hg` is `None` when alignment is off.
    pub fn sample_terms<T: Scalar>(
        &self,
        tape: &Tape<T>,
        bound: &Bound,
        batch: &SeqBatch,
        hg: Option<Var>,
    ) -> Result<SampleTerms, TensorError> {
        let h = self.encode_sequence(tape, bound, batch)?;
        let probs = self.predict(tape, bound, h)?;
        let ce = ce_loss(tape, probs, batch.target)?;
        let jm = match hg {
            Some(hg) => Some(self.mutual(tape, bound, batch, h, hg)?),
            None => None,
        };
        Ok(SampleTerms { probs, ce, jm })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SampleTerms {
    pub probs: Var,
    pub ce: Var,
    pub jm: Option<Var>,
}

/// `softmax(h W + b)` for a `1 × w` row `h`.
pub fn predict_scores<T: Scalar>(tape: &Tape<T>, h: Var, w: Var, b: Var) -> Result<Var, TensorError> {
    tape.softmax(tape.add_row(tape.matmul(h, w)?, b)?, 1)
}

/// `-log probs[target]` with the log floor.
pub fn ce_loss<T: Scalar>(tape: &Tape<T>, probs: Var, target: usize) -> Result<Var, TensorError> {
    let p = tape.gather_rows(tape.transpose(probs), vec![target].into())?;
    Ok(tape.neg(tape.log(p)))
}

/// `ce + beta·jm + lambda·‖θ‖²` as plain numbers.
pub fn total_loss(ce: f64, jm: f64, beta: f64, lambda: f64, sq_norm: f64) -> f64 {
    ce + beta * jm + lambda * sq_norm
}
