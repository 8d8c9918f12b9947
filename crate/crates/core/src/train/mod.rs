//! Prediction head, objective, the joint training loop with early stopping,
//! and ranking evaluation.

mod check;
mod config;
mod metrics;
mod model;

pub use check::{full_objective, objective_terms, ToyCheck};
pub use config::{Ablation, GraphRefresh, TrainConfig};
pub use metrics::{rank_of, EpochLog, EvalReport, Metrics, RankAccumulator, KS};
pub use model::{ce_loss, predict_scores, total_loss, Model, ModelDims, ModelParams, SampleTerms};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph_encoder::GraphInputs;
use crate::ingest::{build_transition_graph, extract_context_features, ContextFeatures, Dataset, TransitionGraph, Trajectory};
use crate::seq_encoder::{expand_prefixes, SeqBatch};
use crate::tensor::{seeded_rng, AdamConfig, AdamState, Bound, ParamStore, Scalar, Tape, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{0} split has no samples")]
    EmptySplit(Split),
    #[error("loss diverged to {value} at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize, value: f64 },
    #[error("non-finite prediction scores")]
    NonFiniteScores,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split `{s}` (expected train, val or test)")),
        }
    }
}

/// A split dataset with the graph and context features of its train split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainData {
    pub dataset: Dataset,
    pub graph: TransitionGraph,
    pub features: ContextFeatures,
}

impl TrainData {
    pub fn new(dataset: Dataset, self_loops: bool) -> Self {
        let graph = build_transition_graph(&dataset.pois, &dataset.train, dataset.binning, self_loops);
        let features = extract_context_features(&dataset.categories_of_pois(), &dataset.train, &graph, dataset.dmax());
        Self {
            dataset,
            graph,
            features,
        }
    }

    pub fn dims(&self, dim: usize) -> ModelDims {
        ModelDims {
            users: self.dataset.num_users(),
            pois: self.dataset.num_pois(),
            categories: self.dataset.num_categories(),
            dmax: self.dataset.dmax(),
            dim,
        }
    }

    pub fn trajectories(&self, split: Split) -> &[Trajectory] {
        match split {
            Split::Train => &self.dataset.train,
            Split::Val => &self.dataset.val,
            Split::Test => &self.dataset.test,
        }
    }

    pub fn samples(&self, split: Split) -> Vec<SeqBatch> {
        samples_of(self.trajectories(split))
    }

    pub fn graph_inputs<T: Scalar>(&self, cfg: &TrainConfig) -> Result<GraphInputs<T>, TensorError> {
        GraphInputs::new(&self.graph, &self.features, cfg.neighbor_direction, cfg.self_loops)
    }
}

/// Prefix expansion over every trajectory, in order.
pub fn samples_of(trajectories: &[Trajectory]) -> Vec<SeqBatch> {
    trajectories
        .iter()
        .flat_map(|t| {
            let ev: Vec<(usize, usize)> = t.events.iter().map(|v| (v.poi, v.slot as usize)).collect();
            expand_prefixes(t.user, &ev)
        })
        .collect()
}

/// Ranks every sample's target under the model; prediction does not touch the graph branch.
pub fn evaluate<T: Scalar>(model: &Model<T>, samples: &[SeqBatch]) -> Result<Metrics, TrainError> {
    let tape = Tape::new();
    let bound = model.store.bind_frozen(&tape);
    let mark = tape.len();
    let mut acc = RankAccumulator::default();
    for s in samples {
        tape.truncate(mark);
        let h = model.params.encode_sequence(&tape, &bound, s)?;
        let probs = model.params.predict(&tape, &bound, h)?;
        let rank = tape.with_value(probs, |p| {
            if p.data().iter().all(|v| v.is_finite()) {
                Some(rank_of(p.data(), s.target))
            } else {
                None
            }
        });
        acc.push(rank.ok_or(TrainError::NonFiniteScores)?);
    }
    Ok(acc.finish())
}

pub fn evaluate_split<T: Scalar>(model: &Model<T>, data: &TrainData, split: Split) -> Result<Metrics, TrainError> {
    let samples = data.samples(split);
    if samples.is_empty() {
        return Err(TrainError::EmptySplit(split));
    }
    evaluate(model, &samples)
}

/// Trained parameters and their history.
#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub model: Model<T>,
    pub report: EvalReport,
}

fn batch_loss<T: Scalar>(
    tape: &Tape<T>,
    model: &Model<T>,
    bound: &Bound,
    batch: &[&SeqBatch],
    hg: Option<Var>,
    beta: T,
) -> Result<(Var, T, T), TensorError> {
    let mut terms = Vec::with_capacity(batch.len());
    let (mut ce_sum, mut jm_sum) = (T::zero(), T::zero());
    for s in batch {
        let t = model.params.sample_terms(tape, bound, s, hg)?;
        ce_sum = ce_sum + tape.scalar(t.ce);
        let obj = match t.jm {
            Some(jm) => {
                jm_sum = jm_sum + tape.scalar(jm);
                tape.add(t.ce, tape.scalar_mul(jm, beta))?
            }
            None => t.ce,
        };
        terms.push(obj);
    }
    let total = tape.sum_all(tape.concat(&terms, 0)?);
    let mean = tape.scalar_mul(total, T::one() / T::from_usize(batch.len()).expect("small"));
    Ok((mean, ce_sum, jm_sum))
}

/// Joint training with Adam. With the default epoch refresh, the graph branch
/// is encoded once per epoch and every batch of that epoch backpropagates
/// into the same encoding.
pub fn train<T: Scalar>(data: &TrainData, cfg: &TrainConfig) -> Result<TrainOutcome<T>, TrainError> {
    cfg.validate()?;
    let train_samples = data.samples(Split::Train);
    if train_samples.is_empty() {
        return Err(TrainError::EmptySplit(Split::Train));
    }
    let val_samples = data.samples(Split::Val);
    let select = cfg.early_stopping && !val_samples.is_empty();

    let mut model = Model::<T>::new(data.dims(cfg.dim), cfg);
    let inputs: GraphInputs<T> = data.graph_inputs(cfg)?;
    let switches = cfg.ablation().switches();
    let slope = T::lit(cfg.leaky_slope);
    let beta = T::lit(cfg.effective_beta());
    let use_graph = cfg.effective_beta() > 0.0;
    let adam_cfg = AdamConfig::new(T::lit(cfg.lr), T::lit(cfg.lambda));
    let mut adam = AdamState::new(&model.store);
    let mut rng = seeded_rng(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train_samples.len()).collect();

    let mut curve = Vec::new();
    let mut best: Option<(f64, usize, ParamStore<T>)> = None;
    let mut since_best = 0;
    let n = T::from_usize(train_samples.len()).expect("small");

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let tape = Tape::new();
        let epoch_graph = if use_graph && cfg.graph_refresh == GraphRefresh::Epoch {
            let gb = model.store.bind(&tape);
            let enc = model.params.encode_graph(&tape, &gb, &inputs, switches, slope)?;
            Some((gb, enc.hg))
        } else {
            None
        };
        let mark = tape.len();
        let (mut ce_sum, mut jm_sum) = (T::zero(), T::zero());
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            tape.truncate(mark);
            tape.zero_grads();
            let fresh = model.store.bind(&tape);
            let hg = match &epoch_graph {
                Some((_, hg)) => Some(*hg),
                None if use_graph => Some(model.params.encode_graph(&tape, &fresh, &inputs, switches, slope)?.hg),
                None => None,
            };
            let batch: Vec<&SeqBatch> = chunk.iter().map(|&i| &train_samples[i]).collect();
            let (loss, ce, jm) = batch_loss(&tape, &model, &fresh, &batch, hg, beta)?;
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(TrainError::Divergence {
                    epoch,
                    batch: b + 1,
                    value: value.as_f64(),
                });
            }
            tape.backward(loss)?;
            let grads: Vec<Tensor<T>> = model
                .store
                .ids()
                .map(|id| {
                    let mut g = tape.grad_or_zeros(fresh[id]);
                    if let Some((gb, _)) = &epoch_graph {
                        if let Some(extra) = tape.grad(gb[id]) {
                            g.add_assign(&extra);
                        }
                    }
                    g
                })
                .collect();
            adam.step(&mut model.store, &grads, &adam_cfg);
            ce_sum = ce_sum + ce;
            jm_sum = jm_sum + jm;
        }

        let ce = (ce_sum / n).as_f64();
        let jm = (jm_sum / n).as_f64();
        let train_loss = total_loss(ce, jm, cfg.effective_beta(), cfg.lambda, model.store.l2_sq().as_f64());
        if !train_loss.is_finite() {
            return Err(TrainError::Divergence {
                epoch,
                batch: 0,
                value: train_loss,
            });
        }
        let val_ndcg10 = if select {
            Some(evaluate(&model, &val_samples)?.ndcg10())
        } else {
            None
        };
        curve.push(EpochLog {
            epoch,
            train_loss,
            ce,
            jm,
            val_ndcg10,
            balance: model.balance().map(|b| b.as_f64()),
        });
        if let Some(v) = val_ndcg10 {
            if best.as_ref().is_none_or(|(bv, _, _)| v > *bv) {
                best = Some((v, epoch, model.store.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
        }
    }

    let (best_epoch, best_val_ndcg10) = match best {
        Some((v, e, store)) => {
            model.store = store;
            (e, Some(v))
        }
        None => (curve.len(), None),
    };
    let metrics = |split| {
        let s = data.samples(split);
        if s.is_empty() {
            Ok(None)
        } else {
            evaluate(&model, &s).map(Some)
        }
    };
    let report = EvalReport {
        best_epoch,
        best_val_ndcg10,
        train: metrics(Split::Train)?,
        val: metrics(Split::Val)?,
        test: metrics(Split::Test)?,
        curve,
    };
    Ok(TrainOutcome { model, report })
}
