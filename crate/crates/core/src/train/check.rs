use super::{TrainConfig, TrainData, TrainError};
use crate::graph_encoder::GraphInputs;
use crate::ingest::{filter_dataset, synthesize_checkins, DistanceBinning, FilterConfig, SplitRatios, SynthConfig};
use crate::seq_encoder::SeqBatch;
use rand::Rng;

use crate::tensor::{seeded_rng, finite_diff_check, Bound, GradCheckReport, ParamStore, Scalar, Tape, TensorError, Var};

use super::model::ModelParams;

/// `mean(ce + beta·jm) + lambda·‖θ‖²` over `samples`, with the graph encoded
/// from the same bound parameters.
pub fn full_objective<T: Scalar>(
    tape: &Tape<T>,
    bound: &Bound,
    params: &ModelParams,
    inputs: &GraphInputs<T>,
    samples: &[SeqBatch],
    cfg: &TrainConfig,
) -> Result<Var, TensorError> {
    let terms = objective_terms(tape, bound, params, inputs, samples, cfg)?;
    Ok(tape.sum_all(terms))
}

/// The summands of [`full_objective`] as a column: `ce_i / n`, then
/// `beta·jm_i / n`, then `lambda·‖θ_p‖²` per parameter.
pub fn objective_terms<T: Scalar>(
    tape: &Tape<T>,
    bound: &Bound,
    params: &ModelParams,
    inputs: &GraphInputs<T>,
    samples: &[SeqBatch],
    cfg: &TrainConfig,
) -> Result<Var, TensorError> {
    let beta = cfg.effective_beta();
    let hg = if beta > 0.0 {
        let enc = params.encode_graph(tape, bound, inputs, cfg.ablation().switches(), T::lit(cfg.leaky_slope))?;
        Some(enc.hg)
    } else {
        None
    };
    let inv_n = T::one() / T::from_usize(samples.len()).expect("small");
    let mut ce = Vec::with_capacity(samples.len());
    let mut jm = Vec::with_capacity(samples.len());
    for s in samples {
        let t = params.sample_terms(tape, bound, s, hg)?;
        ce.push(tape.scalar_mul(t.ce, inv_n));
        if let Some(j) = t.jm {
            jm.push(tape.scalar_mul(j, T::lit(beta) * inv_n));
        }
    }
    let mut terms = ce;
    terms.extend(jm);
    if cfg.lambda > 0.0 {
        for &v in bound.vars() {
            let sq = tape.sum_all(tape.elementwise_mul(v, v)?);
            terms.push(tape.scalar_mul(sq, T::lit(cfg.lambda)));
        }
    }
    tape.concat(&terms, 0)
}

/// Size of the tiny full-model gradient check.
#[derive(Clone, Copy, Debug)]
pub struct ToyCheck {
    pub dim: usize,
    pub pois: usize,
    pub categories: usize,
    pub seed: u64,
    pub eps: f64,
    /// Parameters are redrawn uniformly from `[-scale, scale]`.
    pub scale: f64,
}

impl Default for ToyCheck {
    fn default() -> Self {
        Self {
            dim: 4,
            pois: 6,
            categories: 3,
            seed: 7,
            eps: 1e-5,
            scale: 1.0,
        }
    }
}

impl ToyCheck {
    /// Two GAT layers, one Transformer layer, `beta = 0.7`, no L2.
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            dim: self.dim,
            gat_layers: 2,
            transformer_layers: 1,
            beta: 0.7,
            lambda: 0.0,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }

    /// Every POI visited, every category present, all data in train.
    pub fn data(&self) -> Result<TrainData, TrainError> {
        let synth = SynthConfig {
            users: 3,
            pois: self.pois,
            categories: self.categories,
            extent_km: 4.0,
            trajectories_per_user: 4,
            min_len: 3,
            max_len: 5,
            category_coupling: 1.0,
            distance_coupling: 0.5,
            hour_coupling: 1.0,
            ..SynthConfig::default()
        };
        let rows = synthesize_checkins(&synth, self.seed).map_err(|e| TrainError::Config(e.to_string()))?;
        let filter = FilterConfig {
            min_poi_interactions: 1,
            min_user_trajectories: 1,
            min_traj_len: 2,
            binning: DistanceBinning { width_km: 0.5, dmax: 6 },
            ..FilterConfig::default()
        };
        let mut ds = filter_dataset(&rows, &filter).map_err(|e| TrainError::Config(e.to_string()))?;
        ds.apply_split(SplitRatios { train: 1.0, val: 0.0 });
        Ok(TrainData::new(ds, true))
    }

    pub fn run(&self) -> Result<GradCheckReport, TrainError> {
        let cfg = self.config();
        let data = self.data()?;
        let model = super::Model::<f64>::new(data.dims(cfg.dim), &cfg);
        let inputs: GraphInputs<f64> = data.graph_inputs(&cfg)?;
        let samples = data.samples(super::Split::Train);
        let params = model.params.clone();
        let mut store: ParamStore<f64> = model.store;
        let mut rng = seeded_rng(self.seed);
        rng.set_stream(2);
        for id in store.ids().collect::<Vec<_>>() {
            for v in store.get_mut(id).data_mut() {
                *v = rng.gen_range(-self.scale..=self.scale);
            }
        }
        let report = finite_diff_check(&mut store, self.eps, |tape, bound| {
            objective_terms(tape, bound, &params, &inputs, &samples, &cfg)
        })?;
        Ok(report)
    }
}
