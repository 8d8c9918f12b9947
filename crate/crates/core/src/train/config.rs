use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::TrainError;
use crate::align::AlignMode;
use crate::graph_encoder::{AdaSharing, ContextSwitches, DEFAULT_LEAKY_SLOPE};
use crate::ingest::NeighborDirection;

/// When the full-graph forward is recomputed during training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphRefresh {
    /// Once per epoch; every batch of the epoch backpropagates into it.
    #[default]
    Epoch,
    /// Before every batch, from the current parameters.
    Batch,
}

/// Single-mechanism switches; all `false` is the full model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Ablation {
    pub no_mutloss: bool,
    pub no_catada: bool,
    pub no_spatada: bool,
    pub no_tempada: bool,
    pub no_contada: bool,
}

impl Ablation {
    pub const VARIANTS: [&'static str; 6] = ["full", "no_mutloss", "no_catada", "no_spatada", "no_tempada", "no_contada"];

    pub fn from_variant(name: &str) -> Option<Self> {
        let mut a = Self::default();
        match name {
            "full" => {}
            "no_mutloss" => a.no_mutloss = true,
            "no_catada" => a.no_catada = true,
            "no_spatada" => a.no_spatada = true,
            "no_tempada" => a.no_tempada = true,
            "no_contada" => a.no_contada = true,
            _ => return None,
        }
        Some(a)
    }

    pub fn switches(&self) -> ContextSwitches {
        if self.no_contada {
            return ContextSwitches::STANDARD_GAT;
        }
        ContextSwitches {
            adaptive: true,
            category: !self.no_catada,
            spatial: !self.no_spatada,
            temporal: !self.no_tempada,
        }
    }
}

/// Every knob of a training run. Unknown keys in a config file are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    pub lr: f64,
    /// Weight of the mutual alignment loss.
    pub beta: f64,
    /// L2 coefficient.
    pub lambda: f64,
    pub gat_layers: usize,
    pub transformer_layers: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub no_mutloss: bool,
    pub no_catada: bool,
    pub no_spatada: bool,
    pub no_tempada: bool,
    pub no_contada: bool,
    pub align_mode: AlignMode,
    pub neighbor_direction: NeighborDirection,
    pub self_loops: bool,
    pub ada_sharing: AdaSharing,
    pub transformer_residual: bool,
    pub graph_refresh: GraphRefresh,
    pub leaky_slope: f64,
    /// Evaluate the validation split every epoch and keep the best parameters.
    pub early_stopping: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 60,
            lr: 1e-3,
            beta: 0.7,
            lambda: 1e-5,
            gat_layers: 2,
            transformer_layers: 2,
            epochs: 100,
            patience: 10,
            seed: 42,
            batch_size: 32,
            no_mutloss: false,
            no_catada: false,
            no_spatada: false,
            no_tempada: false,
            no_contada: false,
            align_mode: AlignMode::default(),
            neighbor_direction: NeighborDirection::default(),
            self_loops: true,
            ada_sharing: AdaSharing::default(),
            transformer_residual: false,
            graph_refresh: GraphRefresh::default(),
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            early_stopping: true,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self, TrainError> {
        let cfg: Self = toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.dim == 0 {
            return fail("dim must be positive");
        }
        if self.gat_layers == 0 {
            return fail("gat_layers must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("lr must be positive");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return fail("beta must be non-negative");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail("lambda must be non-negative");
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope.is_finite()) {
            return fail("leaky_slope must be non-negative");
        }
        Ok(())
    }

    /// The alignment weight actually applied.
    pub fn effective_beta(&self) -> f64 {
        if self.no_mutloss {
            0.0
        } else {
            self.beta
        }
    }

    pub fn ablation(&self) -> Ablation {
        Ablation {
            no_mutloss: self.no_mutloss,
            no_catada: self.no_catada,
            no_spatada: self.no_spatada,
            no_tempada: self.no_tempada,
            no_contada: self.no_contada,
        }
    }

    pub fn with_ablation(&self, a: Ablation) -> Self {
        Self {
            no_mutloss: a.no_mutloss,
            no_catada: a.no_catada,
            no_spatada: a.no_spatada,
            no_tempada: a.no_tempada,
            no_contada: a.no_contada,
            ..self.clone()
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
