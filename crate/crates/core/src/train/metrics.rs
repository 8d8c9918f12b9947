use serde::{Deserialize, Serialize};

pub const KS: [usize; 3] = [1, 5, 10];

/// 1-based rank of `target` under descending scores; equal scores rank the
/// lower POI index first.
pub fn rank_of<T: PartialOrd>(scores: &[T], target: usize) -> usize {
    let st = &scores[target];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(j, s)| s > st || (j < target && s == st))
        .count()
}

/// Accumulates HR@K and NDCG@K over samples.
#[derive(Clone, Debug, Default)]
pub struct RankAccumulator {
    hits: [f64; 3],
    gains: [f64; 3],
    samples: usize,
}

impl RankAccumulator {
    pub fn push(&mut self, rank: usize) {
        self.samples += 1;
        for (i, &k) in KS.iter().enumerate() {
            if rank <= k {
                self.hits[i] += 1.0;
                self.gains[i] += 1.0 / ((rank + 1) as f64).log2();
            }
        }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn finish(&self) -> Metrics {
        let n = self.samples.max(1) as f64;
        Metrics {
            hr: self.hits.map(|h| h / n),
            ndcg: self.gains.map(|g| g / n),
            samples: self.samples,
        }
    }
}

/// HR and NDCG at each of [`KS`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub hr: [f64; 3],
    pub ndcg: [f64; 3],
    pub samples: usize,
}

impl Metrics {
    pub fn hr_at(&self, k: usize) -> Option<f64> {
        KS.iter().position(|&x| x == k).map(|i| self.hr[i])
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        KS.iter().position(|&x| x == k).map(|i| self.ndcg[i])
    }

    pub fn ndcg10(&self) -> f64 {
        self.ndcg[2]
    }
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean `ce + beta·jm` over training samples plus `lambda·‖θ‖²` at epoch end.
    pub train_loss: f64,
    pub ce: f64,
    pub jm: f64,
    /// Validation NDCG@10, when evaluated.
    pub val_ndcg10: Option<f64>,
    pub balance: [f64; 3],
}

/// Outcome of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub curve: Vec<EpochLog>,
    /// Epoch whose parameters were kept (1-based).
    pub best_epoch: usize,
    pub best_val_ndcg10: Option<f64>,
    pub train: Option<Metrics>,
    pub val: Option<Metrics>,
    pub test: Option<Metrics>,
}
