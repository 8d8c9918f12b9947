use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Trajectory;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.8, val: 0.1 }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<Trajectory>,
    pub val: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
}

/// Per user, orders trajectories by first timestamp and assigns the first
/// `ceil(train * n)` to train, the next `ceil(val * n)` to validation and the
/// rest to test. Train always receives at least one trajectory.
pub fn chrono_split(trajectories: &[Trajectory], ratios: SplitRatios) -> Splits {
    let mut per_user: BTreeMap<usize, Vec<&Trajectory>> = BTreeMap::new();
    for t in trajectories {
        per_user.entry(t.user).or_default().push(t);
    }
    let mut out = Splits::default();
    for (_, mut ts) in per_user {
        ts.sort_by_key(|t| (t.first_timestamp(), t.day));
        let n = ts.len();
        let n_train = ceil_share(ratios.train, n).clamp(1, n);
        let n_val = ceil_share(ratios.val, n).min(n - n_train);
        for (k, t) in ts.into_iter().enumerate() {
            let dst = if k < n_train {
                &mut out.train
            } else if k < n_train + n_val {
                &mut out.val
            } else {
                &mut out.test
            };
            dst.push(t.clone());
        }
    }
    out
}

fn ceil_share(ratio: f64, n: usize) -> usize {
    // Guards against products like 0.1 * 30 = 3.0000000000000004.
    (ratio * n as f64 - 1e-9).ceil().max(0.0) as usize
}
