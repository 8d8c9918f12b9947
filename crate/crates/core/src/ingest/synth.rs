use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{time_slot, write_checkins, CheckIn, IngestError};
use crate::tensor::seeded_rng;

/// Parameters for a synthetic check-in corpus.
///
/// Transitions are drawn from `exp(score)` over all POIs where the score adds
/// `category_coupling` when the candidate has the successor category of the
/// current POI, subtracts `distance_coupling * km / distance_scale_km`, and
/// adds `hour_coupling * cos(2pi (hour - peak) / 24)` for the candidate's
/// peak hour. All couplings at zero give uniform transitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub users: usize,
    pub pois: usize,
    pub categories: usize,
    /// Side of the square region, in km.
    pub extent_km: f64,
    pub center_lat: f64,
    pub center_lon: f64,
    pub trajectories_per_user: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub category_coupling: f64,
    pub distance_coupling: f64,
    pub hour_coupling: f64,
    pub distance_scale_km: f64,
    /// Midnight UTC of the first simulated day.
    pub start_timestamp: i64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            users: 20,
            pois: 30,
            categories: 4,
            extent_km: 10.0,
            center_lat: 33.45,
            center_lon: -112.07,
            trajectories_per_user: 6,
            min_len: 3,
            max_len: 6,
            category_coupling: 0.0,
            distance_coupling: 0.0,
            hour_coupling: 0.0,
            distance_scale_km: 1.0,
            start_timestamp: 1_356_998_400,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), IngestError> {
        let fail = |m: &str| Err(IngestError::InfeasibleSynth(m.to_string()));
        if self.users == 0 {
            return fail("0 users");
        }
        if self.pois == 0 {
            return fail("0 POIs");
        }
        if self.categories == 0 {
            return fail("0 categories");
        }
        if self.trajectories_per_user == 0 {
            return fail("0 trajectories per user");
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return fail("trajectory length range is empty");
        }
        if self.max_len > 24 {
            return fail("trajectories longer than 24 events do not fit in a day at one per hour");
        }
        if !(self.extent_km > 0.0) || !(self.distance_scale_km > 0.0) {
            return fail("extent and distance scale must be positive");
        }
        let lat_span = self.extent_km / 2.0 / KM_PER_DEG;
        if (self.center_lat.abs() + lat_span) >= 89.0 {
            return fail("region too close to a pole");
        }
        Ok(())
    }
}

const KM_PER_DEG: f64 = 111.195;

struct SynthPoi {
    x_km: f64,
    y_km: f64,
    category: usize,
    peak_hour: f64,
}

/// Generates check-ins in memory; deterministic for a given seed.
pub fn synthesize_checkins(cfg: &SynthConfig, seed: u64) -> Result<Vec<CheckIn>, IngestError> {
    cfg.validate()?;
    let mut rng = seeded_rng(seed);
    let cat_peaks: Vec<f64> = (0..cfg.categories).map(|_| rng.gen_range(7.0..22.0)).collect();
    let pois: Vec<SynthPoi> = (0..cfg.pois)
        .map(|i| {
            let category = if i < cfg.categories { i } else { rng.gen_range(0..cfg.categories) };
            SynthPoi {
                x_km: rng.gen_range(-0.5..0.5) * cfg.extent_km,
                y_km: rng.gen_range(-0.5..0.5) * cfg.extent_km,
                category,
                peak_hour: cat_peaks[category] + rng.gen_range(-1.0..1.0),
            }
        })
        .collect();
    let coords: Vec<(f64, f64)> = pois
        .iter()
        .map(|p| {
            let lat = cfg.center_lat + p.y_km / KM_PER_DEG;
            let lon = cfg.center_lon + p.x_km / (KM_PER_DEG * lat.to_radians().cos());
            (lat, lon)
        })
        .collect();
    let utc = chrono::FixedOffset::east_opt(0).expect("utc");

    let hour_term = |p: &SynthPoi, hour: f64| {
        cfg.hour_coupling * (2.0 * std::f64::consts::PI * (hour - p.peak_hour) / 24.0).cos()
    };
    let mut weights = vec![0.0; cfg.pois];
    let mut out = Vec::with_capacity(cfg.users * cfg.trajectories_per_user * cfg.max_len);
    for u in 0..cfg.users {
        let home = rng.gen_range(0..cfg.pois);
        for d in 0..cfg.trajectories_per_user {
            let len = rng.gen_range(cfg.min_len..=cfg.max_len);
            let latest_start = 24 - len;
            let start = rng.gen_range(latest_start.min(7)..=latest_start);
            let day_ts = cfg.start_timestamp + d as i64 * 86_400;
            let mut cur: Option<usize> = None;
            for k in 0..len {
                let hour = (start + k) as f64;
                let from = cur.unwrap_or(home);
                for (w, p) in weights.iter_mut().zip(&pois) {
                    let f = &pois[from];
                    let km = ((p.x_km - f.x_km).powi(2) + (p.y_km - f.y_km).powi(2)).sqrt();
                    let succ = (f.category + 1) % cfg.categories;
                    let cat = if cur.is_some() && p.category == succ {
                        cfg.category_coupling
                    } else {
                        0.0
                    };
                    *w = (cat - cfg.distance_coupling * km / cfg.distance_scale_km + hour_term(p, hour)).exp();
                }
                let dist = WeightedIndex::new(&weights)
                    .map_err(|e| IngestError::InfeasibleSynth(format!("degenerate transition weights: {e}")))?;
                let next = dist.sample(&mut rng);
                let ts = day_ts + (start + k) as i64 * 3600 + rng.gen_range(0..3600);
                out.push(CheckIn {
                    user_id: format!("u{u}"),
                    poi_id: format!("p{next}"),
                    category_id: format!("c{}", pois[next].category),
                    latitude: coords[next].0,
                    longitude: coords[next].1,
                    timestamp: ts,
                    time_slot: time_slot(ts, utc).expect("in range"),
                });
                cur = Some(next);
            }
        }
    }
    Ok(out)
}

/// Writes a synthetic corpus to `out` in the check-in CSV schema.
pub fn generate_synthetic(cfg: &SynthConfig, seed: u64, out: &Path) -> Result<usize, IngestError> {
    let rows = synthesize_checkins(cfg, seed)?;
    let file = File::create(out).map_err(|source| IngestError::Io {
        path: out.display().to_string(),
        source,
    })?;
    write_checkins(BufWriter::new(file), &rows)?;
    Ok(rows.len())
}
