//! Check-in loading, filtering, day segmentation, chronological splitting,
//! transition-graph construction and per-POI context features.

mod csv_io;
mod features;
mod filter;
mod geo;
mod graph;
mod split;
mod synth;

pub use csv_io::{load_checkins, parse_checkins, write_checkins, CSV_HEADER};
pub use features::{extract_context_features, ContextFeatures, HOURS};
pub use filter::{filter_dataset, FilterConfig};
pub use geo::{distance_bin, haversine_km, DistanceBinning, EARTH_RADIUS_KM};
pub use graph::{build_transition_graph, Edge, NeighborDirection, TransitionGraph};
pub use split::{chrono_split, SplitRatios, Splits};
pub use synth::{generate_synthetic, synthesize_checkins, SynthConfig};

use std::collections::HashMap;

use chrono::{DateTime, FixedOffset, NaiveDate, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("empty data")]
    EmptyData,
    #[error("empty after filtering")]
    EmptyAfterFiltering,
    #[error("invalid timezone offset `{0}`")]
    BadTimezone(String),
    #[error("infeasible synthetic config: {0}")]
    InfeasibleSynth(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One raw check-in event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckIn {
    pub user_id: String,
    pub poi_id: String,
    pub category_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub timestamp: i64,
    /// Hour of day in the configured timezone, `0..24`.
    pub time_slot: u8,
}

/// Parses `+0`, `-5`, `+05:30`, `UTC` or `Z` into a fixed offset.
pub fn parse_tz(s: &str) -> Result<FixedOffset, IngestError> {
    let bad = || IngestError::BadTimezone(s.to_string());
    let t = s.trim();
    if t.eq_ignore_ascii_case("utc") || t == "Z" {
        return FixedOffset::east_opt(0).ok_or_else(bad);
    }
    let (sign, rest) = match t.as_bytes().first() {
        Some(b'+') => (1, &t[1..]),
        Some(b'-') => (-1, &t[1..]),
        _ => (1, t),
    };
    let (h, m) = match rest.split_once(':') {
        Some((h, m)) => (h, m),
        None => (rest, "0"),
    };
    let h: i32 = h.parse().map_err(|_| bad())?;
    let m: i32 = m.parse().map_err(|_| bad())?;
    if !(0..=14).contains(&h) || !(0..60).contains(&m) {
        return Err(bad());
    }
    FixedOffset::east_opt(sign * (h * 3600 + m * 60)).ok_or_else(bad)
}

pub(crate) fn local_time(timestamp: i64, tz: FixedOffset) -> Option<DateTime<FixedOffset>> {
    DateTime::from_timestamp(timestamp, 0).map(|t| t.with_timezone(&tz))
}

pub fn time_slot(timestamp: i64, tz: FixedOffset) -> Option<u8> {
    local_time(timestamp, tz).map(|t| t.hour() as u8)
}

pub fn day_key(timestamp: i64, tz: FixedOffset) -> Option<NaiveDate> {
    local_time(timestamp, tz).map(|t| t.date_naive())
}

/// A check-in inside a dense-indexed trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visit {
    pub poi: usize,
    pub slot: u8,
    pub timestamp: i64,
}

/// One user's check-ins on one calendar day, in time order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub user: usize,
    pub day: NaiveDate,
    pub events: Vec<Visit>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn first_timestamp(&self) -> i64 {
        self.events.first().map_or(i64::MIN, |e| e.timestamp)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub id: String,
    pub category: usize,
    pub latitude: f64,
    pub longitude: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub pois: usize,
    pub checkins: usize,
    pub density: f64,
}

/// Filtered corpus with dense vocabularies. The POI vocabulary is fixed at
/// build time and covers every split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub users: Vec<String>,
    pub pois: Vec<Poi>,
    pub categories: Vec<String>,
    /// Trajectories not yet assigned to a split.
    pub unassigned: Vec<Trajectory>,
    pub train: Vec<Trajectory>,
    pub val: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
    pub binning: DistanceBinning,
    /// Offset used for time slots and day keys, in seconds east of UTC.
    pub tz_seconds: i32,
    pub stats: DatasetStats,
}

impl Dataset {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_pois(&self) -> usize {
        self.pois.len()
    }

    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn dmax(&self) -> usize {
        self.binning.dmax
    }

    pub fn tz(&self) -> FixedOffset {
        FixedOffset::east_opt(self.tz_seconds).expect("validated offset")
    }

    pub fn all_trajectories(&self) -> impl Iterator<Item = &Trajectory> {
        self.unassigned
            .iter()
            .chain(&self.train)
            .chain(&self.val)
            .chain(&self.test)
    }

    /// Moves every trajectory (assigned or not) into train/val/test.
    pub fn apply_split(&mut self, ratios: SplitRatios) {
        let mut all: Vec<Trajectory> = Vec::new();
        all.append(&mut self.unassigned);
        all.append(&mut self.train);
        all.append(&mut self.val);
        all.append(&mut self.test);
        let s = chrono_split(&all, ratios);
        self.train = s.train;
        self.val = s.val;
        self.test = s.test;
    }

    /// Reconstructs raw check-ins, ordered by user, day and time.
    pub fn to_checkins(&self) -> Vec<CheckIn> {
        let mut trajs: Vec<&Trajectory> = self.all_trajectories().collect();
        trajs.sort_by_key(|t| (t.user, t.day, t.first_timestamp()));
        let mut out = Vec::new();
        for t in trajs {
            for e in &t.events {
                let p = &self.pois[e.poi];
                out.push(CheckIn {
                    user_id: self.users[t.user].clone(),
                    poi_id: p.id.clone(),
                    category_id: self.categories[p.category].clone(),
                    latitude: p.latitude,
                    longitude: p.longitude,
                    timestamp: e.timestamp,
                    time_slot: e.slot,
                });
            }
        }
        out
    }

    pub fn poi_index(&self) -> HashMap<&str, usize> {
        self.pois
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.as_str(), i))
            .collect()
    }

    pub fn categories_of_pois(&self) -> Vec<usize> {
        self.pois.iter().map(|p| p.category).collect()
    }
}
