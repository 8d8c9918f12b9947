use std::collections::{BTreeMap, HashMap};

use chrono::{FixedOffset, NaiveDate};

use super::{day_key, CheckIn, Dataset, DatasetStats, DistanceBinning, IngestError, Poi, Trajectory, Visit};

#[derive(Clone, Copy, Debug)]
pub struct FilterConfig {
    pub min_poi_interactions: usize,
    pub min_user_trajectories: usize,
    pub min_traj_len: usize,
    pub tz: FixedOffset,
    pub binning: DistanceBinning,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_poi_interactions: 10,
            min_user_trajectories: 5,
            min_traj_len: 3,
            tz: FixedOffset::east_opt(0).expect("utc"),
            binning: DistanceBinning::default(),
        }
    }
}

/// Applies the POI / trajectory / user thresholds repeatedly until nothing
/// changes, then builds dense vocabularies from what survives. All surviving
/// trajectories land in `Dataset::unassigned`.
pub fn filter_dataset(checkins: &[CheckIn], cfg: &FilterConfig) -> Result<Dataset, IngestError> {
    if checkins.is_empty() {
        return Err(IngestError::EmptyData);
    }
    let days: Vec<NaiveDate> = checkins
        .iter()
        .map(|c| day_key(c.timestamp, cfg.tz).expect("timestamp validated at load"))
        .collect();

    let mut alive: Vec<usize> = (0..checkins.len()).collect();
    let groups = loop {
        let mut poi_counts: HashMap<&str, usize> = HashMap::new();
        for &i in &alive {
            *poi_counts.entry(checkins[i].poi_id.as_str()).or_default() += 1;
        }
        let mut by_user_day: BTreeMap<(&str, NaiveDate), Vec<usize>> = BTreeMap::new();
        for &i in &alive {
            let c = &checkins[i];
            if poi_counts[c.poi_id.as_str()] >= cfg.min_poi_interactions {
                by_user_day.entry((c.user_id.as_str(), days[i])).or_default().push(i);
            }
        }
        by_user_day.retain(|_, v| v.len() >= cfg.min_traj_len);
        let mut per_user: HashMap<&str, usize> = HashMap::new();
        for (u, _) in by_user_day.keys() {
            *per_user.entry(u).or_default() += 1;
        }
        by_user_day.retain(|(u, _), _| per_user[u] >= cfg.min_user_trajectories);

        let mut next: Vec<usize> = by_user_day.values().flatten().copied().collect();
        next.sort_unstable();
        // Each pass only removes events, so equal size means a fixed point.
        if next.len() == alive.len() {
            break by_user_day;
        }
        alive = next;
    };
    if groups.is_empty() {
        return Err(IngestError::EmptyAfterFiltering);
    }

    let mut user_ids: Vec<&str> = groups.keys().map(|(u, _)| *u).collect();
    user_ids.dedup();
    let mut poi_ids: Vec<&str> = alive.iter().map(|&i| checkins[i].poi_id.as_str()).collect();
    poi_ids.sort_unstable();
    poi_ids.dedup();
    let mut cat_ids: Vec<&str> = alive
        .iter()
        .map(|&i| checkins[i].category_id.as_str())
        .collect();
    cat_ids.sort_unstable();
    cat_ids.dedup();

    let user_ix: HashMap<&str, usize> = user_ids.iter().enumerate().map(|(i, u)| (*u, i)).collect();
    let poi_ix: HashMap<&str, usize> = poi_ids.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    let cat_ix: HashMap<&str, usize> = cat_ids.iter().enumerate().map(|(i, c)| (*c, i)).collect();

    // First surviving occurrence (in file order) fixes a POI's attributes.
    let mut pois: Vec<Option<Poi>> = vec![None; poi_ids.len()];
    for &i in &alive {
        let c = &checkins[i];
        let slot = &mut pois[poi_ix[c.poi_id.as_str()]];
        if slot.is_none() {
            *slot = Some(Poi {
                id: c.poi_id.clone(),
                category: cat_ix[c.category_id.as_str()],
                latitude: c.latitude,
                longitude: c.longitude,
            });
        }
    }
    let pois: Vec<Poi> = pois.into_iter().map(|p| p.expect("every POI seen")).collect();

    let mut trajectories = Vec::with_capacity(groups.len());
    for ((u, day), mut idx) in groups {
        // Stable on ties: file order breaks equal timestamps.
        idx.sort_by_key(|&i| (checkins[i].timestamp, i));
        trajectories.push(Trajectory {
            user: user_ix[u],
            day,
            events: idx
                .iter()
                .map(|&i| Visit {
                    poi: poi_ix[checkins[i].poi_id.as_str()],
                    slot: checkins[i].time_slot,
                    timestamp: checkins[i].timestamp,
                })
                .collect(),
        });
    }

    let stats = DatasetStats {
        users: user_ids.len(),
        pois: poi_ids.len(),
        checkins: alive.len(),
        density: alive.len() as f64 / (user_ids.len() * poi_ids.len()) as f64,
    };
    Ok(Dataset {
        users: user_ids.iter().map(|s| s.to_string()).collect(),
        pois,
        categories: cat_ids.iter().map(|s| s.to_string()).collect(),
        unassigned: trajectories,
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        binning: cfg.binning,
        tz_seconds: cfg.tz.local_minus_utc(),
        stats,
    })
}
