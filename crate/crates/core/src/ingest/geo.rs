use serde::{Deserialize, Serialize};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Great-circle distance in kilometres.
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = (lat2 - lat1).to_radians();
    let dlambda = (lon2 - lon1).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

/// Fixed-width distance intervals; the last bin absorbs everything beyond.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceBinning {
    pub width_km: f64,
    pub dmax: usize,
}

impl Default for DistanceBinning {
    fn default() -> Self {
        Self {
            width_km: 1.0,
            dmax: 20,
        }
    }
}

impl DistanceBinning {
    pub fn bin(&self, km: f64) -> usize {
        distance_bin(km, self.width_km, self.dmax)
    }
}

pub fn distance_bin(km: f64, bin_width_km: f64, dmax: usize) -> usize {
    debug_assert!(dmax >= 1);
    let b = (km.max(0.0) / bin_width_km).floor();
    if b >= (dmax - 1) as f64 {
        dmax - 1
    } else {
        b as usize
    }
}
