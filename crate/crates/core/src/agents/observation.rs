use serde::{Deserialize, Serialize};

use crate::sim::ObservedUser;

pub const FEATURES_PER_USER: usize = 4;

const QUEUE_SCALE: f64 = 100.0;
const ENERGY_SCALE: f64 = 1.0;
const WAIT_SCALE: f64 = 100.0;
const SNR_DB_SCALE: f64 = 100.0;

/// Normalized, fixed-width view of one server's pool.
///
/// Slot `i` holds the i-th pool user in ascending id order; slots past the pool
/// are zero and masked out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub features: Vec<f64>,
    pub mask: Vec<bool>,
}

impl Observation {
    pub fn encode(raw: &[ObservedUser], slots: usize) -> Self {
        assert!(raw.len() <= slots, "pool of {} does not fit {} slots", raw.len(), slots);
        let mut features = vec![0.0; slots * FEATURES_PER_USER];
        for (slot, user) in raw.iter().enumerate() {
            let f = &mut features[slot * FEATURES_PER_USER..(slot + 1) * FEATURES_PER_USER];
            f[0] = unit(user.queue_length as f64 / QUEUE_SCALE);
            f[1] = unit(user.energy / ENERGY_SCALE);
            f[2] = unit(user.mean_wait / WAIT_SCALE);
            f[3] = unit(user.uplink_snr_db / SNR_DB_SCALE);
        }
        let mask = (0..slots).map(|s| s < raw.len()).collect();
        Self { features, mask }
    }

    pub fn slots(&self) -> usize {
        self.mask.len()
    }
}

fn unit(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}
