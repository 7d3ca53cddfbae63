use serde::{Deserialize, Serialize};

use super::EnvState;

/// End-of-episode performance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Last interval that started with every user above zero energy.
    pub lifetime: u64,
    /// Mean of completion minus arrival interval over tasks finished strictly before
    /// `lifetime`; `None` when no task qualifies.
    pub mean_tct: Option<f64>,
    pub num_completed: usize,
    /// The episode stopped at the interval cap rather than on energy depletion.
    pub censored: bool,
}

pub fn finalize_metrics(env: &EnvState) -> Metrics {
    // every executed interval started with all energies positive
    let lifetime = env.t - 1;
    let censored = env.users.iter().all(|u| u.energy > 0.0);
    let (sum, count) = env
        .completed_tasks
        .iter()
        .filter_map(|task| task.completion_interval.filter(|&c| c < lifetime).map(|c| c - task.arrival_interval))
        .fold((0u64, 0usize), |(s, n), d| (s + d, n + 1));
    Metrics {
        lifetime,
        mean_tct: (count > 0).then(|| sum as f64 / count as f64),
        num_completed: count,
        censored,
    }
}
