use serde::{Deserialize, Serialize};

/// Exploration rate: fully random for a number of pre-training episodes, then a
/// linear ramp down to `end` over `decay_steps` environment steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub pretrain_episodes: usize,
    pub decay_steps: u64,
    pub start: f64,
    pub end: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self { pretrain_episodes: 100, decay_steps: 10_000, start: 1.0, end: 0.01 }
    }
}

impl EpsilonSchedule {
    /// `post_pretrain_steps` counts environment steps taken after pre-training ended.
    pub fn value(&self, episode: usize, post_pretrain_steps: u64) -> f64 {
        if episode < self.pretrain_episodes {
            return self.start;
        }
        if post_pretrain_steps >= self.decay_steps {
            return self.end;
        }
        let frac = post_pretrain_steps as f64 / self.decay_steps as f64;
        (self.start + (self.end - self.start) * frac).clamp(self.end, self.start)
    }
}
