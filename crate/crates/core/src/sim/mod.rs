//! Discrete-time simulator of energy-constrained users offloading to edge servers.

mod arrivals;
pub mod audit;
mod env;
mod metrics;
pub mod physics;

pub use arrivals::sample_arrivals;
pub use audit::audit_step;
pub use env::{
    init_episode, EnvState, ObservedUser, ServerState, ServerStepRecord, StepOutcome, UserAction, UserState,
    UserStepRecord, TRACE_FORMAT_VERSION,
};
pub use metrics::{finalize_metrics, Metrics};

use serde::{Deserialize, Serialize};

pub type UserId = usize;
pub type ServerId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: u64,
    pub owner: UserId,
    pub size_bits: u64,
    pub arrival_interval: u64,
    pub completion_interval: Option<u64>,
    pub remaining_server_bits: u64,
}

impl Task {
    pub fn completion_time(&self) -> Option<u64> {
        self.completion_interval.map(|c| c - self.arrival_interval)
    }
}
