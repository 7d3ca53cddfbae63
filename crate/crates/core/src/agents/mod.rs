//! Per-server decision rules: the DQN learner and the heuristic baselines.

mod baselines;
mod dqn;
mod observation;
mod replay;
mod reward;
mod schedule;

pub use baselines::{energy_greedy_select, random_select, time_greedy_select};
pub use dqn::{bellman_targets, masked_argmax, select_action, AgentCheckpoint, DqnAgent, DqnConfig};
pub use observation::{Observation, FEATURES_PER_USER};
pub use replay::{Experience, ReplayBuffer};
pub use reward::RewardTransform;
pub use schedule::EpsilonSchedule;

use rand_chacha::ChaCha8Rng;

use crate::error::AgentError;
use crate::neural::Mlp;
use crate::sim::{ObservedUser, ServerId};

/// Chooses which pool slot offloads for a server in the current interval.
pub trait OffloadPolicy {
    fn name(&self) -> &str;

    /// `raw` lists the server's pool in ascending user id; the result indexes into it.
    fn select(&mut self, server: ServerId, raw: &[ObservedUser], rng: &mut ChaCha8Rng) -> Result<usize, AgentError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TimeGreedy;

#[derive(Debug, Clone, Copy, Default)]
pub struct EnergyGreedy;

#[derive(Debug, Clone, Copy, Default)]
pub struct RandomPolicy;

impl OffloadPolicy for TimeGreedy {
    fn name(&self) -> &str {
        "time_greedy"
    }

    fn select(&mut self, _: ServerId, raw: &[ObservedUser], _: &mut ChaCha8Rng) -> Result<usize, AgentError> {
        if raw.is_empty() {
            return Err(AgentError::EmptyMask);
        }
        Ok(time_greedy_select(raw))
    }
}

impl OffloadPolicy for EnergyGreedy {
    fn name(&self) -> &str {
        "energy_greedy"
    }

    fn select(&mut self, _: ServerId, raw: &[ObservedUser], _: &mut ChaCha8Rng) -> Result<usize, AgentError> {
        if raw.is_empty() {
            return Err(AgentError::EmptyMask);
        }
        Ok(energy_greedy_select(raw))
    }
}

impl OffloadPolicy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn select(&mut self, _: ServerId, raw: &[ObservedUser], rng: &mut ChaCha8Rng) -> Result<usize, AgentError> {
        random_select(&vec![true; raw.len()], rng)
    }
}

/// Frozen Q-networks, one per server, acting greedily.
#[derive(Debug, Clone)]
pub struct GreedyDqn {
    networks: Vec<Mlp>,
    slots: usize,
}

impl GreedyDqn {
    pub fn new(networks: Vec<Mlp>) -> Result<Self, AgentError> {
        let first = networks.first().ok_or(AgentError::EmptyMask)?;
        let slots = first.output_dim();
        if networks.iter().any(|n| n.output_dim() != slots || n.input_dim() != slots * FEATURES_PER_USER) {
            return Err(crate::error::NeuralError::ShapeMismatch("agents disagree on slot count".into()).into());
        }
        Ok(Self { networks, slots })
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn num_agents(&self) -> usize {
        self.networks.len()
    }
}

impl OffloadPolicy for GreedyDqn {
    fn name(&self) -> &str {
        "dqn"
    }

    fn select(&mut self, server: ServerId, raw: &[ObservedUser], _: &mut ChaCha8Rng) -> Result<usize, AgentError> {
        if raw.len() > self.slots {
            return Err(crate::error::NeuralError::ShapeMismatch(format!(
                "pool of {} exceeds {} slots",
                raw.len(),
                self.slots
            ))
            .into());
        }
        let net = self
            .networks
            .get(server)
            .ok_or_else(|| crate::error::NeuralError::ShapeMismatch(format!("no network for server {server}")))?;
        let obs = Observation::encode(raw, self.slots);
        let q = net.forward_one(&obs.features)?;
        masked_argmax(&q, &obs.mask).ok_or(AgentError::EmptyMask)
    }
}
