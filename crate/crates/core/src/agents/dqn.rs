use std::io::{Read, Write};

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::baselines::random_select;
use super::observation::Observation;
use super::replay::{Experience, ReplayBuffer};
use crate::error::{AgentError, NeuralError};
use crate::neural::{apply_update, Mlp, OptimizerState};
use crate::rng::{stream_with_index, Stream};

const AGENT_MAGIC: &[u8; 8] = b"MECDQN\0\0";
const AGENT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnConfig {
    pub hidden_layers: Vec<usize>,
    pub gamma: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Bootstrap from a periodically synced copy instead of the live network.
    pub target_network: bool,
    /// Updates between target syncs when `target_network` is set.
    pub target_sync_updates: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![200, 200],
            gamma: 0.9,
            batch_size: 64,
            replay_capacity: 100_000,
            target_network: false,
            target_sync_updates: 10,
        }
    }
}

/// One server's learner.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub network: Mlp,
    optimizer: OptimizerState,
    target: Option<Mlp>,
    pub replay: ReplayBuffer,
    pub config: DqnConfig,
    rng: ChaCha8Rng,
    updates: u64,
}

/// Masked argmax; ties go to the lowest index.
pub fn masked_argmax(values: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (&v, &ok)) in values.iter().zip(mask).enumerate() {
        if ok && best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Epsilon-greedy choice over the valid slots of `mask`.
pub fn select_action<R: Rng + ?Sized>(q: &[f64], mask: &[bool], epsilon: f64, rng: &mut R) -> Result<usize, AgentError> {
    if !mask.iter().any(|&m| m) {
        return Err(AgentError::EmptyMask);
    }
    if rng.gen::<f64>() < epsilon {
        random_select(mask, rng)
    } else {
        masked_argmax(q, mask).ok_or(AgentError::EmptyMask)
    }
}

/// `r + gamma * max_a' Q(s', a')` over valid next actions, or `r` at terminal transitions.
pub fn bellman_targets(batch: &[&Experience], network: &Mlp, gamma: f64) -> Result<Vec<f64>, NeuralError> {
    if batch.is_empty() {
        return Ok(Vec::new());
    }
    let width = network.input_dim();
    let mut next = Array2::zeros((batch.len(), width));
    for (row, exp) in batch.iter().enumerate() {
        if exp.next_observation.len() != width {
            return Err(NeuralError::ShapeMismatch(format!(
                "next observation width {} vs {width}",
                exp.next_observation.len()
            )));
        }
        next.row_mut(row).iter_mut().zip(&exp.next_observation).for_each(|(d, &s)| *d = s);
    }
    let q_next = network.forward(next.view())?;
    Ok(batch
        .iter()
        .enumerate()
        .map(|(row, exp)| {
            if exp.terminal || gamma == 0.0 {
                return exp.reward;
            }
            let q = q_next.row(row);
            match masked_argmax(q.as_slice().expect("row-major"), &exp.next_mask) {
                Some(a) => exp.reward + gamma * q[a],
                None => exp.reward,
            }
        })
        .collect())
}

impl DqnAgent {
    pub fn new(input_dim: usize, actions: usize, config: DqnConfig, seed: u64, index: u64) -> Result<Self, NeuralError> {
        let mut dims = vec![input_dim];
        dims.extend(&config.hidden_layers);
        dims.push(actions);
        let network = Mlp::new(&dims, crate::rng::derive_seed(seed, index))?;
        let optimizer = OptimizerState::new(&network, 0.0);
        let target = config.target_network.then(|| network.clone());
        Ok(Self {
            replay: ReplayBuffer::new(config.replay_capacity),
            rng: stream_with_index(seed, Stream::AgentExploration, index),
            network,
            optimizer,
            target,
            config,
            updates: 0,
        })
    }

    pub fn q_values(&self, observation: &[f64]) -> Result<Vec<f64>, NeuralError> {
        self.network.forward_one(observation)
    }

    /// Epsilon-greedy action using the agent's own exploration stream.
    pub fn act(&mut self, obs: &Observation, epsilon: f64) -> Result<usize, AgentError> {
        let q = self.q_values(&obs.features)?;
        select_action(&q, &obs.mask, epsilon, &mut self.rng)
    }

    pub fn remember(&mut self, exp: Experience) {
        self.replay.push(exp);
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// One gradient step on a uniformly sampled minibatch; `None` while the
    /// buffer holds fewer than a batch of transitions.
    pub fn update(&mut self, learning_rate: f64) -> Result<Option<f64>, NeuralError> {
        let batch_size = self.config.batch_size;
        if self.replay.len() < batch_size {
            return Ok(None);
        }
        let batch = self.replay.sample(batch_size, &mut self.rng);
        let bootstrap = self.target.as_ref().unwrap_or(&self.network);
        let targets = bellman_targets(&batch, bootstrap, self.config.gamma)?;
        let width = self.network.input_dim();
        let mut inputs = Array2::zeros((batch_size, width));
        for (row, exp) in batch.iter().enumerate() {
            inputs.row_mut(row).iter_mut().zip(&exp.observation).for_each(|(d, &s)| *d = s);
        }
        let actions: Vec<usize> = batch.iter().map(|e| e.action).collect();
        let (grads, loss) = self.network.backward(inputs.view(), &actions, &targets)?;
        if !loss.is_finite() {
            return Err(NeuralError::NonFiniteGradient);
        }
        apply_update(&mut self.network, &mut self.optimizer, &grads, learning_rate)?;
        self.updates += 1;
        if let Some(target) = self.target.as_mut() {
            if self.updates % self.config.target_sync_updates.max(1) == 0 {
                *target = self.network.clone();
            }
        }
        Ok(Some(loss))
    }
}

/// What an agent checkpoint stores: the network and the exploration counters.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentCheckpoint {
    pub episodes: u64,
    pub post_pretrain_steps: u64,
    pub network: Mlp,
}

impl AgentCheckpoint {
    pub fn write<W: Write>(&self, mut out: W) -> Result<(), NeuralError> {
        out.write_all(AGENT_MAGIC)?;
        out.write_all(&AGENT_VERSION.to_le_bytes())?;
        out.write_all(&self.episodes.to_le_bytes())?;
        out.write_all(&self.post_pretrain_steps.to_le_bytes())?;
        self.network.write_checkpoint(out)
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self, NeuralError> {
        let bad = |m: &str| NeuralError::Checkpoint(m.to_string());
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic).map_err(|_| bad("truncated agent header"))?;
        if &magic != AGENT_MAGIC {
            return Err(bad("not an agent checkpoint"));
        }
        let mut v = [0u8; 4];
        input.read_exact(&mut v).map_err(|_| bad("truncated agent header"))?;
        if u32::from_le_bytes(v) != AGENT_VERSION {
            return Err(bad("unsupported agent checkpoint version"));
        }
        let mut buf = [0u8; 8];
        input.read_exact(&mut buf).map_err(|_| bad("truncated agent header"))?;
        let episodes = u64::from_le_bytes(buf);
        input.read_exact(&mut buf).map_err(|_| bad("truncated agent header"))?;
        let post_pretrain_steps = u64::from_le_bytes(buf);
        Ok(Self { episodes, post_pretrain_steps, network: Mlp::read_checkpoint(input)? })
    }
}
