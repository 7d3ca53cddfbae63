use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::csv_out::{fmt_f64, fmt_opt, write_csv};
use crate::agents::{
    AgentCheckpoint, DqnAgent, DqnConfig, EpsilonSchedule, Experience, GreedyDqn, Observation, RewardTransform,
};
use crate::config::SimConfig;
use crate::error::{AgentError, HarnessError, NeuralError};
use crate::rng::derive_seed;
use crate::sim::{finalize_metrics, init_episode, Metrics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dqn: DqnConfig,
    pub epsilon: EpsilonSchedule,
    pub initial_learning_rate: f64,
    /// The learning rate halves after every this many episodes.
    pub lr_halving_episodes: usize,
    /// Gradient steps per agent at the end of each episode.
    pub updates_per_episode: usize,
    /// Save agent checkpoints every this many episodes (0 disables periodic saves).
    pub checkpoint_every: usize,
    /// Applied to rewards before they enter replay. Logged returns stay raw.
    pub reward_transform: RewardTransform,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dqn: DqnConfig::default(),
            epsilon: EpsilonSchedule::default(),
            initial_learning_rate: 5e-3,
            lr_halving_episodes: 100,
            updates_per_episode: 8,
            checkpoint_every: 0,
            reward_transform: RewardTransform::default(),
        }
    }
}

impl TrainConfig {
    pub fn learning_rate(&self, episode: usize) -> f64 {
        let halvings = episode / self.lr_halving_episodes.max(1);
        self.initial_learning_rate * 0.5f64.powi(halvings.min(1074) as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub metrics: Metrics,
    /// Exploration rate at the first interval of the episode.
    pub epsilon: f64,
    pub learning_rate: f64,
    /// Undiscounted sum of each agent's environment rewards.
    pub returns: Vec<f64>,
    /// Sum of each agent's rewards after the learner's reward transform.
    pub learner_returns: Vec<f64>,
    /// Mean loss of each agent's end-of-episode updates; `None` if none ran.
    pub losses: Vec<Option<f64>>,
}

impl EpisodeRecord {
    pub fn mean_return(&self) -> f64 {
        self.returns.iter().sum::<f64>() / self.returns.len().max(1) as f64
    }

    pub fn mean_learner_return(&self) -> f64 {
        self.learner_returns.iter().sum::<f64>() / self.learner_returns.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunSummary {
    pub num_agents: usize,
    pub records: Vec<EpisodeRecord>,
}

impl RunSummary {
    /// Trailing moving average of `f` over `window` episodes, one value per record.
    pub fn moving_average(&self, window: usize, f: impl Fn(&EpisodeRecord) -> Option<f64>) -> Vec<Option<f64>> {
        let window = window.max(1);
        (0..self.records.len())
            .map(|i| {
                let lo = (i + 1).saturating_sub(window);
                let vals: Vec<f64> = self.records[lo..=i].iter().filter_map(&f).collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect()
    }

    pub fn mean_return_over(&self, range: std::ops::Range<usize>) -> Option<f64> {
        self.mean_over(range, EpisodeRecord::mean_return)
    }

    pub fn mean_learner_return_over(&self, range: std::ops::Range<usize>) -> Option<f64> {
        self.mean_over(range, EpisodeRecord::mean_learner_return)
    }

    fn mean_over(&self, range: std::ops::Range<usize>, f: fn(&EpisodeRecord) -> f64) -> Option<f64> {
        let recs = self.records.get(range)?;
        (!recs.is_empty()).then(|| recs.iter().map(f).sum::<f64>() / recs.len() as f64)
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h: Vec<String> =
            [
            "episode",
            "lifetime",
            "mean_tct",
            "num_completed",
            "censored",
            "epsilon",
            "learning_rate",
            "mean_return",
            "mean_learner_return",
            "ma100_lifetime",
            "ma100_mean_tct",
            "ma100_mean_return",
            "ma100_mean_learner_return",
        ]
        .map(String::from)
        .into();
        h.extend((0..self.num_agents).map(|i| format!("return_{i}")));
        h.extend((0..self.num_agents).map(|i| format!("learner_return_{i}")));
        h.extend((0..self.num_agents).map(|i| format!("loss_{i}")));
        h
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), HarnessError> {
        let ma_lt = self.moving_average(100, |r| Some(r.metrics.lifetime as f64));
        let ma_tct = self.moving_average(100, |r| r.metrics.mean_tct);
        let ma_ret = self.moving_average(100, |r| Some(r.mean_return()));
        let ma_lret = self.moving_average(100, |r| Some(r.mean_learner_return()));
        let rows = self.records.iter().enumerate().map(|(i, r)| {
            let mut row = vec![
                r.episode.to_string(),
                r.metrics.lifetime.to_string(),
                fmt_opt(r.metrics.mean_tct),
                r.metrics.num_completed.to_string(),
                r.metrics.censored.to_string(),
                fmt_f64(r.epsilon),
                fmt_f64(r.learning_rate),
                fmt_f64(r.mean_return()),
                fmt_f64(r.mean_learner_return()),
                fmt_opt(ma_lt[i]),
                fmt_opt(ma_tct[i]),
                fmt_opt(ma_ret[i]),
                fmt_opt(ma_lret[i]),
            ];
            row.extend(r.returns.iter().map(|&x| fmt_f64(x)));
            row.extend(r.learner_returns.iter().map(|&x| fmt_f64(x)));
            row.extend(r.losses.iter().map(|&x| fmt_opt(x)));
            row
        });
        write_csv(path, &self.csv_header(), rows)
    }
}

/// A trained team plus its exploration counters.
#[derive(Debug, Clone)]
pub struct Trained {
    pub summary: RunSummary,
    pub agents: Vec<DqnAgent>,
    pub episodes: u64,
    pub post_pretrain_steps: u64,
}

impl Trained {
    pub fn greedy_policy(&self) -> Result<GreedyDqn, AgentError> {
        GreedyDqn::new(self.agents.iter().map(|a| a.network.clone()).collect())
    }

    pub fn save_checkpoints(&self, dir: impl AsRef<Path>) -> Result<(), HarnessError> {
        save_team(dir.as_ref(), &self.agents, self.episodes, self.post_pretrain_steps)
    }
}

/// Seed of training episode `episode`; independent of every other episode.
pub fn episode_seed(master: u64, episode: usize) -> u64 {
    derive_seed(master, episode as u64)
}

fn agent_file(dir: &Path, agent: usize) -> std::path::PathBuf {
    dir.join(format!("agent_{agent}.ckpt"))
}

fn save_team(dir: &Path, agents: &[DqnAgent], episodes: u64, post_pretrain_steps: u64) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    for (i, agent) in agents.iter().enumerate() {
        let ckpt = AgentCheckpoint { episodes, post_pretrain_steps, network: agent.network.clone() };
        let file = BufWriter::new(File::create(agent_file(dir, i))?);
        ckpt.write(file).map_err(AgentError::from)?;
    }
    Ok(())
}

/// Loads `agent_0.ckpt`, `agent_1.ckpt`, ... until the first missing index.
pub fn load_checkpoints(dir: impl AsRef<Path>) -> Result<Vec<AgentCheckpoint>, HarnessError> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    loop {
        let path = agent_file(dir, out.len());
        if !path.exists() {
            break;
        }
        let file = std::io::BufReader::new(File::open(&path)?);
        out.push(AgentCheckpoint::read(file).map_err(AgentError::from)?);
    }
    if out.is_empty() {
        return Err(HarnessError::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no agent checkpoints in {}", dir.display()),
        )));
    }
    Ok(out)
}

fn divergence(episode: usize) -> impl Fn(NeuralError) -> HarnessError {
    move |e| match e {
        NeuralError::NonFiniteGradient => HarnessError::Divergence { episode },
        other => HarnessError::Agent(other.into()),
    }
}

/// Episodic multi-agent DQN training.
///
/// Every episode draws a fresh topology, runs until a user depletes its
/// battery (or the interval cap), stores one transition per agent per
/// interval and ends with `updates_per_episode` gradient steps per agent.
/// When `checkpoint_dir` is given, the final team goes to `final/` and periodic
/// saves to `episode_<n>/`.
pub fn train(
    config: &SimConfig,
    train_cfg: &TrainConfig,
    seed: u64,
    num_episodes: usize,
    checkpoint_dir: Option<&Path>,
) -> Result<Trained, HarnessError> {
    config.validate()?;
    let slots = config.max_pool_size();
    let input = slots * crate::agents::FEATURES_PER_USER;
    let mut agents = (0..config.num_servers)
        .map(|i| DqnAgent::new(input, slots, train_cfg.dqn.clone(), seed, i as u64))
        .collect::<Result<Vec<_>, _>>()
        .map_err(AgentError::from)?;
    let mut summary = RunSummary { num_agents: agents.len(), records: Vec::with_capacity(num_episodes) };
    let mut post_steps = 0u64;

    for episode in 0..num_episodes {
        let mut env = init_episode(config, episode_seed(seed, episode))?;
        let pretraining = episode < train_cfg.epsilon.pretrain_episodes;
        let first_epsilon = train_cfg.epsilon.value(episode, post_steps);
        let mut raw = env.observe_all();
        let mut obs: Vec<Observation> = raw.iter().map(|r| Observation::encode(r, slots)).collect();
        let mut returns = vec![0.0; agents.len()];
        let mut learner_returns = vec![0.0; agents.len()];
        loop {
            let epsilon = train_cfg.epsilon.value(episode, post_steps);
            let mut slots_taken = Vec::with_capacity(agents.len());
            let mut users = Vec::with_capacity(agents.len());
            for (s, agent) in agents.iter_mut().enumerate() {
                let slot = agent.act(&obs[s], epsilon).map_err(|e| match e {
                    AgentError::Neural(n) => divergence(episode)(n),
                    other => other.into(),
                })?;
                slots_taken.push(slot);
                users.push(raw[s][slot].user);
            }
            let out = env.step(&users)?;
            let next: Vec<Observation> = out.observations.iter().map(|r| Observation::encode(r, slots)).collect();
            for (s, agent) in agents.iter_mut().enumerate() {
                let reward = train_cfg.reward_transform.apply(out.rewards[s]);
                returns[s] += out.rewards[s];
                learner_returns[s] += reward;
                agent.remember(Experience {
                    observation: obs[s].features.clone(),
                    action: slots_taken[s],
                    reward,
                    next_observation: next[s].features.clone(),
                    terminal: out.terminal,
                    next_mask: next[s].mask.clone(),
                });
            }
            if !pretraining {
                post_steps += 1;
            }
            if out.terminal {
                break;
            }
            obs = next;
            raw = out.observations;
        }

        let lr = train_cfg.learning_rate(episode);
        let mut losses = Vec::with_capacity(agents.len());
        for agent in agents.iter_mut() {
            let mut total = 0.0;
            let mut n = 0;
            for _ in 0..train_cfg.updates_per_episode {
                if let Some(loss) = agent.update(lr).map_err(divergence(episode))? {
                    total += loss;
                    n += 1;
                }
            }
            losses.push((n > 0).then(|| total / n as f64));
        }

        summary.records.push(EpisodeRecord {
            episode,
            metrics: finalize_metrics(&env),
            epsilon: first_epsilon,
            learning_rate: lr,
            returns,
            learner_returns,
            losses,
        });

        let done = episode + 1;
        if let Some(dir) = checkpoint_dir {
            if train_cfg.checkpoint_every > 0 && done % train_cfg.checkpoint_every == 0 {
                save_team(&dir.join(format!("episode_{done}")), &agents, done as u64, post_steps)?;
            }
        }
    }

    let trained = Trained { summary, agents, episodes: num_episodes as u64, post_pretrain_steps: post_steps };
    if let Some(dir) = checkpoint_dir {
        trained.save_checkpoints(dir.join("final"))?;
    }
    Ok(trained)
}
