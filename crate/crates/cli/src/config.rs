use std::path::Path;

use anyhow::{bail, Context};
use mec_core::agents::{DqnConfig, EpsilonSchedule, RewardTransform};
use mec_core::config::{dbm_to_watts, SimConfig};
use mec_core::harness::{SweepOptions, SweepPolicy, TrainConfig};
use serde::{Deserialize, Serialize};

/// Everything a run needs, as one flat table.
///
/// An empty file reproduces the reference setup. Keys mirror [`SimConfig`]
/// except the energy range (two scalars) and the transmit power (dBm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub num_servers: usize,
    pub num_users: usize,
    pub area_side: f64,
    pub interval_duration: f64,
    pub emax_min: f64,
    pub emax_max: f64,
    pub standby_energy: f64,
    pub arrival_rate: f64,
    pub task_size_bits: u64,
    pub user_cpu_hz: f64,
    pub server_cpu_hz: f64,
    pub user_cycles_per_bit: f64,
    pub server_cycles_per_bit: f64,
    pub kappa: f64,
    pub max_tx_power_dbm: f64,
    pub total_bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub pathloss_exponent: f64,
    pub ref_gain_db_at_1m: f64,
    pub fading: bool,
    pub max_intervals: u64,

    pub hidden_layers: Vec<usize>,
    pub gamma: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub target_network: bool,
    pub target_sync_updates: u64,
    pub pretrain_episodes: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: u64,
    pub learning_rate: f64,
    pub lr_halving_episodes: usize,
    pub updates_per_episode: usize,
    /// `log1p`, `identity` or `clip:<max>`.
    pub reward_transform: String,

    pub seed: u64,
    pub episodes: usize,
    /// 0 keeps only the final checkpoint.
    pub checkpoint_every: usize,
    pub eval_episodes: usize,
    pub sweep_servers: Vec<usize>,
    pub sweep_seeds: usize,
    /// `dqn`, `time_greedy`, `energy_greedy` or `random`.
    pub sweep_policy: String,
    pub sweep_train_episodes: usize,
}

impl Default for CliConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        let train = TrainConfig::default();
        Self {
            num_servers: sim.num_servers,
            num_users: sim.num_users,
            area_side: sim.area_side,
            interval_duration: sim.interval_duration,
            emax_min: sim.emax_range.0,
            emax_max: sim.emax_range.1,
            standby_energy: sim.standby_energy,
            arrival_rate: sim.arrival_rate,
            task_size_bits: sim.task_size_bits,
            user_cpu_hz: sim.user_cpu_hz,
            server_cpu_hz: sim.server_cpu_hz,
            user_cycles_per_bit: sim.user_cycles_per_bit,
            server_cycles_per_bit: sim.server_cycles_per_bit,
            kappa: sim.kappa,
            max_tx_power_dbm: 27.0,
            total_bandwidth_hz: sim.total_bandwidth_hz,
            noise_psd_dbm_hz: sim.noise_psd_dbm_hz,
            pathloss_exponent: sim.pathloss_exponent,
            ref_gain_db_at_1m: sim.ref_gain_db_at_1m,
            fading: sim.fading_enabled,
            max_intervals: sim.max_intervals,

            hidden_layers: train.dqn.hidden_layers.clone(),
            gamma: train.dqn.gamma,
            batch_size: train.dqn.batch_size,
            replay_capacity: train.dqn.replay_capacity,
            target_network: train.dqn.target_network,
            target_sync_updates: train.dqn.target_sync_updates,
            pretrain_episodes: train.epsilon.pretrain_episodes,
            epsilon_start: train.epsilon.start,
            epsilon_end: train.epsilon.end,
            epsilon_decay_steps: train.epsilon.decay_steps,
            learning_rate: train.initial_learning_rate,
            lr_halving_episodes: train.lr_halving_episodes,
            updates_per_episode: train.updates_per_episode,
            reward_transform: train.reward_transform.to_string(),

            seed: 1,
            episodes: 2000,
            checkpoint_every: 0,
            eval_episodes: 50,
            sweep_servers: vec![1, 2, 3],
            sweep_seeds: 10,
            sweep_policy: "dqn".into(),
            sweep_train_episodes: 2000,
        }
    }
}

/// Parses a `--set` value as a TOML literal, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Builds the effective configuration: file, then `key=value` overrides in order.
pub fn load(path: Option<&Path>, overrides: &[(String, toml::Value)]) -> anyhow::Result<CliConfig> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str::<toml::Table>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => toml::Table::new(),
    };
    for (k, v) in overrides {
        table.insert(k.clone(), v.clone());
    }
    let cfg: CliConfig = toml::Value::Table(table).try_into().context("invalid configuration")?;
    cfg.check()?;
    Ok(cfg)
}

/// Splits `key=value`.
pub fn parse_assignment(s: &str) -> Result<(String, toml::Value), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got {s:?}"))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(format!("empty key in {s:?}"));
    }
    Ok((k.to_string(), parse_value(v.trim())))
}

impl CliConfig {
    pub fn sim(&self) -> SimConfig {
        SimConfig {
            num_servers: self.num_servers,
            num_users: self.num_users,
            area_side: self.area_side,
            interval_duration: self.interval_duration,
            emax_range: (self.emax_min, self.emax_max),
            standby_energy: self.standby_energy,
            arrival_rate: self.arrival_rate,
            task_size_bits: self.task_size_bits,
            user_cpu_hz: self.user_cpu_hz,
            server_cpu_hz: self.server_cpu_hz,
            user_cycles_per_bit: self.user_cycles_per_bit,
            server_cycles_per_bit: self.server_cycles_per_bit,
            kappa: self.kappa,
            max_tx_power_watts: dbm_to_watts(self.max_tx_power_dbm),
            total_bandwidth_hz: self.total_bandwidth_hz,
            noise_psd_dbm_hz: self.noise_psd_dbm_hz,
            pathloss_exponent: self.pathloss_exponent,
            ref_gain_db_at_1m: self.ref_gain_db_at_1m,
            fading_enabled: self.fading,
            max_intervals: self.max_intervals,
        }
    }

    pub fn train(&self) -> anyhow::Result<TrainConfig> {
        let reward_transform: RewardTransform =
            self.reward_transform.parse().map_err(|e: String| anyhow::anyhow!("reward_transform: {e}"))?;
        Ok(TrainConfig {
            dqn: DqnConfig {
                hidden_layers: self.hidden_layers.clone(),
                gamma: self.gamma,
                batch_size: self.batch_size,
                replay_capacity: self.replay_capacity,
                target_network: self.target_network,
                target_sync_updates: self.target_sync_updates,
            },
            epsilon: EpsilonSchedule {
                pretrain_episodes: self.pretrain_episodes,
                decay_steps: self.epsilon_decay_steps,
                start: self.epsilon_start,
                end: self.epsilon_end,
            },
            initial_learning_rate: self.learning_rate,
            lr_halving_episodes: self.lr_halving_episodes,
            updates_per_episode: self.updates_per_episode,
            checkpoint_every: self.checkpoint_every,
            reward_transform,
        })
    }

    pub fn sweep(&self) -> anyhow::Result<SweepOptions> {
        let policy: SweepPolicy = self.sweep_policy.parse().map_err(|e: String| anyhow::anyhow!("sweep_policy: {e}"))?;
        Ok(SweepOptions {
            policy,
            train: self.train()?,
            train_episodes: self.sweep_train_episodes,
            eval_episodes: self.eval_episodes,
        })
    }

    /// Rejects values no run could use, before any work starts.
    pub fn check(&self) -> anyhow::Result<()> {
        self.sim().validate()?;
        self.train()?;
        self.sweep()?;
        if !(0.0..=1.0).contains(&self.gamma) {
            bail!("gamma must lie in [0, 1], got {}", self.gamma);
        }
        if self.batch_size == 0 || self.replay_capacity == 0 {
            bail!("batch_size and replay_capacity must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            bail!("learning_rate must be positive, got {}", self.learning_rate);
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            bail!("epsilon_start and epsilon_end must lie in [0, 1]");
        }
        if self.hidden_layers.iter().any(|&w| w == 0) {
            bail!("hidden layer widths must be positive");
        }
        if self.eval_episodes == 0 || self.sweep_seeds == 0 {
            bail!("eval_episodes and sweep_seeds must be positive");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        toml::to_string(self).context("serializing effective configuration")
    }
}
