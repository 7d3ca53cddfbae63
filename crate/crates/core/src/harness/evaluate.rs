use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::csv_out::{fmt_f64, fmt_opt, write_csv};
use crate::agents::{EnergyGreedy, GreedyDqn, OffloadPolicy, RandomPolicy, TimeGreedy};
use crate::config::SimConfig;
use crate::error::HarnessError;
use crate::rng::{derive_seed, splitmix64};
use crate::sim::{finalize_metrics, init_episode, Metrics};

/// Salt separating evaluation seeds from training-episode seeds.
const EVAL_SALT: u64 = 0x45_56_41_4C;

/// A policy that can be instantiated once per episode.
#[derive(Debug, Clone)]
pub enum PolicySpec {
    Dqn(GreedyDqn),
    TimeGreedy,
    EnergyGreedy,
    Random,
}

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::Dqn(_) => "dqn",
            PolicySpec::TimeGreedy => "time_greedy",
            PolicySpec::EnergyGreedy => "energy_greedy",
            PolicySpec::Random => "random",
        }
    }

    pub fn instantiate(&self) -> Box<dyn OffloadPolicy + Send> {
        match self {
            PolicySpec::Dqn(team) => Box::new(team.clone()),
            PolicySpec::TimeGreedy => Box::new(TimeGreedy),
            PolicySpec::EnergyGreedy => Box::new(EnergyGreedy),
            PolicySpec::Random => Box::new(RandomPolicy),
        }
    }

    pub fn baselines() -> Vec<PolicySpec> {
        vec![PolicySpec::TimeGreedy, PolicySpec::EnergyGreedy, PolicySpec::Random]
    }
}

/// Episode seeds for evaluation, disjoint from training's per-episode seeds.
pub fn evaluation_seeds(master: u64, count: usize) -> Vec<u64> {
    let base = splitmix64(master ^ EVAL_SALT);
    (0..count as u64).map(|i| derive_seed(base, i)).collect()
}

/// Runs one episode to termination with a fixed policy; no exploration.
pub fn run_episode(config: &SimConfig, seed: u64, policy: &mut dyn OffloadPolicy) -> Result<Metrics, HarnessError> {
    let mut env = init_episode(config, seed)?;
    let mut raw = env.observe_all();
    loop {
        let mut users = Vec::with_capacity(raw.len());
        for (s, pool) in raw.iter().enumerate() {
            let slot = policy.select(s, pool, env.exploration_rng())?;
            users.push(pool[slot].user);
        }
        let out = env.step(&users)?;
        if out.terminal {
            break;
        }
        raw = out.observations;
    }
    Ok(finalize_metrics(&env))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub policy: String,
    pub seed: u64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyStats {
    pub policy: String,
    pub episodes: usize,
    pub lifetime_mean: f64,
    pub lifetime_std: f64,
    /// Over episodes whose mean TCT is defined.
    pub tct_mean: Option<f64>,
    pub tct_std: Option<f64>,
    pub tct_episodes: usize,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Paired evaluation: every policy sees the same episode seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Policy-major, seeds in the given order.
    pub rows: Vec<EvalRow>,
    pub stats: Vec<PolicyStats>,
}

impl Evaluation {
    pub fn stats_for(&self, policy: &str) -> Option<&PolicyStats> {
        self.stats.iter().find(|s| s.policy == policy)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), HarnessError> {
        let header: Vec<String> =
            ["policy", "seed", "lifetime", "mean_tct", "num_completed", "censored"].map(String::from).into();
        let rows = self.rows.iter().map(|r| {
            vec![
                r.policy.clone(),
                r.seed.to_string(),
                r.metrics.lifetime.to_string(),
                fmt_opt(r.metrics.mean_tct),
                r.metrics.num_completed.to_string(),
                r.metrics.censored.to_string(),
            ]
        });
        write_csv(path, &header, rows)
    }

    pub fn write_stats_csv(&self, path: impl AsRef<Path>) -> Result<(), HarnessError> {
        let header: Vec<String> =
            ["policy", "episodes", "lifetime_mean", "lifetime_std", "tct_mean", "tct_std", "tct_episodes"]
                .map(String::from)
                .into();
        let rows = self.stats.iter().map(|s| {
            vec![
                s.policy.clone(),
                s.episodes.to_string(),
                fmt_f64(s.lifetime_mean),
                fmt_f64(s.lifetime_std),
                fmt_opt(s.tct_mean),
                fmt_opt(s.tct_std),
                s.tct_episodes.to_string(),
            ]
        });
        write_csv(path, &header, rows)
    }
}

pub fn summarize(policy: &str, metrics: &[Metrics]) -> PolicyStats {
    let lts: Vec<f64> = metrics.iter().map(|m| m.lifetime as f64).collect();
    let tcts: Vec<f64> = metrics.iter().filter_map(|m| m.mean_tct).collect();
    let (lifetime_mean, lifetime_std) = mean_std(&lts);
    let (tct_mean, tct_std) = if tcts.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(&tcts);
        (Some(m), Some(s))
    };
    PolicyStats {
        policy: policy.to_string(),
        episodes: metrics.len(),
        lifetime_mean,
        lifetime_std,
        tct_mean,
        tct_std,
        tct_episodes: tcts.len(),
    }
}

/// Runs every policy on every seed. Episodes run in parallel; output order is
/// fixed by the inputs.
pub fn evaluate(policies: &[PolicySpec], config: &SimConfig, seeds: &[u64]) -> Result<Evaluation, HarnessError> {
    config.validate()?;
    let jobs: Vec<(usize, u64)> = (0..policies.len()).flat_map(|p| seeds.iter().map(move |&s| (p, s))).collect();
    let results = jobs
        .par_iter()
        .map(|&(p, seed)| {
            let mut policy = policies[p].instantiate();
            run_episode(config, seed, policy.as_mut()).map(|m| EvalRow { policy: policies[p].name().into(), seed, metrics: m })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let stats = policies
        .iter()
        .enumerate()
        .map(|(p, spec)| {
            let ms: Vec<Metrics> = results[p * seeds.len()..(p + 1) * seeds.len()].iter().map(|r| r.metrics).collect();
            summarize(spec.name(), &ms)
        })
        .collect();
    Ok(Evaluation { rows: results, stats })
}
