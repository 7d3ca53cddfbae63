use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::csv_out::{fmt_f64, fmt_opt, write_csv};
use super::evaluate::{evaluate, evaluation_seeds, mean_std, PolicySpec};
use super::train::{train, TrainConfig};
use crate::config::SimConfig;
use crate::error::HarnessError;

/// Which policy a sweep point is measured with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepPolicy {
    /// Train a fresh team per (server count, seed), then evaluate it greedily.
    Dqn,
    TimeGreedy,
    EnergyGreedy,
    Random,
}

impl std::str::FromStr for SweepPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dqn" => Ok(Self::Dqn),
            "time_greedy" => Ok(Self::TimeGreedy),
            "energy_greedy" => Ok(Self::EnergyGreedy),
            "random" => Ok(Self::Random),
            other => Err(format!("unknown sweep policy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub policy: SweepPolicy,
    pub train: TrainConfig,
    pub train_episodes: usize,
    pub eval_episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub servers: usize,
    pub seed: u64,
    pub episodes: usize,
    pub lifetime_mean: f64,
    pub lifetime_std: f64,
    pub tct_mean: Option<f64>,
    pub tct_std: Option<f64>,
}

/// Per-server-count aggregate over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub servers: usize,
    pub lifetime_mean: f64,
    pub lifetime_std: f64,
    pub tct_mean: Option<f64>,
    pub tct_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Mean and spread across seeds of each seed's mean metric.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut counts: Vec<usize> = self.rows.iter().map(|r| r.servers).collect();
        counts.dedup();
        counts
            .into_iter()
            .map(|n| {
                let rows: Vec<&SweepRow> = self.rows.iter().filter(|r| r.servers == n).collect();
                let (lifetime_mean, lifetime_std) = mean_std(&rows.iter().map(|r| r.lifetime_mean).collect::<Vec<_>>());
                let tcts: Vec<f64> = rows.iter().filter_map(|r| r.tct_mean).collect();
                let (tct_mean, tct_std) = if tcts.is_empty() {
                    (None, None)
                } else {
                    let (m, s) = mean_std(&tcts);
                    (Some(m), Some(s))
                };
                SweepPoint { servers: n, lifetime_mean, lifetime_std, tct_mean, tct_std }
            })
            .collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), HarnessError> {
        let header: Vec<String> = ["servers", "seed", "episodes", "lifetime_mean", "lifetime_std", "tct_mean", "tct_std"]
            .map(String::from)
            .into();
        let rows = self.rows.iter().map(|r| {
            vec![
                r.servers.to_string(),
                r.seed.to_string(),
                r.episodes.to_string(),
                fmt_f64(r.lifetime_mean),
                fmt_f64(r.lifetime_std),
                fmt_opt(r.tct_mean),
                fmt_opt(r.tct_std),
            ]
        });
        write_csv(path, &header, rows)
    }
}

/// Measures lifetime and completion time as the number of servers varies.
///
/// Every (count, seed) pair is independent and runs in parallel; rows come out
/// count-major in the order given.
pub fn sweep_servers(
    template: &SimConfig,
    server_counts: &[usize],
    seeds: &[u64],
    opts: &SweepOptions,
) -> Result<SweepTable, HarnessError> {
    for &n in server_counts {
        if n == 0 || n > template.num_users {
            return Err(HarnessError::InvalidServerCount { servers: n, users: template.num_users });
        }
    }
    let jobs: Vec<(usize, u64)> = server_counts.iter().flat_map(|&n| seeds.iter().map(move |&s| (n, s))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(servers, seed)| {
            let cfg = SimConfig { num_servers: servers, ..template.clone() };
            let spec = match opts.policy {
                SweepPolicy::Dqn => {
                    let trained = train(&cfg, &opts.train, seed, opts.train_episodes, None)?;
                    PolicySpec::Dqn(trained.greedy_policy()?)
                }
                SweepPolicy::TimeGreedy => PolicySpec::TimeGreedy,
                SweepPolicy::EnergyGreedy => PolicySpec::EnergyGreedy,
                SweepPolicy::Random => PolicySpec::Random,
            };
            let ev = evaluate(&[spec], &cfg, &evaluation_seeds(seed, opts.eval_episodes))?;
            let st = &ev.stats[0];
            Ok(SweepRow {
                servers,
                seed,
                episodes: st.episodes,
                lifetime_mean: st.lifetime_mean,
                lifetime_std: st.lifetime_std,
                tct_mean: st.tct_mean,
                tct_std: st.tct_std,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(SweepTable { rows })
}
