mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mec_core::agents::GreedyDqn;
use mec_core::error::{HarnessError, SimError};
use mec_core::harness::{
    evaluate, evaluation_seeds, fmt_opt, load_checkpoints, sweep_servers, train, PolicySpec,
};
use mec_core::rng::derive_seed;

use config::{parse_assignment, CliConfig};

/// Multi-server MEC offloading experiments: training, baseline comparison and
/// server-count sweeps.
#[derive(Debug, Parser)]
#[command(name = "mec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one DQN agent per server and write train.csv plus checkpoints.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate the trained team against the greedy and random baselines.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Directory holding agent_<i>.ckpt files [default: <run>/checkpoints/final]
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Evaluate the baselines only.
        #[arg(long)]
        no_dqn: bool,
    },
    /// Measure lifetime and completion time for each server count.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML file with configuration keys; missing keys take reference defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Training episodes (train, and per sweep point) or evaluation episodes (compare).
    #[arg(long)]
    episodes: Option<usize>,
    /// Server count, or a comma-separated list for sweep.
    #[arg(long)]
    servers: Option<String>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long, value_enum)]
    fading: Option<Switch>,
    /// Output root.
    #[arg(long, env = "MEC_RUN_DIR", default_value = "run")]
    out: PathBuf,
    /// Run directory name under the output root [default: local timestamp]
    #[arg(long)]
    name: Option<String>,
    /// Override any configuration key, e.g. --set gamma=0.95 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_assignment)]
    sets: Vec<(String, toml::Value)>,
}

/// Failure classes, each with its own exit status.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Numeric(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Numeric(_) => 3,
            Failure::Runtime(_) => 1,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Numeric(e) | Failure::Runtime(e) => e,
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Divergence { .. } => Failure::Numeric(e.into()),
            HarnessError::InvalidServerCount { .. }
            | HarnessError::Sim(SimError::InvalidConfig(_))
            | HarnessError::Sim(SimError::DegenerateTopology { .. }) => Failure::Usage(e.into()),
            other => Failure::Runtime(other.into()),
        }
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn parse_servers(s: &str) -> anyhow::Result<Vec<usize>> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().with_context(|| format!("bad server count {p:?}")))
        .collect()
}

/// Applies the dedicated flags on top of the file and `--set` values.
fn effective_config(common: &Common, episodes_key: &str, sweep: bool) -> Result<CliConfig, Failure> {
    let mut overrides = common.sets.clone();
    let int = |v: u64| i64::try_from(v).map(toml::Value::Integer).map_err(|_| usage(anyhow!("{v} is out of range")));
    if let Some(seed) = common.seed {
        overrides.push(("seed".into(), int(seed)?));
    }
    if let Some(n) = common.episodes {
        overrides.push((episodes_key.into(), int(n as u64)?));
    }
    if let Some(k) = common.users {
        overrides.push(("num_users".into(), int(k as u64)?));
    }
    if let Some(f) = common.fading {
        overrides.push(("fading".into(), toml::Value::Boolean(matches!(f, Switch::On))));
    }
    if let Some(s) = &common.servers {
        let counts = parse_servers(s).map_err(usage)?;
        if sweep {
            let list = counts.iter().map(|&n| int(n as u64)).collect::<Result<Vec<_>, _>>()?;
            overrides.push(("sweep_servers".into(), toml::Value::Array(list)));
        } else if let [n] = counts[..] {
            overrides.push(("num_servers".into(), int(n as u64)?));
        } else {
            return Err(usage(anyhow!("--servers takes a single count here")));
        }
    }
    config::load(common.config.as_deref(), &overrides).map_err(usage)
}

/// Creates the run directory and records the effective configuration in it.
fn prepare_run(common: &Common, cfg: &CliConfig) -> Result<PathBuf, Failure> {
    let name = common.name.clone().unwrap_or_else(|| chrono::Local::now().format("%Y%m%d-%H%M%S").to_string());
    let dir = common.out.join(name);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display())).map_err(runtime)?;
    std::fs::write(dir.join("config.echo"), cfg.to_toml().map_err(runtime)?).map_err(runtime)?;
    Ok(dir)
}

fn cmd_train(common: &Common) -> Result<(), Failure> {
    let cfg = effective_config(common, "episodes", false)?;
    let dir = prepare_run(common, &cfg)?;
    let train_cfg = cfg.train().map_err(usage)?;
    let trained = train(&cfg.sim(), &train_cfg, cfg.seed, cfg.episodes, Some(&dir.join("checkpoints")))?;
    trained.summary.write_csv(dir.join("train.csv"))?;
    let n = trained.summary.records.len();
    if n > 0 {
        let from = n.saturating_sub(100);
        let lt = trained.summary.records[from..].iter().map(|r| r.metrics.lifetime as f64).sum::<f64>() / (n - from) as f64;
        println!(
            "trained {n} episodes; last {} episodes: lifetime {lt:.2}, learner return {:.3}",
            n - from,
            trained.summary.mean_learner_return_over(from..n).unwrap_or(f64::NAN)
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn load_team(dir: &Path, cfg: &CliConfig) -> Result<GreedyDqn, Failure> {
    let ckpts = load_checkpoints(dir).map_err(usage)?;
    let team = GreedyDqn::new(ckpts.into_iter().map(|c| c.network).collect()).map_err(usage)?;
    let slots = cfg.sim().max_pool_size();
    if team.num_agents() != cfg.num_servers || team.slots() != slots {
        return Err(usage(anyhow!(
            "checkpoints in {} hold {} agents with {} slots; the configuration needs {} with {}",
            dir.display(),
            team.num_agents(),
            team.slots(),
            cfg.num_servers,
            slots
        )));
    }
    Ok(team)
}

fn cmd_compare(common: &Common, checkpoint: Option<&Path>, no_dqn: bool) -> Result<(), Failure> {
    let cfg = effective_config(common, "eval_episodes", false)?;
    let name_dir = common.name.as_ref().map(|n| common.out.join(n));
    let mut policies = Vec::new();
    if !no_dqn {
        let dir = match (checkpoint, &name_dir) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(run)) => run.join("checkpoints").join("final"),
            (None, None) => return Err(usage(anyhow!("compare needs --checkpoint, --name of a trained run, or --no-dqn"))),
        };
        policies.push(PolicySpec::Dqn(load_team(&dir, &cfg)?));
    }
    policies.extend(PolicySpec::baselines());
    let dir = prepare_run(common, &cfg)?;
    let seeds = evaluation_seeds(cfg.seed, cfg.eval_episodes);
    let ev = evaluate(&policies, &cfg.sim(), &seeds)?;
    ev.write_csv(dir.join("eval.csv"))?;
    ev.write_stats_csv(dir.join("eval_summary.csv"))?;
    println!("{:<14} {:>14} {:>18}", "policy", "lifetime", "tct");
    for s in &ev.stats {
        println!(
            "{:<14} {:>7.2} ± {:<5.2} {:>9} ± {:<7}",
            s.policy,
            s.lifetime_mean,
            s.lifetime_std,
            fmt_opt(s.tct_mean.map(|x| (x * 1e4).round() / 1e4)),
            fmt_opt(s.tct_std.map(|x| (x * 1e4).round() / 1e4)),
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_sweep(common: &Common) -> Result<(), Failure> {
    let cfg = effective_config(common, "sweep_train_episodes", true)?;
    for &n in &cfg.sweep_servers {
        if n == 0 || n > cfg.num_users {
            return Err(HarnessError::InvalidServerCount { servers: n, users: cfg.num_users }.into());
        }
    }
    let dir = prepare_run(common, &cfg)?;
    let opts = cfg.sweep().map_err(usage)?;
    let seeds: Vec<u64> = (0..cfg.sweep_seeds as u64).map(|i| derive_seed(cfg.seed, i)).collect();
    let table = sweep_servers(&cfg.sim(), &cfg.sweep_servers, &seeds, &opts)?;
    table.write_csv(dir.join("sweep.csv"))?;
    println!("{:<8} {:>16} {:>20}", "servers", "lifetime", "tct");
    for p in table.points() {
        println!(
            "{:<8} {:>8.2} ± {:<5.2} {:>10} ± {:<7}",
            p.servers,
            p.lifetime_mean,
            p.lifetime_std,
            fmt_opt(p.tct_mean.map(|x| (x * 1e4).round() / 1e4)),
            fmt_opt(p.tct_std.map(|x| (x * 1e4).round() / 1e4)),
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train { common } => cmd_train(common),
        Command::Compare { common, checkpoint, no_dqn } => cmd_compare(common, checkpoint.as_deref(), *no_dqn),
        Command::Sweep { common } => cmd_sweep(common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
