//! End-to-end acceptance checks, one test per criterion.
//!
//! Each test writes a single `ACCEPTANCE <id> PASS|FAIL ...` line straight to
//! the stderr handle (libtest does not capture that) and then asserts.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use mec_core::agents::{random_select, DqnAgent, DqnConfig, Experience};
use mec_core::config::{dbm_to_watts, SimConfig};
use mec_core::error::SimError;
use mec_core::harness::{
    evaluate, evaluation_seeds, sweep_servers, train, PolicySpec, SweepOptions, SweepPolicy, TrainConfig, Trained,
};
use mec_core::neural::Mlp;
use mec_core::rng::derive_seed;
use mec_core::sim::physics::{local_compute_budget, max_feasible_power, offload_budget, offload_energy, path_gain, snr, uplink_rate};
use mec_core::sim::{audit_step, finalize_metrics, init_episode, EnvState, Position, UserAction};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "ACCEPTANCE {id} {verdict} {name}: {detail}");
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

// ---- 1: formula oracles ----

#[test]
fn c1_formula_oracles() {
    let cfg = SimConfig::default();
    let n0 = cfg.noise_psd_watts_hz();
    let mut fails = Vec::new();
    let mut check = |what: &str, ok: bool| {
        if !ok {
            fails.push(what.to_string());
        }
    };

    check("P_max(0.5 J, 0.1 s) = 5 W", max_feasible_power(0.5, 0.1) == 5.0);
    check("B_local(5 W) = 200000", local_compute_budget(5.0, 1e9, 1e-27, 0.1, 500.0) == 200_000);
    check("B_local(1e-5 W) = 4308", local_compute_budget(1e-5, 1e9, 1e-27, 0.1, 500.0) == 4308);
    let g = path_gain(5.0, &cfg);
    check("gain(5 m) = 8e-6", rel(g, 8e-6) < 1e-12);
    check("SNR ~ 5.02e7", rel(snr(20e6, g, 0.5, n0), 5.02e7) < 1e-3);
    let rate = uplink_rate(20e6, g, 0.5, n0);
    check("rate ~ 5.12e8 within 0.1%", rel(rate, 5.12e8) < 1e-3);
    check("B_offload ~ 51.16e6 within 0.1%", rel(offload_budget(rate, 0.1) as f64, 51_160_000.0) < 1e-3);
    let e_off = offload_energy(0.5, 80_000, rate);
    check("E_offload ~ 7.82e-5 within 0.1%", rel(e_off, 7.82e-5) < 1e-3);
    check("reward ~ 1.023", rel(80_000.0 / e_off * 1e-9, 1.023) < 1e-3);

    // The same numbers through the environment: one server, one offloading user at 5 m.
    let link = SimConfig {
        num_servers: 1,
        num_users: 2,
        fading_enabled: false,
        arrival_rate: 0.0,
        total_bandwidth_hz: 20e6,
        max_tx_power_watts: 0.5,
        ..Default::default()
    };
    let mut env = EnvState::with_topology(
        link.clone(),
        0,
        vec![Position { x: 0.0, y: 0.0 }],
        vec![Position { x: 5.0, y: 0.0 }, Position { x: 0.0, y: 1.0 }],
        vec![0.5, 1e-6],
    )
    .unwrap();
    for i in 0..10 {
        env.users[0].queue.push_back(mec_core::sim::Task {
            id: 1000 + i,
            owner: 0,
            size_bits: 8000,
            arrival_interval: 1,
            completion_interval: None,
            remaining_server_bits: 8000,
        });
        env.users[0].tasks_arrived += 1;
    }
    env.users[1].queue.push_back(mec_core::sim::Task {
        id: 2000,
        owner: 1,
        size_bits: 8000,
        arrival_interval: 1,
        completion_interval: None,
        remaining_server_bits: 8000,
    });
    env.users[1].tasks_arrived += 1;
    let out = env.step(&[0]).unwrap();
    check("env offloads 80000 bits", out.servers[0].offloaded_bits == 80_000);
    check("env E_offload ~ 7.82e-5", rel(out.servers[0].offload_energy, 7.82e-5) < 1e-3);
    check("env reward ~ 1.023", rel(out.rewards[0], 1.023) < 1e-3);
    // 1e-6 J over 0.1 s is the 1e-5 W case: 4308 bits cannot hold an 8000-bit task.
    check("power-limited user idles", out.users[1].action == UserAction::Idle && out.users[1].bits == 0);
    check("idle user pays stand-by only", rel(1e-6 - env.users[1].energy, link.standby_energy) < 1e-9);

    // Stand-by only: K = N = 1, no arrivals, 3.5e-7 J, 1e-7 J per interval.
    let quiet = SimConfig { num_servers: 1, num_users: 1, fading_enabled: false, arrival_rate: 0.0, emax_range: (2e-7, 1.0), ..Default::default() };
    let mut env = EnvState::with_topology(quiet, 0, vec![Position { x: 0.0, y: 0.0 }], vec![Position { x: 5.0, y: 0.0 }], vec![3.5e-7]).unwrap();
    let mut energies = Vec::new();
    while !env.crashed {
        env.step(&[0]).unwrap();
        energies.push(env.users[0].energy);
    }
    let want = [2.5e-7, 1.5e-7, 0.5e-7, -0.5e-7];
    check("stand-by trajectory", energies.len() == 4 && energies.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-18));
    check("LT = 4", finalize_metrics(&env).lifetime == 4);
    check("27 dBm ~ 0.501 W", rel(dbm_to_watts(27.0), 0.501187) < 1e-5);

    report(1, "formula oracles", fails.is_empty(), &if fails.is_empty() { "all hand values reproduced".into() } else { format!("mismatched: {fails:?}") });
}

// ---- 2: simulator invariants under random configs ----

fn random_config(rng: &mut ChaCha8Rng) -> SimConfig {
    let users = rng.gen_range(1..=8);
    let lo = 10f64.powf(rng.gen_range(-4.0..-1.3));
    SimConfig {
        num_users: users,
        num_servers: rng.gen_range(1..=users),
        area_side: rng.gen_range(2.0..40.0),
        interval_duration: rng.gen_range(0.02..0.5),
        arrival_rate: rng.gen_range(0.0..25.0),
        fading_enabled: rng.gen_bool(0.5),
        emax_range: (lo, lo + rng.gen_range(0.01..2.0)),
        standby_energy: 10f64.powf(rng.gen_range(-8.0..-5.0)),
        pathloss_exponent: rng.gen_range(2.0..4.0),
        max_intervals: 500,
        ..Default::default()
    }
}

#[test]
fn c2_simulator_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut episodes, mut intervals, mut violations, mut degenerate) = (0u64, 0u64, Vec::new(), 0u64);
    while episodes < 1000 {
        let cfg = random_config(&mut rng);
        let mut env = match init_episode(&cfg, rng.gen()) {
            Ok(env) => env,
            Err(SimError::DegenerateTopology { .. }) => {
                degenerate += 1;
                continue;
            }
            Err(e) => panic!("init failed: {e}"),
        };
        while !env.crashed {
            let actions: Vec<usize> = (0..env.servers.len())
                .map(|s| {
                    let pool = env.servers[s].pool.clone();
                    pool[random_select(&vec![true; pool.len()], env.exploration_rng()).unwrap()]
                })
                .collect();
            // The completed list only grows and the audit reads it from `after`.
            let done = std::mem::take(&mut env.completed_tasks);
            let before = env.clone();
            env.completed_tasks = done;
            let out = env.step(&actions).unwrap();
            intervals += 1;
            for v in audit_step(&before, &actions, &out, &env) {
                if violations.len() < 5 {
                    violations.push(format!("episode {episodes} t={}: {v}", before.t));
                }
            }
        }
        let m = finalize_metrics(&env);
        if m.lifetime != env.t - 1 || m.mean_tct.is_some_and(|x| x < 0.0) {
            violations.push(format!("episode {episodes}: bad metrics {m:?}"));
        }
        if env.step(&vec![env.servers[0].pool[0]; env.servers.len()]).is_ok() {
            violations.push(format!("episode {episodes}: stepped after crash"));
        }
        episodes += 1;
    }
    report(
        2,
        "simulator invariants",
        violations.is_empty(),
        &format!("{episodes} episodes, {intervals} audited intervals, {degenerate} degenerate draws skipped, violations {violations:?}"),
    );
}

// ---- 3: gradient check ----

#[test]
fn c3_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let h = 1e-5;
    let mut worst = 0.0f64;
    let nets = 12;
    for k in 0..nets {
        let depth = rng.gen_range(1..=3);
        let mut dims = vec![rng.gen_range(1..=6)];
        dims.extend((0..depth).map(|_| rng.gen_range(2..=8)));
        dims.push(rng.gen_range(1..=4));
        let mut net = Mlp::new(&dims, 100 + k).unwrap();
        let batch = rng.gen_range(1..=5);
        let inputs = Array2::from_shape_fn((batch, dims[0]), |_| rng.gen_range(-1.5..1.5));
        let actions: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..*dims.last().unwrap())).collect();
        let targets: Vec<f64> = (0..batch).map(|_| rng.gen_range(-2.0..2.0)).collect();

        let (grads, _) = net.backward(inputs.view(), &actions, &targets).unwrap();
        let analytic = grads.flat();
        let base = net.flat_params();
        let loss_at = |net: &mut Mlp, p: &[f64]| {
            net.set_flat_params(p).unwrap();
            net.backward(inputs.view(), &actions, &targets).unwrap().1
        };
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] = base[i] + h;
            let up = loss_at(&mut net, &p);
            p[i] = base[i] - h;
            let down = loss_at(&mut net, &p);
            let numeric = (up - down) / (2.0 * h);
            let err = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    report(3, "gradient check", worst <= 1e-4, &format!("{nets} random networks, worst relative error {worst:.2e} (limit 1e-4)"));
}

// ---- 4: toy MDP ----

/// Two states, two actions (stay, switch), deterministic transitions.
const TOY_REWARD: [[f64; 2]; 2] = [[0.0, 0.1], [0.2, 0.0]];
const TOY_GAMMA: f64 = 0.9;

fn toy_next(s: usize, a: usize) -> usize {
    if a == 0 {
        s
    } else {
        1 - s
    }
}

fn toy_q_star() -> [[f64; 2]; 2] {
    let mut q = [[0.0f64; 2]; 2];
    for _ in 0..2000 {
        let v = [q[0][0].max(q[0][1]), q[1][0].max(q[1][1])];
        for s in 0..2 {
            for a in 0..2 {
                q[s][a] = TOY_REWARD[s][a] + TOY_GAMMA * v[toy_next(s, a)];
            }
        }
    }
    q
}

#[test]
fn c4_toy_mdp_convergence() {
    let q_star = toy_q_star();
    let one_hot = |s: usize| if s == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
    let cfg = DqnConfig { hidden_layers: vec![32], gamma: TOY_GAMMA, batch_size: 32, replay_capacity: 1000, ..Default::default() };
    let mut agent = DqnAgent::new(2, 2, cfg, 4, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut s = 0;
    for _ in 0..400 {
        let a = rng.gen_range(0..2);
        let next = toy_next(s, a);
        agent.remember(Experience {
            observation: one_hot(s),
            action: a,
            reward: TOY_REWARD[s][a],
            next_observation: one_hot(next),
            terminal: false,
            next_mask: vec![true, true],
        });
        s = next;
    }
    let gap = |agent: &DqnAgent| {
        (0..2)
            .flat_map(|s| {
                let q = agent.q_values(&one_hot(s)).unwrap();
                (0..2).map(move |a| (q[a] - q_star[s][a]).abs())
            })
            .fold(0.0f64, f64::max)
    };
    let mut reached = None;
    let mut last = f64::INFINITY;
    for n in 1..=5000u32 {
        agent.update(1e-3).unwrap();
        if n % 50 == 0 {
            last = gap(&agent);
            if last < 0.05 && reached.is_none() {
                reached = Some(n);
            }
        }
    }
    let final_gap = gap(&agent);
    let pass = reached.is_some() && final_gap < 0.05;
    report(
        4,
        "toy MDP convergence",
        pass,
        &format!("Q* = {q_star:?}; max|Q - Q*| < 0.05 first at update {reached:?}, {final_gap:.4} after 5000 (last probe {last:.4})"),
    );
}

// ---- 5 and 6 share one reference training run ----

const REFERENCE_SEED: u64 = 1;

fn reference_run() -> &'static Trained {
    static RUN: OnceLock<Trained> = OnceLock::new();
    RUN.get_or_init(|| train(&SimConfig::default(), &TrainConfig::default(), REFERENCE_SEED, 2000, None).expect("training"))
}

#[test]
fn c5_training_convergence() {
    let run = reference_run();
    let s = &run.summary;
    let n = s.records.len();
    let first = s.mean_learner_return_over(0..100).unwrap();
    let last = s.mean_learner_return_over(n - 100..n).unwrap();
    let ratio = last / first;
    let raw = s.mean_return_over(n - 100..n).unwrap() / s.mean_return_over(0..100).unwrap();
    let lt = |r: std::ops::Range<usize>| s.records[r.clone()].iter().map(|x| x.metrics.lifetime as f64).sum::<f64>() / r.len() as f64;
    report(
        5,
        "training convergence",
        ratio >= 1.2,
        &format!(
            "learner return {first:.3} (episodes 1-100) -> {last:.3} (last 100), ratio {ratio:.3} (need >= 1.2); raw bits/J return ratio {raw:.3}; lifetime {:.2} -> {:.2}",
            lt(0..100),
            lt(n - 100..n)
        ),
    );
}

#[test]
fn c6_lifetime_tct_tradeoff() {
    let run = reference_run();
    let team = run.greedy_policy().unwrap();
    let mut policies = vec![PolicySpec::Dqn(team)];
    policies.extend(PolicySpec::baselines());
    let ev = evaluate(&policies, &SimConfig::default(), &evaluation_seeds(REFERENCE_SEED, 50)).unwrap();
    let st = |p: &str| ev.stats_for(p).unwrap();
    let (dqn, tg, eg) = (st("dqn"), st("time_greedy"), st("energy_greedy"));
    let tct = |p: &mec_core::harness::PolicyStats| p.tct_mean.unwrap_or(f64::NAN);
    let checks = [
        ("DQN LT >= 0.9 x EG LT", dqn.lifetime_mean >= 0.9 * eg.lifetime_mean),
        ("DQN TCT <= 1.1 x TG TCT", tct(dqn) <= 1.1 * tct(tg)),
        ("TG LT < DQN LT", tg.lifetime_mean < dqn.lifetime_mean),
        ("EG TCT > DQN TCT", tct(eg) > tct(dqn)),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    let line = ev
        .stats
        .iter()
        .map(|p| format!("{} LT {:.2}±{:.2} TCT {:.4}", p.policy, p.lifetime_mean, p.lifetime_std, tct(p)))
        .collect::<Vec<_>>()
        .join("; ");
    report(6, "lifetime/TCT trade-off", failed.is_empty(), &format!("{line}; unmet: {failed:?}"));
}

// ---- 7: server-count trend ----

#[test]
fn c7_server_count_trend() {
    let template = SimConfig { num_users: 5, ..Default::default() };
    let seeds: Vec<u64> = (0..10).map(|i| derive_seed(77, i)).collect();
    let opts = SweepOptions { policy: SweepPolicy::Dqn, train: TrainConfig::default(), train_episodes: 500, eval_episodes: 50 };
    let table = sweep_servers(&template, &[1, 2, 3], &seeds, &opts).unwrap();
    let pts = table.points();
    let mut unmet = Vec::new();
    for w in pts.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let lt_pool = ((a.lifetime_std.powi(2) + b.lifetime_std.powi(2)) / 2.0).sqrt();
        if b.lifetime_mean < a.lifetime_mean - lt_pool {
            unmet.push(format!("lifetime drops {} -> {}", a.servers, b.servers));
        }
        let (ta, tb) = (a.tct_mean.unwrap_or(f64::NAN), b.tct_mean.unwrap_or(f64::NAN));
        let tct_pool = ((a.tct_std.unwrap_or(0.0).powi(2) + b.tct_std.unwrap_or(0.0).powi(2)) / 2.0).sqrt();
        if !(tb <= ta + tct_pool) {
            unmet.push(format!("TCT rises {} -> {}", a.servers, b.servers));
        }
    }
    let line = pts
        .iter()
        .map(|p| format!("N={} LT {:.2}±{:.2} TCT {:.4}±{:.4}", p.servers, p.lifetime_mean, p.lifetime_std, p.tct_mean.unwrap_or(f64::NAN), p.tct_std.unwrap_or(f64::NAN)))
        .collect::<Vec<_>>()
        .join("; ");
    report(7, "server-count trend", unmet.is_empty(), &format!("DQN, 10 seeds, 500 training episodes each; {line}; unmet: {unmet:?}"));
}

// ---- 8: CLI determinism ----

fn mec(root: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_mec")).args(args).arg("--out").arg(root).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn c8_cli_determinism() {
    let tmp = tempfile::TempDir::new().unwrap();
    let root = tmp.path();
    let common = ["--seed", "42", "--set", "hidden_layers=[64, 64]"];
    let runs: [(&str, Vec<&str>, &[&str]); 3] = [
        ("train", vec!["train", "--episodes", "130"], &["train.csv", "checkpoints/final/agent_0.ckpt", "checkpoints/final/agent_2.ckpt", "config.echo"]),
        ("compare", vec!["compare", "--episodes", "20", "--checkpoint"], &["eval.csv", "eval_summary.csv", "config.echo"]),
        (
            "sweep",
            vec!["sweep", "--servers", "1,2", "--episodes", "110", "--set", "sweep_seeds=2", "--set", "eval_episodes=5"],
            &["sweep.csv", "config.echo"],
        ),
    ];
    let mut differing = Vec::new();
    let mut compared = 0;
    for (cmd, args, files) in &runs {
        for rep in ["a", "b"] {
            let name = format!("{cmd}_{rep}");
            let ckpt = root.join(format!("train_{rep}/checkpoints/final"));
            let mut full: Vec<&str> = args.clone();
            if *cmd == "compare" {
                full.push(ckpt.to_str().unwrap());
            }
            full.extend(common);
            full.extend(["--name", &name]);
            mec(root, &full);
        }
        for f in *files {
            let a = std::fs::read(root.join(format!("{cmd}_a")).join(f)).unwrap();
            let b = std::fs::read(root.join(format!("{cmd}_b")).join(f)).unwrap();
            compared += 1;
            if a != b {
                differing.push(format!("{cmd}/{f}"));
            }
        }
    }
    report(8, "CLI determinism", differing.is_empty(), &format!("{compared} artifacts from train, compare and sweep run twice; differing: {differing:?}"));
}
