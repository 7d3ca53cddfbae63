//! Independent re-derivation of one interval's bookkeeping.
//!
//! [`audit_step`] recomputes budgets and energies from the configuration
//! without going through the physics helpers, then compares them with what the
//! environment recorded. Used by the property tests and handy for trace dumps.

use std::collections::HashMap;

use super::env::{EnvState, StepOutcome, UserAction};
use super::UserId;

/// Relative tolerance on per-interval energy draws.
pub const ENERGY_RTOL: f64 = 1e-12;

fn rel_close(a: f64, b: f64, rtol: f64) -> bool {
    a == b || (a - b).abs() <= rtol * a.abs().max(b.abs())
}

/// Checks one `step(actions)` that took `before` to `after` and produced
/// `out`. Returns a description of every violated property.
pub fn audit_step(before: &EnvState, actions: &[UserId], out: &StepOutcome, after: &EnvState) -> Vec<String> {
    let cfg = &before.config;
    let tau = cfg.interval_duration;
    let n0 = 10f64.powf(cfg.noise_psd_dbm_hz / 10.0) * 1e-3;
    let mut bad = Vec::new();

    // crash semantics
    if before.crashed {
        bad.push("stepped a crashed environment".into());
    }
    if let Some(u) = before.users.iter().find(|u| u.energy <= 0.0) {
        bad.push(format!("interval ran with user {} at energy {}", u.id, u.energy));
    }
    let any_dead = after.users.iter().any(|u| u.energy <= 0.0);
    let terminal = any_dead || after.t > cfg.max_intervals;
    if out.terminal != terminal || after.crashed != terminal {
        bad.push(format!("terminal flag {} disagrees with energies and clock", out.terminal));
    }
    if after.t != before.t + 1 {
        bad.push(format!("clock went from {} to {}", before.t, after.t));
    }

    let offloader: HashMap<UserId, usize> = actions.iter().enumerate().map(|(s, &u)| (u, s)).collect();

    for (u, rec) in out.users.iter().enumerate() {
        let prev = &before.users[u];
        let e0 = prev.energy;
        let p_max = if e0 > 0.0 { e0 / tau } else { 0.0 };

        // which branch and its formula
        let expected_spent = match (offloader.get(&u), rec.action) {
            (Some(&s), UserAction::Offload) => {
                let tx = p_max.min(cfg.max_tx_power_watts);
                let w = before.servers[s].bandwidth_hz;
                let g = prev.link_gain * before.fading_gains[u];
                let rate = if g > 0.0 && tx > 0.0 { w * (1.0 + g * tx / (n0 * w)).log2() } else { 0.0 };
                let budget = (tau * rate).floor() as u64;
                if rec.bits > budget {
                    bad.push(format!("user {u} offloaded {} bits over budget {budget}", rec.bits));
                }
                if !rel_close(out.servers[s].offload_rate, rate, 1e-12) {
                    bad.push(format!("server {s} rate {} vs {rate}", out.servers[s].offload_rate));
                }
                if rec.bits == 0 {
                    0.0
                } else {
                    tx * rec.bits as f64 / rate
                }
            }
            (Some(_), a) => {
                bad.push(format!("selected user {u} recorded {a:?}"));
                continue;
            }
            (None, UserAction::Offload) => {
                bad.push(format!("user {u} offloaded without being selected"));
                continue;
            }
            (None, action) => {
                let f = (p_max / cfg.kappa).cbrt().min(cfg.user_cpu_hz);
                let budget = (tau * f / cfg.user_cycles_per_bit).floor() as u64;
                if rec.bits > budget {
                    bad.push(format!("user {u} computed {} bits over budget {budget}", rec.bits));
                }
                if action == UserAction::Idle && rec.bits != 0 {
                    bad.push(format!("idle user {u} computed {} bits", rec.bits));
                }
                // whole head tasks are taken while they fit
                if let Some(head) = after.users[u].queue.front() {
                    if rec.bits + head.size_bits <= budget {
                        bad.push(format!("user {u} left a fitting head task"));
                    }
                }
                cfg.kappa * f * f * cfg.user_cycles_per_bit * rec.bits as f64
            }
        };

        // Compared on the level, not the difference, which would cancel.
        let want = e0 - expected_spent - cfg.standby_energy;
        if !rel_close(after.users[u].energy, want, ENERGY_RTOL) {
            bad.push(format!("user {u} left at {:e} J, branch formula gives {want:e} J", after.users[u].energy));
        }
        if !rel_close(rec.energy_spent, expected_spent, ENERGY_RTOL) {
            bad.push(format!("user {u} recorded {:e} J spent, formula {expected_spent:e}", rec.energy_spent));
        }
        if after.users[u].energy != rec.energy_after || rec.energy_before != e0 {
            bad.push(format!("user {u} record disagrees with state"));
        }
        if after.users[u].energy > e0 {
            bad.push(format!("user {u} gained energy"));
        }

        // FIFO and atomicity on the user side
        let old: Vec<u64> = prev.queue.iter().map(|t| t.id).collect();
        let seq: Vec<u64> = rec.task_ids.iter().copied().chain(after.users[u].queue.iter().map(|t| t.id)).collect();
        if !seq.starts_with(&old) {
            bad.push(format!("user {u} queue order broken"));
        } else {
            let fresh = &seq[old.len()..];
            let floor = old.iter().max().copied();
            if fresh.windows(2).any(|w| w[0] >= w[1]) || fresh.first().is_some_and(|&f| floor.is_some_and(|m| f <= m)) {
                bad.push(format!("user {u} arrivals out of order"));
            }
        }
        if after.users[u].queue.iter().any(|t| t.remaining_server_bits != t.size_bits || t.completion_interval.is_some()) {
            bad.push(format!("user {u} holds a partially processed task"));
        }
        let removed_bits: u64 = rec.task_ids.len() as u64 * cfg.task_size_bits;
        if removed_bits != rec.bits {
            bad.push(format!("user {u} removed {} tasks for {} bits", rec.task_ids.len(), rec.bits));
        }
    }

    // server side
    let server_budget = (tau * cfg.server_cpu_hz / cfg.server_cycles_per_bit).floor() as u64;
    let mut remaining: HashMap<u64, u64> = HashMap::new();
    for srv in &before.servers {
        for t in &srv.queue {
            remaining.insert(t.id, t.remaining_server_bits);
        }
    }
    for (s, rec) in out.servers.iter().enumerate() {
        if rec.processed_bits > server_budget {
            bad.push(format!("server {s} processed {} bits over budget {server_budget}", rec.processed_bits));
        }
        let offloaded = &out.users[actions[s]].task_ids;
        for id in offloaded {
            remaining.insert(*id, cfg.task_size_bits);
        }
        let seq: Vec<u64> = before.servers[s].queue.iter().map(|t| t.id).chain(offloaded.iter().copied()).collect();
        let left: Vec<u64> = after.servers[s].queue.iter().map(|t| t.id).collect();
        let done = &rec.completed_ids;
        if !seq.starts_with(done) || seq[done.len().min(seq.len())..] != left[..] {
            bad.push(format!("server {s} broke FIFO order"));
        }
        let mut progress = 0;
        for t in &after.servers[s].queue {
            let was = remaining.get(&t.id).copied().unwrap_or(u64::MAX);
            if t.remaining_server_bits > was {
                bad.push(format!("task {} regained server work", t.id));
            }
            progress += was.saturating_sub(t.remaining_server_bits);
        }
        progress += done.iter().map(|id| remaining.get(id).copied().unwrap_or(0)).sum::<u64>();
        if progress != rec.processed_bits {
            bad.push(format!("server {s} reports {} processed bits, queue shows {progress}", rec.processed_bits));
        }
        if rec.processed_bits < server_budget && !left.is_empty() {
            bad.push(format!("server {s} idled with work queued"));
        }
        let want = if rec.offloaded_bits == 0 { 0.0 } else { rec.offloaded_bits as f64 / rec.offload_energy * 1e-9 };
        if !rel_close(out.rewards[s], want, 1e-12) {
            bad.push(format!("server {s} reward {} vs {want}", out.rewards[s]));
        }
    }

    // conservation
    let mut per_user = vec![(0u64, 0u64); after.users.len()];
    for u in &after.users {
        per_user[u.id].0 = u.tasks_arrived;
        per_user[u.id].1 += u.queue.len() as u64;
    }
    for t in after.servers.iter().flat_map(|s| s.queue.iter()).chain(after.completed_tasks.iter()) {
        per_user[t.owner].1 += 1;
    }
    for (u, (arrived, held)) in per_user.iter().enumerate() {
        if arrived != held {
            bad.push(format!("user {u}: {arrived} tasks arrived but {held} accounted for"));
        }
    }
    bad
}
