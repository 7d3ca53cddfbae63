use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arrivals::sample_arrivals;
use super::physics::{
    feasible_frequency, local_energy, max_feasible_power, offload_budget, offload_energy, path_gain, snr, uplink_rate,
};
use super::{Position, ServerId, Task, UserId};
use crate::config::{linear_to_db, SimConfig};
use crate::error::SimError;
use crate::rng::SimStreams;

/// Bumped whenever the serialized layout of [`EnvState`] changes.
pub const TRACE_FORMAT_VERSION: u32 = 1;

const PLACEMENT_ATTEMPTS: usize = 100;

/// Rewards are bits per joule; this keeps them near unit scale at full transmit power.
const REWARD_SCALE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    pub id: UserId,
    pub position: Position,
    pub energy: f64,
    pub queue: VecDeque<Task>,
    pub server: ServerId,
    pub alive: bool,
    /// Long-term gain of the link to `server`.
    pub link_gain: f64,
    pub tasks_arrived: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerState {
    pub id: ServerId,
    pub position: Position,
    /// Associated users in ascending id order.
    pub pool: Vec<UserId>,
    pub queue: VecDeque<Task>,
    pub bandwidth_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub config: SimConfig,
    pub users: Vec<UserState>,
    pub servers: Vec<ServerState>,
    /// Index of the interval about to run, starting at 1.
    pub t: u64,
    pub rng: SimStreams,
    pub completed_tasks: Vec<Task>,
    pub crashed: bool,
    /// Block-fading multiplier of each user's uplink for interval `t`.
    pub fading_gains: Vec<f64>,
    next_task_id: u64,
}

/// Raw per-user features a server sees at the start of an interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedUser {
    pub user: UserId,
    pub queue_length: usize,
    pub energy: f64,
    pub mean_wait: f64,
    pub uplink_snr_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UserAction {
    Idle,
    Local,
    Offload,
}

/// What one user did during an interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserStepRecord {
    pub user: UserId,
    pub action: UserAction,
    /// Local or offload bit budget of the branch taken (0 for idle).
    pub budget_bits: u64,
    pub bits: u64,
    /// Energy drawn by computation or transmission, excluding stand-by.
    pub energy_spent: f64,
    pub energy_before: f64,
    pub energy_after: f64,
    /// Tasks removed from the user queue, in dequeue order.
    pub task_ids: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerStepRecord {
    pub server: ServerId,
    pub selected_user: UserId,
    pub offload_rate: f64,
    pub offload_budget_bits: u64,
    pub offloaded_bits: u64,
    pub offload_energy: f64,
    pub processing_budget_bits: u64,
    pub processed_bits: u64,
    /// Tasks finished by the server this interval, in completion order.
    pub completed_ids: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    pub observations: Vec<Vec<ObservedUser>>,
    pub terminal: bool,
    pub users: Vec<UserStepRecord>,
    pub servers: Vec<ServerStepRecord>,
}

/// Draws a fresh topology and energy levels for one episode.
pub fn init_episode(config: &SimConfig, seed: u64) -> Result<EnvState, SimError> {
    config.validate()?;
    let mut rng = SimStreams::new(seed);
    let side = config.area_side;
    let draw = |rng: &mut ChaCha8Rng| Position { x: rng.gen::<f64>() * side, y: rng.gen::<f64>() * side };
    for _ in 0..PLACEMENT_ATTEMPTS {
        let servers: Vec<Position> = (0..config.num_servers).map(|_| draw(&mut rng.topology)).collect();
        let users: Vec<Position> = (0..config.num_users).map(|_| draw(&mut rng.topology)).collect();
        let assoc = associate(config, &servers, &users);
        if (0..config.num_servers).all(|s| assoc.contains(&s)) {
            let (lo, hi) = config.emax_range;
            let energies = (0..config.num_users)
                .map(|_| loop {
                    let e = lo + rng.topology.gen::<f64>() * (hi - lo);
                    if e > lo {
                        break e;
                    }
                })
                .collect();
            return Ok(EnvState::build(config.clone(), rng, servers, users, energies));
        }
    }
    Err(SimError::DegenerateTopology { attempts: PLACEMENT_ATTEMPTS })
}

/// Index of the server with the strongest long-term gain to each user; ties to the lowest id.
fn associate(config: &SimConfig, servers: &[Position], users: &[Position]) -> Vec<ServerId> {
    users
        .iter()
        .map(|u| {
            let mut best = 0;
            let mut best_gain = f64::NEG_INFINITY;
            for (s, pos) in servers.iter().enumerate() {
                let g = path_gain(u.distance(pos), config);
                if g > best_gain {
                    best = s;
                    best_gain = g;
                }
            }
            best
        })
        .collect()
}

impl EnvState {
    /// Builds an episode from an explicit topology and initial energies.
    pub fn with_topology(
        config: SimConfig,
        seed: u64,
        servers: Vec<Position>,
        users: Vec<Position>,
        energies: Vec<f64>,
    ) -> Result<Self, SimError> {
        config.validate()?;
        if servers.len() != config.num_servers || users.len() != config.num_users || energies.len() != users.len() {
            return Err(SimError::InvalidConfig("topology does not match num_servers/num_users".into()));
        }
        if let Some(e) = energies.iter().find(|&&e| !(e.is_finite() && e > 0.0)) {
            return Err(SimError::InvalidConfig(format!("initial energy {e} must be > 0")));
        }
        let assoc = associate(&config, &servers, &users);
        if !(0..config.num_servers).all(|s| assoc.contains(&s)) {
            return Err(SimError::DegenerateTopology { attempts: 1 });
        }
        Ok(Self::build(config, SimStreams::new(seed), servers, users, energies))
    }

    fn build(
        config: SimConfig,
        rng: SimStreams,
        server_pos: Vec<Position>,
        user_pos: Vec<Position>,
        energies: Vec<f64>,
    ) -> Self {
        let assoc = associate(&config, &server_pos, &user_pos);
        let bandwidth = config.server_bandwidth_hz();
        let servers = server_pos
            .iter()
            .enumerate()
            .map(|(id, &position)| ServerState {
                id,
                position,
                pool: (0..user_pos.len()).filter(|&u| assoc[u] == id).collect(),
                queue: VecDeque::new(),
                bandwidth_hz: bandwidth,
            })
            .collect();
        let users = user_pos
            .iter()
            .enumerate()
            .map(|(id, &position)| UserState {
                id,
                position,
                energy: energies[id],
                queue: VecDeque::new(),
                server: assoc[id],
                alive: true,
                link_gain: path_gain(position.distance(&server_pos[assoc[id]]), &config),
                tasks_arrived: 0,
            })
            .collect();
        let mut env = Self {
            config,
            users,
            servers,
            t: 1,
            rng,
            completed_tasks: Vec::new(),
            crashed: false,
            fading_gains: Vec::new(),
            next_task_id: 0,
        };
        env.redraw_fading();
        env
    }

    fn redraw_fading(&mut self) {
        let enabled = self.config.fading_enabled;
        let rng = &mut self.rng.fading;
        self.fading_gains = (0..self.users.len())
            .map(|_| if enabled { -(1.0 - rng.gen::<f64>()).ln() } else { 1.0 })
            .collect();
    }

    pub fn num_servers(&self) -> usize {
        self.servers.len()
    }

    /// Instantaneous gain of a user's uplink in the current interval.
    pub fn uplink_gain(&self, user: UserId) -> f64 {
        self.users[user].link_gain * self.fading_gains[user]
    }

    /// Stream used by policies that need episode-local randomness.
    pub fn exploration_rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng.exploration
    }

    pub fn observe(&self, server: ServerId) -> Result<Vec<ObservedUser>, SimError> {
        let srv = self.servers.get(server).ok_or(SimError::UnknownServer(server))?;
        let noise = self.config.noise_psd_watts_hz();
        Ok(srv
            .pool
            .iter()
            .map(|&u| {
                let user = &self.users[u];
                let mean_wait = if user.queue.is_empty() {
                    0.0
                } else {
                    let total: u64 = user.queue.iter().map(|task| self.t - task.arrival_interval).sum();
                    total as f64 / user.queue.len() as f64
                };
                let s = snr(srv.bandwidth_hz, self.uplink_gain(u), self.config.max_tx_power_watts, noise);
                ObservedUser {
                    user: u,
                    queue_length: user.queue.len(),
                    energy: user.energy,
                    mean_wait,
                    uplink_snr_db: linear_to_db(s),
                }
            })
            .collect())
    }

    pub fn observe_all(&self) -> Vec<Vec<ObservedUser>> {
        (0..self.servers.len()).map(|s| self.observe(s).expect("server id in range")).collect()
    }

    /// Runs interval `t` with one selected user per server.
    pub fn step(&mut self, actions: &[UserId]) -> Result<StepOutcome, SimError> {
        if self.crashed {
            return Err(SimError::Crashed);
        }
        if actions.len() != self.servers.len() {
            return Err(SimError::ActionCount { expected: self.servers.len(), got: actions.len() });
        }
        for (s, &u) in actions.iter().enumerate() {
            if !self.servers[s].pool.contains(&u) {
                return Err(SimError::InvalidAction { server: s, user: u });
            }
        }
        let cfg = &self.config;
        let t = self.t;
        let tau = cfg.interval_duration;
        let task_size = cfg.task_size_bits;

        // arrivals
        for user in self.users.iter_mut() {
            let n = sample_arrivals(cfg.arrival_rate, &mut self.rng.arrivals);
            for _ in 0..n {
                user.queue.push_back(Task {
                    id: self.next_task_id,
                    owner: user.id,
                    size_bits: task_size,
                    arrival_interval: t,
                    completion_interval: None,
                    remaining_server_bits: task_size,
                });
                self.next_task_id += 1;
            }
            user.tasks_arrived += n;
        }

        let mut user_records: Vec<UserStepRecord> = self
            .users
            .iter()
            .map(|u| UserStepRecord {
                user: u.id,
                action: UserAction::Idle,
                budget_bits: 0,
                bits: 0,
                energy_spent: 0.0,
                energy_before: u.energy,
                energy_after: u.energy,
                task_ids: Vec::new(),
            })
            .collect();
        let mut server_records = Vec::with_capacity(self.servers.len());

        // offloading by the selected users
        let noise = cfg.noise_psd_watts_hz();
        for (s, &u) in actions.iter().enumerate() {
            let gain = self.users[u].link_gain * self.fading_gains[u];
            let user = &mut self.users[u];
            let server = &mut self.servers[s];
            let tx_power = max_feasible_power(user.energy, tau).min(cfg.max_tx_power_watts);
            let rate = uplink_rate(server.bandwidth_hz, gain, tx_power, noise);
            let budget = offload_budget(rate, tau);
            let rec = &mut user_records[u];
            rec.action = UserAction::Offload;
            rec.budget_bits = budget;
            while let Some(head) = user.queue.front() {
                if rec.bits + head.size_bits > budget {
                    break;
                }
                let task = user.queue.pop_front().expect("front exists");
                rec.bits += task.size_bits;
                rec.task_ids.push(task.id);
                server.queue.push_back(task);
            }
            rec.energy_spent = offload_energy(tx_power, rec.bits, rate);
            server_records.push(ServerStepRecord {
                server: s,
                selected_user: u,
                offload_rate: rate,
                offload_budget_bits: budget,
                offloaded_bits: rec.bits,
                offload_energy: rec.energy_spent,
                processing_budget_bits: 0,
                processed_bits: 0,
                completed_ids: Vec::new(),
            });
        }

        // local computation by everyone else
        for user in self.users.iter_mut() {
            let rec = &mut user_records[user.id];
            if rec.action == UserAction::Offload || !user.alive {
                continue;
            }
            let p_max = max_feasible_power(user.energy, tau);
            let freq = feasible_frequency(p_max, cfg.user_cpu_hz, cfg.kappa);
            let budget = (tau * freq / cfg.user_cycles_per_bit).floor() as u64;
            while let Some(head) = user.queue.front() {
                if rec.bits + head.size_bits > budget {
                    break;
                }
                let mut task = user.queue.pop_front().expect("front exists");
                rec.bits += task.size_bits;
                rec.task_ids.push(task.id);
                task.completion_interval = Some(t);
                self.completed_tasks.push(task);
            }
            if rec.bits > 0 {
                rec.action = UserAction::Local;
                rec.budget_bits = budget;
                rec.energy_spent = local_energy(cfg.kappa, freq, cfg.user_cycles_per_bit, rec.bits);
            }
        }

        // energy update
        for user in self.users.iter_mut().filter(|u| u.alive) {
            let rec = &mut user_records[user.id];
            user.energy = user.energy - rec.energy_spent - cfg.standby_energy;
            rec.energy_after = user.energy;
        }

        // server-side FIFO processing with partial progress
        let server_budget = cfg.server_budget_bits();
        for (server, rec) in self.servers.iter_mut().zip(server_records.iter_mut()) {
            rec.processing_budget_bits = server_budget;
            let mut left = server_budget;
            while left > 0 {
                let Some(head) = server.queue.front_mut() else { break };
                let work = head.remaining_server_bits.min(left);
                head.remaining_server_bits -= work;
                left -= work;
                rec.processed_bits += work;
                if head.remaining_server_bits == 0 {
                    let mut task = server.queue.pop_front().expect("front exists");
                    task.completion_interval = Some(t);
                    rec.completed_ids.push(task.id);
                    self.completed_tasks.push(task);
                }
            }
        }

        let rewards = server_records
            .iter()
            .map(|r| {
                if r.offloaded_bits == 0 || r.offload_energy <= 0.0 {
                    0.0
                } else {
                    r.offloaded_bits as f64 / r.offload_energy * REWARD_SCALE
                }
            })
            .collect();

        self.t += 1;
        for user in self.users.iter_mut() {
            if user.energy <= 0.0 {
                user.alive = false;
            }
        }
        self.crashed = self.users.iter().any(|u| !u.alive) || self.t > self.config.max_intervals;
        self.redraw_fading();

        Ok(StepOutcome {
            rewards,
            observations: self.observe_all(),
            terminal: self.crashed,
            users: user_records,
            servers: server_records,
        })
    }

    /// Tasks per user: (arrived, in user queue, in server queues, completed).
    pub fn task_accounting(&self) -> Vec<(u64, u64, u64, u64)> {
        let mut acc: Vec<(u64, u64, u64, u64)> =
            self.users.iter().map(|u| (u.tasks_arrived, u.queue.len() as u64, 0, 0)).collect();
        for task in self.servers.iter().flat_map(|s| s.queue.iter()) {
            acc[task.owner].2 += 1;
        }
        for task in &self.completed_tasks {
            acc[task.owner].3 += 1;
        }
        acc
    }

    /// Self-describing JSON snapshot of the full state.
    pub fn to_trace_json(&self) -> serde_json::Result<String> {
        #[derive(Serialize)]
        struct Trace<'a> {
            format: &'static str,
            format_version: u32,
            state: &'a EnvState,
        }
        serde_json::to_string(&Trace { format: "mec-env-state", format_version: TRACE_FORMAT_VERSION, state: self })
    }

    pub fn from_trace_json(text: &str) -> Result<Self, SimError> {
        #[derive(Deserialize)]
        struct Trace {
            format_version: u32,
            state: EnvState,
        }
        let trace: Trace =
            serde_json::from_str(text).map_err(|e| SimError::InvalidConfig(format!("bad trace: {e}")))?;
        if trace.format_version != TRACE_FORMAT_VERSION {
            return Err(SimError::InvalidConfig(format!("unsupported trace version {}", trace.format_version)));
        }
        Ok(trace.state)
    }
}
