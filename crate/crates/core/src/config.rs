//! Physical, traffic and episode parameters of the simulated MEC system.

use serde::{Deserialize, Serialize};

use crate::error::SimError;

/// Every parameter needed to simulate one episode.
///
/// Defaults reproduce the reference setup: a 10 m x 10 m arena, 100 ms
/// intervals, 3 servers and 5 users, 1 KB tasks arriving at 10 per interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub num_servers: usize,
    pub num_users: usize,
    /// Side of the square arena, meters.
    pub area_side: f64,
    /// Interval length, seconds.
    pub interval_duration: f64,
    /// Open interval the initial per-user energy (J) is drawn from.
    pub emax_range: (f64, f64),
    /// Stand-by energy charged to every user each interval, J.
    pub standby_energy: f64,
    /// Mean Poisson task arrivals per user per interval.
    pub arrival_rate: f64,
    pub task_size_bits: u64,
    pub user_cpu_hz: f64,
    pub server_cpu_hz: f64,
    pub user_cycles_per_bit: f64,
    pub server_cycles_per_bit: f64,
    /// Effective switched capacitance.
    pub kappa: f64,
    pub max_tx_power_watts: f64,
    pub total_bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub pathloss_exponent: f64,
    pub ref_gain_db_at_1m: f64,
    pub fading_enabled: bool,
    pub max_intervals: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            num_servers: 3,
            num_users: 5,
            area_side: 10.0,
            interval_duration: 0.1,
            emax_range: (0.01, 1.0),
            standby_energy: 1e-7,
            arrival_rate: 10.0,
            task_size_bits: 8000,
            user_cpu_hz: 1e9,
            server_cpu_hz: 3e9,
            user_cycles_per_bit: 500.0,
            server_cycles_per_bit: 1000.0,
            kappa: 1e-27,
            max_tx_power_watts: dbm_to_watts(27.0),
            total_bandwidth_hz: 20e6,
            noise_psd_dbm_hz: -174.0,
            pathloss_exponent: 3.0,
            ref_gain_db_at_1m: -30.0,
            fading_enabled: true,
            max_intervals: 10_000,
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if self.num_servers == 0 {
            return bad("num_servers must be at least 1".into());
        }
        if self.num_users == 0 {
            return bad("num_users must be at least 1".into());
        }
        if self.num_servers > self.num_users {
            return bad(format!(
                "num_servers ({}) exceeds num_users ({}); some server would have an empty pool",
                self.num_servers, self.num_users
            ));
        }
        let positive = [
            ("area_side", self.area_side),
            ("interval_duration", self.interval_duration),
            ("standby_energy", self.standby_energy),
            ("user_cpu_hz", self.user_cpu_hz),
            ("server_cpu_hz", self.server_cpu_hz),
            ("kappa", self.kappa),
            ("max_tx_power_watts", self.max_tx_power_watts),
            ("total_bandwidth_hz", self.total_bandwidth_hz),
            ("pathloss_exponent", self.pathloss_exponent),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        if !(self.user_cycles_per_bit >= 1.0 && self.user_cycles_per_bit.is_finite()) {
            return bad("user_cycles_per_bit must be >= 1".into());
        }
        if !(self.server_cycles_per_bit >= 1.0 && self.server_cycles_per_bit.is_finite()) {
            return bad("server_cycles_per_bit must be >= 1".into());
        }
        if !self.noise_psd_dbm_hz.is_finite() || !self.ref_gain_db_at_1m.is_finite() {
            return bad("noise_psd_dbm_hz and ref_gain_db_at_1m must be finite".into());
        }
        let (lo, hi) = self.emax_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad(format!("emax_range ({lo}, {hi}) must be a nonempty interval"));
        }
        if lo <= self.standby_energy {
            return bad(format!(
                "emax_range lower bound {lo} must exceed standby_energy {}",
                self.standby_energy
            ));
        }
        if !(self.arrival_rate.is_finite() && self.arrival_rate >= 0.0) {
            return bad(format!("arrival_rate must be >= 0, got {}", self.arrival_rate));
        }
        if self.task_size_bits == 0 {
            return bad("task_size_bits must be >= 1".into());
        }
        if self.max_intervals == 0 {
            return bad("max_intervals must be >= 1".into());
        }
        Ok(())
    }

    /// Noise power spectral density in W/Hz.
    pub fn noise_psd_watts_hz(&self) -> f64 {
        dbm_to_watts(self.noise_psd_dbm_hz)
    }

    /// Uplink bandwidth of every server under the static equal FDMA split.
    pub fn server_bandwidth_hz(&self) -> f64 {
        self.total_bandwidth_hz / self.num_servers as f64
    }

    /// Bits a server can process in one interval.
    pub fn server_budget_bits(&self) -> u64 {
        (self.interval_duration * self.server_cpu_hz / self.server_cycles_per_bit).floor() as u64
    }

    /// Largest pool any server can hold once every server owns at least one user.
    pub fn max_pool_size(&self) -> usize {
        self.num_users + 1 - self.num_servers.min(self.num_users)
    }
}
