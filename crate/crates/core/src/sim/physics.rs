//! Per-interval computation and link-budget formulas.

use crate::config::{db_to_linear, SimConfig};

/// Largest power a user can sustain over one interval with its remaining energy.
pub fn max_feasible_power(energy: f64, tau: f64) -> f64 {
    if energy <= 0.0 {
        0.0
    } else {
        energy / tau
    }
}

/// CPU frequency a user runs at: its hardware cap, or lower if power-limited.
pub fn feasible_frequency(p_max: f64, f_cap: f64, kappa: f64) -> f64 {
    if p_max <= 0.0 {
        return 0.0;
    }
    f_cap.min((p_max / kappa).cbrt())
}

/// Bits a user can compute locally in one interval given its power ceiling.
pub fn local_compute_budget(p_max: f64, f_cap: f64, kappa: f64, tau: f64, cycles_per_bit: f64) -> u64 {
    let f = feasible_frequency(p_max, f_cap, kappa);
    (tau * f / cycles_per_bit).floor() as u64
}

/// Dynamic CPU energy for `bits` at frequency `freq`: kappa * f^2 joules per cycle.
pub fn local_energy(kappa: f64, freq: f64, cycles_per_bit: f64, bits: u64) -> f64 {
    kappa * freq * freq * cycles_per_bit * bits as f64
}

/// Long-term (fading-free) gain of a link of the given length.
///
/// Log-distance model with a 1 m near-field clamp.
pub fn path_gain(distance: f64, config: &SimConfig) -> f64 {
    let g0 = db_to_linear(config.ref_gain_db_at_1m);
    g0 * distance.max(1.0).powf(-config.pathloss_exponent)
}

pub fn snr(bandwidth: f64, gain: f64, tx_power: f64, noise_psd: f64) -> f64 {
    gain * tx_power / (noise_psd * bandwidth)
}

/// Shannon rate in bits/s of an uplink with the given allocation.
pub fn uplink_rate(bandwidth: f64, gain: f64, tx_power: f64, noise_psd: f64) -> f64 {
    if gain <= 0.0 || tx_power <= 0.0 {
        return 0.0;
    }
    bandwidth * (1.0 + snr(bandwidth, gain, tx_power, noise_psd)).log2()
}

pub fn offload_budget(rate: f64, tau: f64) -> u64 {
    (tau * rate).floor() as u64
}

/// Energy to push `bits` at `rate` with `tx_power`; only the airtime used is charged.
pub fn offload_energy(tx_power: f64, bits: u64, rate: f64) -> f64 {
    if bits == 0 || rate <= 0.0 {
        0.0
    } else {
        tx_power * bits as f64 / rate
    }
}
