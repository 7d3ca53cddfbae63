//! Heuristic selection rules. All return a pool slot index; ties go to the lowest slot.

use rand::Rng;

use crate::error::AgentError;
use crate::sim::ObservedUser;

/// Slot of the user whose queued tasks have waited longest on average.
pub fn time_greedy_select(raw: &[ObservedUser]) -> usize {
    let mut best = 0;
    for (i, u) in raw.iter().enumerate().skip(1) {
        if u.mean_wait > raw[best].mean_wait {
            best = i;
        }
    }
    best
}

/// Slot of the user with the least remaining energy.
pub fn energy_greedy_select(raw: &[ObservedUser]) -> usize {
    let mut best = 0;
    for (i, u) in raw.iter().enumerate().skip(1) {
        if u.energy < raw[best].energy {
            best = i;
        }
    }
    best
}

/// Uniform choice among valid slots.
pub fn random_select<R: Rng + ?Sized>(mask: &[bool], rng: &mut R) -> Result<usize, AgentError> {
    let valid = mask.iter().filter(|&&m| m).count();
    if valid == 0 {
        return Err(AgentError::EmptyMask);
    }
    let pick = rng.gen_range(0..valid);
    Ok(mask.iter().enumerate().filter(|(_, &m)| m).nth(pick).expect("pick < valid").0)
}
