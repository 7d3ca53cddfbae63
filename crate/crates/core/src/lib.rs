//! Energy-aware multi-server mobile edge computing.
//!
//! A discrete-time simulator of battery-powered users that either compute
//! their tasks locally or offload them to an edge server, plus per-server
//! deep Q-learning agents and greedy baselines that pick which user offloads
//! in each interval.

pub mod agents;
pub mod config;
pub mod error;
pub mod harness;
pub mod neural;
pub mod rng;
pub mod sim;

pub use config::SimConfig;
pub use error::{AgentError, HarnessError, NeuralError, SimError};
