use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("could not place nodes so every server has a user after {attempts} attempts; adjust num_users/num_servers")]
    DegenerateTopology { attempts: usize },
    #[error("expected {expected} actions (one per server), got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("user {user} is not in the pool of server {server}")]
    InvalidAction { server: usize, user: usize },
    #[error("no server with id {0}")]
    UnknownServer(usize),
    #[error("step called on a crashed episode")]
    Crashed,
}

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("invalid layer dims {0:?}: need at least input and output, all nonzero")]
    InvalidDims(Vec<usize>),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient encountered")]
    NonFiniteGradient,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("no valid action in mask")]
    EmptyMask,
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("training diverged at episode {episode} (non-finite loss)")]
    Divergence { episode: usize },
    #[error("server count {servers} is invalid for {users} users")]
    InvalidServerCount { servers: usize, users: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
