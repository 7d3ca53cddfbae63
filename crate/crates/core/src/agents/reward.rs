use serde::{Deserialize, Serialize};

/// Maps the environment reward to the value a learner regresses on.
///
/// Bits per joule grows without bound as a battery empties, because the
/// transmit power falls faster than the achievable rate. A handful of such
/// intervals then dominate every squared-error batch. The compressed forms keep
/// the ordering of rewards while bounding their spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RewardTransform {
    Identity,
    /// `ln(1 + r)`.
    Log1p,
    /// `min(r, max)`.
    Clip { max: f64 },
}

impl Default for RewardTransform {
    fn default() -> Self {
        Self::Log1p
    }
}

impl RewardTransform {
    pub fn apply(&self, reward: f64) -> f64 {
        match *self {
            Self::Identity => reward,
            Self::Log1p => reward.max(0.0).ln_1p(),
            Self::Clip { max } => reward.min(max),
        }
    }
}

impl std::str::FromStr for RewardTransform {
    type Err = String;

    /// `identity`, `log1p` or `clip:<max>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "identity" => Ok(Self::Identity),
            "log1p" => Ok(Self::Log1p),
            _ => match s.strip_prefix("clip:").map(str::parse::<f64>) {
                Some(Ok(max)) if max > 0.0 => Ok(Self::Clip { max }),
                _ => Err(format!("unknown reward transform {s:?}")),
            },
        }
    }
}

impl std::fmt::Display for RewardTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Identity => f.write_str("identity"),
            Self::Log1p => f.write_str("log1p"),
            Self::Clip { max } => write!(f, "clip:{max}"),
        }
    }
}
