//! Training, paired evaluation and server-count sweeps, with CSV output.

mod csv_out;
mod evaluate;
mod sweep;
mod train;

pub use csv_out::{fmt_f64, fmt_opt, parse_opt, write_csv, NA};
pub use evaluate::{evaluate, evaluation_seeds, mean_std, run_episode, summarize, EvalRow, Evaluation, PolicySpec, PolicyStats};
pub use sweep::{sweep_servers, SweepOptions, SweepPoint, SweepPolicy, SweepRow, SweepTable};
pub use train::{episode_seed, load_checkpoints, train, EpisodeRecord, RunSummary, TrainConfig, Trained};
