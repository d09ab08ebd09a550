//! Experiment orchestration: configuration, seeded streams, the
//! train/improve/test protocol, metrics files and parameter sweeps.

mod config;
mod metrics;
mod rng;
mod run;

pub use config::{ConfigError, EpisodeConfig, ExperimentConfig, PolicyKind, TopologyConfig, EDGE_CONFIG};
pub use metrics::{
    metrics_header, summary_header, write_summary, EpisodeRecord, MetricsRow, MetricsWriter, Phase, Summary,
};
pub use rng::{stream, stream_seed, Stream};
pub use run::{
    checkpoint_dir, evaluate, run_baseline, run_episode, run_eval, run_sweep, run_training, CheckpointKind,
    CheckpointMeta, Controller, HarnessError, TrainingReport, CHECKPOINT_META,
};
