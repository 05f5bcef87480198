//! Optimisation: Adam with warmup and inverse-square-root decay, the epoch
//! loop with dev-set model selection, and utterance scoring.

mod config;
mod network;
mod optim;
mod trainer;

pub use config::{
    AugmentConfig, DataConfig, LossConfig, ModelConfig, OptimizerConfig, OutputConfig,
    ScheduleConfig, TrainConfig, DEFAULT_SEED,
};
pub use network::{
    segment_score, utterance_score, ModelSpec, Network, SegmentOutput, StepLosses, CHECKPOINT_FILE,
    MODEL_FILE,
};
pub use optim::{lr_at_step, Adam, AdamConfig};
pub use trainer::{
    feature_stats, fit, load_partition, score_utterances, train, EpochHook, EpochLog,
    TrainArtifacts, TrainOutcome, Utterance, EVAL_BATCH, METRICS_FILE, METRICS_HEADER,
};
