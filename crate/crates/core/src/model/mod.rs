//! Causal self-attention model with segment-level recurrence.
//!
//! Each layer attends over its cached memory (the layer inputs of previous
//! segments, detached from the gradient) followed by the current segment.
//! Attention scores combine a content term and a relative-position term
//! built from sinusoidal distance embeddings, so a token at distance `t`
//! is scored the same way whether it sits in memory or in the segment.
//!
//! All arithmetic is `f64`; checkpoints store `f32` and parameters are
//! rounded to `f32` precision whenever a checkpoint is taken.

mod checkpoint;
mod config;
mod generate;
mod layers;
mod network;
mod params;
mod train;

pub use checkpoint::Checkpoint;
pub use config::ModelConfig;
pub use generate::{generate, Generation, SamplingParams, StopReason, DEFAULT_TOKEN_BUDGET};
pub use network::{log_softmax, Memory, Model, Stream};
pub use params::Params;
pub use train::{loss_and_gradient, mean_loss, TrainParams, TrainReport, Trainer};
