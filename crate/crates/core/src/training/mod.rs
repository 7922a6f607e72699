//! Synthetic data, objective, optimiser and the training loop.

mod data;
mod optim;
mod synth;
mod trainer;

pub use data::{prepare_clip, CropWindow, DataSource, PreparedClip, SeedStream, VALIDATION_STREAM};
pub use optim::{adam_step, adam_update, charbonnier_loss, cosine_lr, AdamParams, OptimizerState};
pub use synth::{synthesize_clip, Clip, Pattern, SynthClipSpec, SynthDataSpec, Wave};
pub use trainer::{train, validate, LogEntry, TrainConfig, TrainOutput};
