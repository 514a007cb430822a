//! From-scratch feed-forward network: ReLU hidden layers, softmax output,
//! exact reverse-mode gradients, Adam and a reduce-on-plateau schedule.

mod adam;
mod checkpoint;
mod mlp;
mod schedule;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use checkpoint::{
    load_model, read_checkpoint, save_model, write_checkpoint, Checkpoint, CheckpointMeta,
    CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use mlp::{
    softmax_in_place, standard_dims, Dense, ForwardCache, Gradients, MlpModel, HIDDEN_LAYERS,
    HIDDEN_WIDTH,
};
pub use schedule::{schedule_update, LrSchedule};
