//! The dual-channel network, its single-channel ablations and checkpoints.
//!
//! ```text
//! pixels   -> deep channel (conv stack) -> e_d (512) -+
//!                                                      +-> concat -> dense 512 -> bn -> dense 256 -> sigmoid
//! textures -> wide channel (2 x dense)  -> e_w (512) -+
//! ```

mod checkpoint;
mod config;
mod gradients;
mod network;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CheckpointHeader, TensorEntry,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{Architecture, ModelConfig, Variant};
pub use gradients::{layer_gradchecks, model_gradcheck, GradCheckEntry};
pub use network::{batch_loss, Batch, Model};
