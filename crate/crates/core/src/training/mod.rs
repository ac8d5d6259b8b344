//! MSE optimization with Adam, the seeded training loop with early
//! stopping, and the checkpoint format.

mod checkpoint;
mod trainer;
mod loss;
mod optim;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub(crate) use trainer::worker_pool;
pub use trainer::{train, EpochRecord, History, TrainConfig};
pub use loss::{mae, mse, mse_loss};
pub use optim::Adam;
