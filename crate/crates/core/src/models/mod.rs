//! Encoders, the training objective and the training loops.

pub mod checkpoint;
pub mod encoder;
pub mod objective;
pub mod train;

pub use checkpoint::Checkpoint;
pub use encoder::{init_encoder, Encoder, EncoderGrad, EncoderKind, EncoderSpec, Layer};
pub use objective::{loss_and_grad, Objective};
pub use train::{encode_concat, train, train_with, Method, TrainConfig, TrainedModel};
