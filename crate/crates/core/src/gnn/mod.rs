//! Graph neural network encoders and batching.

mod batch;
mod encoder;

pub use batch::GraphBatch;
pub use encoder::{
    embed_inputs, encode_with, readout, Arch, BnUpdate, EncodeOut, Encoder, EncoderConfig, Init,
    ParamSpec, Readout, BN_EPS, BN_MOMENTUM,
};
