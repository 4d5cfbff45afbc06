//! ECG rhythm classification with a squeeze-and-excitation VGG + LSTM
//! network whose layers all carry hand-written backward passes.

pub mod cli;
pub mod ingest;
pub mod kv;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod store;
pub mod synth;
pub mod tensor;
pub mod training;

pub use tensor::Tensor;
