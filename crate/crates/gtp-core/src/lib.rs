//! Sentence-specified dynamic video thumbnail selection.
//!
//! Given per-clip video features and a tokenized sentence, the model encodes
//! both sequences with bidirectional GRUs, fuses them through word-by-clip
//! attention, runs stacked graph convolutions over a clip affinity graph, and
//! decodes a strictly-increasing subset of clips with a temporal conditioned
//! pointer network.
//!
//! The crate is `no_std` + `alloc`; all IO, file formats, and the CLI live in
//! the companion `gtp-cli` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data;
pub mod gradcheck;
pub mod graph;
pub mod gru;
pub mod interaction;
pub mod math;
pub mod metrics;
pub mod model;
pub mod pointer;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod train;

pub use data::{AnnotationMatrix, DataError, VideoSample};
pub use metrics::{corpus_metrics, MetricReport};
pub use model::{Model, ModelDims, Prediction, Variant};
pub use tensor::{Tensor, TensorError};
pub use train::{TrainConfig, Trainer, TrainSample};
