//! Image-to-event-data toolkit: a small convolutional network engine
//! (training, classification, sliding-window detection, Grad-CAM) and the
//! analytics that turn per-image annotations into protest event series.

pub mod analytics;
pub mod corpus;
pub mod detection;
pub mod interpret;
pub mod imageops;
pub mod io;
pub mod layers;
pub mod synth;
pub mod tensor;
pub mod training;

pub use tensor::{Tensor, TensorError};
