//! RGB-D semantic segmentation engine.
//!
//! A self-contained implementation of a dual-branch dilated-residual
//! segmentation network (RGB and depth encoders, a fusion block, and a
//! multi-rate pyramid pooling head) together with the tensor/autodiff
//! substrate, data pipeline, staged trainer, and IoU evaluator needed to
//! train and verify it end to end on CPU.

pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod cli;
pub mod config;
pub mod data;
pub mod labels;
pub mod model;
pub mod ops;
pub mod rng;
pub mod train;
pub mod verify;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use gradcheck::grad_check;
pub use labels::{Labels, IGNORE_ID};
pub use scalar::Scalar;
pub use tape::Tape;
pub use tensor::Tensor;
