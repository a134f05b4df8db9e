//! Neural-network layer primitives with analytic backward rules.

pub mod conv;
pub mod elementwise;
pub mod loss;
pub mod norm;
pub mod pool;
pub mod resize;

pub use conv::{conv2d, ConvSpec};
pub use elementwise::{add, argmax_classes, concat_channels, mean_all, mul, relu, scale, sum_all};
pub use loss::softmax_cross_entropy;
pub use norm::{batch_norm, BatchNormState, BnMode};
pub use pool::{global_avg_pool, max_pool2d, PoolSpec};
pub use resize::{bilinear_upsample, crop_spatial, reflect_pad, PadSpec};
