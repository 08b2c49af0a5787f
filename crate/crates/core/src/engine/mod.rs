//! Numeric kernel: tensors, forward operations, input/grid gradients and
//! Adam.

pub mod activation;
pub mod adam;
pub mod backprop;
pub mod conv;
pub mod loss;
pub mod sampling;
pub mod tensor;

pub use activation::{maxpool2, relu};
pub use adam::{adam_step, AdamParams, AdamState};
pub use backprop::{feature_loss, input_gradient, loss_and_gradient, TapTarget};
pub use conv::conv2d;
pub use loss::l2_loss;
pub use sampling::{bilinear_sample, resample_width, upsample_bilinear, SamplingGrid};
pub use tensor::{Kernel, Tensor};
