//! The minimal differentiable engine behind the U-Net.
//!
//! There is no autograd tape: every operator exposes a forward function and
//! an explicit backward function, and [`crate::unet`] wires them together in
//! the fixed encoder–decoder order. Operators are generic over [`Scalar`] so
//! training runs in `f32` while gradient checks run in `f64`.

mod adam;
mod init;
pub mod ops;
mod scalar;
mod tensor;

pub use adam::{Param, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use init::he_init;
pub use ops::{
    concat_channels, conv2d, conv2d_backward, l1_loss, leaky_relu, leaky_relu_backward, maxpool2,
    maxpool2_backward, split_channels, upsample_bilinear2, upsample_bilinear2_backward, ConvGrads,
    Pooled, LEAKY_SLOPE,
};
pub use scalar::Scalar;
pub use tensor::Tensor;
