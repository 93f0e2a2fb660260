//! Differentiable kernels and the optimizer the model is built from.

mod activation;
mod adam;
mod conv;
mod dense;
mod loss;
mod pooling;
mod tensor;

pub use activation::{elu, elu_grad, elu_in_place, sigmoid, sigmoid_scalar, softmax};
pub(crate) use activation::elu_grad_from_output;
pub use adam::{adam_step, AdamState, ParamSlot};
pub use conv::{conv1d_backward, conv1d_forward, ConvLayerParams};
pub(crate) use conv::conv1d_backward_params;
pub use dense::{fusion_backward, weighted_average_fusion, DenseParams, FusionParams};
pub use loss::{cross_entropy_loss, mse_grad, mse_loss, sigmoid_mse, softmax_cross_entropy};
pub use pooling::{global_average_pool, global_average_pool_backward};
pub use tensor::{axpy, dot, Tensor2};
