//! Framework-free neural network pieces: dense layers, LSTM cells, losses,
//! Adam and finite-difference gradient checking.
//!
//! Models expose their trainable tensors through [`Parameterized`]. A
//! gradient is stored in a value of the same type as the model, so the
//! optimizer and the gradient checker can walk both in lockstep.

mod adam;
mod checkpoint;
mod dense;
mod gradcheck;
mod loss;
mod lstm;
mod params;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_into, named_blocks, save_checkpoint, NamedBlock,
    CHECKPOINT_MAGIC,
};
pub use dense::{dense_backward, dense_forward, Activation, DenseCache, DenseLayer};
pub use gradcheck::{central_difference, grad_check, relative_error, BlockError, GradCheckReport};
pub use loss::{bce_loss, mse_loss, BCE_CLAMP};
pub use lstm::{lstm_step, LstmCell, LstmStepCache};
pub use params::{ParamView, Parameterized};
pub(crate) use params::prefixed as params_prefixed;

use rand::Rng;

use crate::Scalar;

/// Glorot-uniform matrix of shape `(fan_out, fan_in)`.
pub(crate) fn glorot<T: Scalar, R: Rng + ?Sized>(rng: &mut R, fan_out: usize, fan_in: usize) -> ndarray::Array2<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    ndarray::Array2::from_shape_simple_fn((fan_out, fan_in), || T::lit(rng.random_range(-limit..=limit)))
}
