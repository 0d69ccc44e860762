//! Unsupervised power side-channel analysis of the AES-128 first round.
//!
//! The crate covers the whole attack flow: trace storage and windowing,
//! a parametric leakage simulator, a small framework-free neural network
//! substrate (dense layers, LSTM cells, Adam), the LSTM sequence
//! auto-encoder used as a feature extractor, MLP sensitivity analysis for
//! leakage-model detection, and difference-of-means key ranking.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`). Training and
//! statistics run in `f64` by default; the aliases at the crate root name the
//! concrete types used throughout the pipeline.

pub mod aes;
pub mod attack;
pub mod autoencoder;
pub mod error;
pub mod nn;
pub mod pipeline;
pub mod scalar;
pub mod seed;
pub mod sensitivity;
pub mod sim;
pub mod trace;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default 64-bit master seed.
pub const DEFAULT_SEED: u64 = 0x5CA0_15EE_D000_0001;

pub type DenseLayer = nn::DenseLayer<f64>;
pub type LstmCell = nn::LstmCell<f64>;
pub type AutoEncoder = autoencoder::AutoEncoder<f64>;
pub type FeatureMatrix = autoencoder::FeatureMatrix<f64>;
pub type Mlp = sensitivity::Mlp<f64>;
pub type AdamState = nn::AdamState<f64>;

pub type DenseLayerF32 = nn::DenseLayer<f32>;
pub type AutoEncoderF32 = autoencoder::AutoEncoder<f32>;
pub type MlpF32 = sensitivity::Mlp<f32>;
