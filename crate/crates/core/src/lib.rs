//! Convolution layers for training convolutional networks, computed two ways:
//! directly in the spatial domain, and with batched 2-D FFTs where each input,
//! kernel and gradient plane is transformed once and every pairwise
//! convolution becomes a per-frequency-bin complex matrix product.
//!
//! The crate also carries an arithmetic cost model for both methods and a
//! small layer stack (convolution, ReLU, max-pooling, fully connected) used
//! for end-to-end timing and gradient checks.

pub mod config;
pub mod cost;
pub mod direct;
pub mod error;
pub mod fft;
pub mod fftconv;
pub mod init;
pub mod scalar;
pub mod stack;
pub mod tensor;

pub use config::LayerConfig;
pub use error::{Error, Result};
pub use fft::{FftPlan, HalfSpectrum};
pub use fftconv::{ConvWorkspace, OpCounters};
pub use num_complex::Complex;
pub use scalar::Real;
pub use tensor::{RealTensor4, WeightTensor4};
