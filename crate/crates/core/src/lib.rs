//! Neural-network toolkit for power-transformer condition monitoring.
//!
//! - [`nn`]: dense layers, softplus/ReLU/softmax, MSE and cross-entropy,
//!   backpropagation, momentum SGD, finite-difference gradient checks, checkpoints.
//! - [`conv`]: 2-D convolution, max-pooling and the reference OLTC CNN.
//! - [`dsp`]: framing, STFT, dB scaling and Mel filter banks.
//! - [`synth`]: synthetic OLTC acoustic states, noise injection, spectral subtraction.
//! - [`env`]: transformer energization environment and brute-force closing-angle oracle.
//! - [`rl`]: DQN and PPO agents on a discrete closing-angle grid.
//! - [`harness`]: configuration, experiment records and the orchestration behind the CLI.

pub mod conv;
pub mod dsp;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod rl;
pub mod seed;
pub mod synth;
pub mod tensor;

pub use error::{Error, ErrorKind, Result};
pub use tensor::Tensor;
