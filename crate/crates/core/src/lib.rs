//! Physical-layer secret key generation for FDD-OFDM links.
//!
//! The crate is `no_std` with `alloc`. It holds the numerical pieces of the
//! pipeline: synthetic multipath channels for several environments, feature
//! extraction, the uplink-to-downlink feature mapping network with manual
//! backpropagation, the training regimes that produce it (direct, joint,
//! pretrain + fine-tune, first-order MAML), guard-band quantization into key
//! bits, and the statistical randomness tests used to score the keys.
//!
//! File formats, the experiment runner and the CLI live in the `fdkg` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod channel;
pub mod error;
pub mod features;
pub mod keygen;
pub mod math;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod randomness;
pub mod rng;
pub mod special;
pub mod strategies;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use num_complex::Complex64;
