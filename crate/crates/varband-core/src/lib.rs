//! Core algorithms for forecast-based anomaly detection on telemetry series.
//!
//! The crate is `no_std`-compatible (it only needs `alloc`); everything that
//! touches files, threads, or a terminal lives in the companion `varband`
//! crate. The pieces compose into one pipeline:
//!
//! 1. [`preprocess`] smooths model inputs with variable-length windows.
//! 2. [`nn`] provides dropout-masked recurrent cells (SimpleRNN, LSTM, GRU),
//!    dense layers, exact backpropagation through time, and Adam training.
//! 3. [`bayes`] turns a trained net into a predictive distribution via
//!    Monte Carlo dropout.
//! 4. [`ensemble`] combines several predictive distributions with
//!    inverse-variance weights.
//! 5. [`ga`] searches architectures with a small genetic algorithm.
//! 6. [`detect`] scores residuals against the predictive band and flags
//!    anomalous segments.
//! 7. [`eval`] computes point-wise detection metrics and aggregates them
//!    across channels.
//!
//! All floating point work is `f64`, and every stochastic routine takes an
//! explicit [`rng::SplitRng`], so a fixed seed reproduces results exactly.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod bayes;
pub mod dataset;
pub mod detect;
pub mod ensemble;
pub mod eval;
pub mod ga;
mod math;
pub mod matrix;
pub mod nn;
pub mod preprocess;
pub mod rng;

pub use dataset::Segment;
pub use matrix::Matrix;
pub use rng::SplitRng;
