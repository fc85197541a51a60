//! Metalearned neural memory.
//!
//! An LSTM controller reads from and writes to a small feed-forward network
//! that serves as its memory. Reading is a forward pass through the network
//! on a key. Writing changes the network's weights in one shot, either with
//! a single modulated gradient step on a recall loss or with a learned
//! layer-local perceptron-style rule. The controller and the local rule are
//! trained end to end across episodes, differentiating through the writes.
//!
//! Modules:
//!
//! - [`autodiff`]: tensors, tape, second-order gradients, Adam.
//! - [`controller`]: LSTM core, interaction heads, output head.
//! - [`memory`]: memory network, gradient and local writes, SDM reference.
//! - [`engine`]: per-step orchestration, losses, training and evaluation.
//! - [`tasks`]: dictionary inference, double copy, priority sort.
//! - [`baselines`]: soft-attention look-up table.
//! - [`harness`]: run configuration, checkpoints, metrics, benchmarks.

pub mod autodiff;
pub mod baselines;
pub mod controller;
pub mod engine;
pub mod harness;
pub mod init;
pub mod memory;
pub mod tasks;

mod error;

pub use error::{Error, Result};
