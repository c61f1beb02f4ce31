//! Collaborative kernelized bandits with personalized rewards.

pub mod error;
pub mod gp;
pub mod grid;
pub mod harness;
pub mod kernels;
pub mod network;
pub mod nystrom;
pub mod policy;
pub mod problem;
pub mod rng;

pub use error::{Error, Result};
