//! Introspection toolkit for frozen convolutional reinforcement-learning
//! policies: a small network engine, a portable model container, rollout
//! recording, and the analyses and renderers built on top of them.

pub mod distinguisher;
pub mod dreamer;
pub mod embedding;
pub mod env;
pub mod error;
pub mod filters;
pub mod model;
pub mod nn;
pub mod patches;
pub mod rng;
pub mod robustness;
pub mod synth;
pub mod tensor;
pub mod viz;

pub use error::{Error, Result};
pub use nn::{ActivationTrace, HeadKind, Net, NetworkSpec, Objective};
pub use tensor::Tensor;
