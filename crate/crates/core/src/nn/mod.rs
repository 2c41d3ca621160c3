//! Dense-tensor engine for the Nature-DQN family of networks.

mod head;
pub(crate) mod kernels;
mod net;
mod ops;
mod optim;
mod spec;

pub use head::{head_forward, HeadOutput};
pub use net::{ActivationTrace, Forward, Net, Objective};
pub use ops::{conv2d_forward, fc_forward, relu};
pub use optim::{adam_step, Adam};
pub use spec::{C51Params, ConvLayerSpec, HeadKind, NetworkSpec, TensorSlot, DEFAULT_CONV_LAYERS};

