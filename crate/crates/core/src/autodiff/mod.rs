//! Self-contained differentiation engine and network zoo.

pub mod network;
pub mod tape;

pub use network::{
    build_network, epoch_seed, Activation, Architecture, EvalOutput, Mode, Network, NetworkConfig,
};
pub use tape::{silu, Gradients, NodeId, ParamRef, ParamStore, Tape};
