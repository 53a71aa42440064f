//! Reinforcement and imitation learning from corrupted rewards and actions
//! using peer-prediction penalties.

pub mod cotrain;
pub mod envs;
pub mod harness;
pub mod learners;
pub mod mdp;
pub mod metrics;
pub mod noise;
pub mod peer;
pub mod peerbc;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod tiebreak;

pub use scalar::{Field, Scalar};

pub type MdpF64 = mdp::TabularMdp<f64>;
pub type MdpF32 = mdp::TabularMdp<f32>;
pub type RewardChannelF64 = noise::RewardChannel<f64>;
pub type RewardChannelF32 = noise::RewardChannel<f32>;
pub type ActionChannelF64 = noise::ActionChannel<f64>;
pub type ActionChannelF32 = noise::ActionChannel<f32>;
