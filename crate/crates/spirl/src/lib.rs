//! SPIRL: salient-patch input reinforcement learning.
//!
//! A self-contained pipeline: a tiny masked autoencoder is pre-trained on game
//! frames, per-patch reconstruction errors yield a saliency map, a knee rule on
//! the cumulative error curve picks a varying number of salient patches, and a
//! Transformer-aggregated Q-learning agent is trained on the selected patch
//! embeddings.

pub mod agent;
pub mod config;
pub mod env;
pub mod mae;
pub mod saliency;
pub mod tensor;
pub mod transformer;
pub mod viz;

pub use tensor::{Tape, TensorId};
