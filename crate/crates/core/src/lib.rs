//! Self-supervised dense-reward learning for planar contact-rich insertion.
//!
//! The pipeline: a deterministic planar insertion simulator produces
//! multimodal observations (two camera views plus a force/torque window);
//! backward sampling from the goal state builds a task progress tree; a
//! multimodal encoder is trained with a temporal triplet loss plus a
//! reconstruction loss; the resulting latent distance ratio is packaged as
//! a dense reward; and a desk-scale Soft Actor-Critic consumes that reward
//! (or the sparse / engineered baselines) to train insertion policies.
//!
//! See the crate examples for one runnable entry point per capability.

pub mod error;
pub mod harness;
pub mod model;
pub mod nn;
pub mod reward;
pub mod sac;
pub mod sampler;
pub mod sim;
