//! Cooperative multi-agent value decomposition with selective state-space
//! encoders, attention-based training-time communication, and progressive
//! regeneration of the communicated signal so that trained agents act on
//! local information only.
//!
//! Module map:
//!
//! - [`numcore`]: tensors, reverse-mode autodiff, parameters, checkpoints
//! - [`ssm`]: mini-buffer, gating unit and the selective (S6) state-space layer
//! - [`comm`]: attention over agents' hidden states ("true information")
//! - [`regen`]: regeneration block, cross-information and transition schedules
//! - [`mixer`]: per-agent Q head, QMIX and VDN mixers, IGM checks
//! - [`envs`]: small Dec-POMDPs with exact optimal-return oracles
//! - [`trainer`]: rollouts, replay, losses, target networks, ablation presets

pub mod comm;
pub mod encoder;
pub mod envs;
pub mod error;
pub mod mixer;
pub mod numcore;
pub mod regen;
pub mod ssm;
pub mod trainer;

pub use error::{Error, Result};
