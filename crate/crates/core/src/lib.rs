//! Reward models for vision-based reinforcement learning, specified in
//! natural language.
//!
//! A pretrained contrastive image-text encoder maps a task description (the
//! *goal prompt*) and rendered environment observations into one embedding
//! space; the cosine similarity between them is used directly as the reward
//! signal, optionally sharpened by projecting state embeddings toward the
//! direction between a *baseline* prompt and the goal prompt. The crate
//! provides:
//!
//! - [`encoder`]: an encoder registry, batched image/text embedding, a
//!   deterministic preprocessing pipeline, and a fully synthetic mock encoder
//!   so everything downstream runs without model weights;
//! - [`reward`]: the pure reward mathematics (cosine reward, goal-baseline
//!   regularization, batch labeling);
//! - [`envs`]: classic-control environments with termination removed, custom
//!   software rendering, and one-dimensional state sweeps;
//! - [`rl`]: an off-policy training harness (DQN and SAC) that defers reward
//!   labeling to batched encoder calls through an unlabeled/labeled buffer
//!   pair;
//! - [`eval`]: EPIC distance between reward models and goal labels, success
//!   rates, reward landscapes, label-file ingestion, and per-class reward
//!   histograms;
//! - [`config`]: declarative run configuration with bundled profiles and a
//!   prompt registry.

pub mod config;
pub mod encoder;
pub mod envs;
pub mod error;
pub mod eval;
pub mod reward;
pub mod rl;

pub(crate) mod parallel;

pub use error::{Error, Result};
