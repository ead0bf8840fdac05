//! Collective predictive coding at desk scale.
//!
//! Agents receive private, noisy views of a shared environment, learn
//! sign-conditioned Gaussian representations of it, and negotiate a shared
//! sign system through a Metropolis–Hastings naming game. The [`alignment`]
//! module measures how the relational structure of their internal
//! representations compares, both with known correspondences (RSA) and
//! without them (entropic Gromov–Wasserstein).
//!
//! Module map:
//!
//! * [`world`]: synthetic environments and per-agent observation channels.
//! * [`agent`]: Normal–Inverse-Wishart sign models and posterior predictive.
//! * [`naming_game`]: the communication protocol and its baselines.
//! * [`alignment`]: RDMs, RSA, Sinkhorn, Gromov–Wasserstein, agreement metrics.
//! * [`experiments`]: config-driven runner, persistence and summaries.

pub mod agent;
pub mod alignment;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod naming_game;
pub mod rng;
pub mod stats;
pub mod world;

pub use error::{CpcError, Result};
