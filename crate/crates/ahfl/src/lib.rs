//! Deterministic simulator and analytics for asynchronous hierarchical
//! federated learning over a client-edge-cloud topology.
//!
//! The crate has three layers:
//!
//! - [`analytics`]: closed-form expectations for cycle timing, client update
//!   periods, cloud update rate, staleness, and Markov tail bounds.
//! - [`timing`]: an event-driven simulator of the asynchronous cycle and
//!   version dynamics, bit-reproducible per seed.
//! - [`engine`] with [`learning`]: full training runs where the same event
//!   loop drives proximal local SGD, weighted edge aggregation, and
//!   staleness-discounted cloud mixing over a synthetic regression task.
//!
//! [`config`] defines the flat key-value run format and [`export`] the CSV
//! and summary formats; both round-trip exactly.

pub mod analytics;
pub mod config;
pub mod engine;
pub mod export;
pub mod learning;
pub mod seed;
pub mod timing;

mod error;

pub use config::{
    DataConfig, LearningConfig, RawConfig, SystemConfig, TimingConfig, TopologyConfig,
};
pub use error::{Error, Result};
