//! Experiment runner for world value functions on gridworlds: seeded
//! multi-run training with CSV logs and aggregated learning curves,
//! zero-shot transfer, dynamics inference, exact solutions and SVG
//! renderings.

pub mod config;
pub mod experiment;
pub mod output;
pub mod svg;

pub use config::{AgentKind, ExperimentConfig, ExperimentKind, WvfSource};
pub use experiment::{run, run_learning, Command, LearnOutcome, Report};
