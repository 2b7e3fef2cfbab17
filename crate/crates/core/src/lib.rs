//! World value functions for deterministic episodic MDPs.
//!
//! A world value function `Q(s, g, a)` is learned under an extended reward
//! that penalises terminating anywhere other than the intended goal `g`.
//! This crate provides:
//!
//! - deterministic MDPs, the background/terminal task decomposition and the
//!   Four Rooms gridworld ([`mdp`], [`four_rooms`]);
//! - the WVF table, task value extraction and zero-shot transfer
//!   ([`wvf`], [`transfer`]);
//! - Q-learning and Dyna training loops ([`learning`], [`planning`]);
//! - exact dynamic-programming solutions for checking all of the above
//!   ([`oracle`]);
//! - text snapshots of value tables ([`snapshot`]).
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar type.

pub mod error;
pub mod four_rooms;
pub mod learning;
pub mod mdp;
pub mod oracle;
pub mod planning;
mod scalar;
pub mod snapshot;
pub mod transfer;
pub mod wvf;

pub use error::{Result, WvfError};
pub use mdp::{ActionId, DeterministicMdp, StateId, TaskSpec, Transition};
pub use scalar::Scalar;
pub use wvf::{GoalBuffer, QTable, Wvf};

pub type Mdp64 = DeterministicMdp<f64>;
pub type Mdp32 = DeterministicMdp<f32>;
pub type Task64 = TaskSpec<f64>;
pub type Task32 = TaskSpec<f32>;
pub type Wvf64 = Wvf<f64>;
pub type Wvf32 = Wvf<f32>;
pub type QTable64 = QTable<f64>;
pub type QTable32 = QTable<f32>;
