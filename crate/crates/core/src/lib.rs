//! Tabular Q-learning with a Time Hopping acceleration layer.
//!
//! - [`mdp`]: identifiers, the Q-table, the environment contract.
//! - [`qlearning`]: the ε-greedy Q-learning baseline.
//! - [`hopping`]: gamma-pruning and fixed triggers, lasso and random target
//!   selection, and the hopping training loop.
//! - [`crawler`], [`chain`]: the environments.
//! - [`oracles`]: exact solutions used as ground truth.
//! - [`harness`]: seeded multi-run experiments and CSV output.

pub mod chain;
pub mod crawler;
pub mod error;
pub mod harness;
pub mod hopping;
pub mod mdp;
pub mod oracles;
pub mod qlearning;
pub mod toy;

pub use error::{Error, Result};
