//! Goal-conditioned supervised learning (GCSL).
//!
//! An agent collects trajectories with its current policy, relabels every
//! (state, action) pair with a goal that was actually reached later in the
//! same trajectory, and fits the policy to the relabeled data by maximum
//! likelihood. This crate holds the algorithmic pieces:
//!
//! - [`env`]: goal-reaching environments (continuous four rooms, gridworlds, chains)
//! - [`policy`]: tabular and MLP categorical policies, Adam, horizon encoding
//! - [`buffer`]: trajectory store with on-the-fly hindsight relabeling
//! - [`trainer`]: the collect / relabel / fit loop and its ablations
//! - [`eval`]: rollout-based evaluation
//! - [`oracle`]: exact objectives and bound checks on small finite MDPs
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! and the command line live in the `gcsl` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod buffer;
pub mod env;
pub mod error;
pub mod eval;
pub mod oracle;
pub mod policy;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
