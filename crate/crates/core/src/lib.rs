//! Success-rate-aware, step-level policy optimization for multi-turn agents.
//!
//! The crate is organized around one training round:
//!
//! 1. [`tracker`] keeps a smoothed success rate per task and derives the
//!    cache of tasks with intermediate success.
//! 2. [`allocator`] expands each task into `N` rollout slots and hands
//!    copies of well-solved tasks to cached ones.
//! 3. [`envsim`] plays the episodes; [`policy`] chooses the actions.
//! 4. [`advantage`] scores trajectories and splits them into step samples.
//! 5. [`augment`] expands low-success steps into locally normalized groups.
//! 6. [`policy`] applies a clipped policy-gradient update.
//!
//! [`harness`] wires these into complete experiments for every method and
//! ablation. The `book/` directory next to the workspace walks through the
//! pieces with runnable examples.

pub mod advantage;
pub mod allocator;
pub mod augment;
pub mod envsim;
pub mod error;
pub mod harness;
pub mod policy;
pub mod tracker;
pub mod types;

pub use error::{Error, Result};
pub use types::{Action, History, Observation, State, Step, StepSample, TaskId, Trajectory};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tracker.md")]
    mod tracker {}
    #[doc = include_str!("../../../book/src/allocation.md")]
    mod allocation {}
    #[doc = include_str!("../../../book/src/advantages.md")]
    mod advantages {}
    #[doc = include_str!("../../../book/src/augmentation.md")]
    mod augmentation {}
    #[doc = include_str!("../../../book/src/policy.md")]
    mod policy {}
    #[doc = include_str!("../../../book/src/environment.md")]
    mod environment {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
